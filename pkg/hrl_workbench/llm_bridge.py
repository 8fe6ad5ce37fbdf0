# hrl_workbench/llm_bridge.py

import hashlib
import logging
import os
import re
import tempfile
import threading
import time
import warnings
from concurrent.futures import Future
from pathlib import Path
from typing import Callable, Iterator, Literal, Mapping, NamedTuple, Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from hrl_workbench.config import LLM_BASE_URL, LLM_MODEL, OPENAI_API_KEY
from hrl_workbench.core import GoalInstruction, Skill, TrajectorySummary, render_traj
from hrl_workbench.envs import plans_for_goal
from hrl_workbench.errors import BackendError, CacheFormatError, ConfigError, UnknownTaskError, UnparsableAnswerWarning

logger = logging.getLogger(__name__)


# --- Prompt templating ---
class FewShotExample(BaseModel):
    model_config = ConfigDict(frozen=True)

    goal: str
    traj: str
    skill: str
    answer: Literal["Yes", "No"]


class PromptTemplate(BaseModel):
    model_config = ConfigDict(frozen=True)

    preamble: str
    few_shot: tuple[FewShotExample, ...] = ()

    @staticmethod
    def render_query(goal_text: str, traj_text: str, skill_text: str) -> str:
        return f"Goal: {goal_text}\nSo far: {traj_text}\nQuestion: Should I {skill_text}?\nAnswer:"

    def render_exemplars(self) -> list[str]:
        return [f"{self.render_query(ex.goal, ex.traj, ex.skill)} {ex.answer}" for ex in self.few_shot]

    def system_text(self) -> str:
        """Preamble plus few-shot block: the part of the prompt shared by every query."""
        return "\n\n".join([self.preamble, *self.render_exemplars()])


def build_prompt(template: PromptTemplate, goal: GoalInstruction, traj: TrajectorySummary, skill: Skill) -> str:
    query = template.render_query(goal.text, render_traj(traj), skill.description)
    return "\n\n".join([template.system_text(), query])


def prompt_messages(template: PromptTemplate, goal: GoalInstruction, traj: TrajectorySummary, skill: Skill) -> list[tuple[str, str]]:
    return [
        ("system", template.system_text()),
        ("user", template.render_query(goal.text, render_traj(traj), skill.description)),
    ]


_LEADING_WORD = re.compile(r"[^A-Za-z]*([A-Za-z]+)")


def parse_answer(raw: str) -> int:
    """Map a one-word answer to a relevance bit. Anything but yes/no is a warned 0."""
    match = _LEADING_WORD.match(raw or "")
    token = match.group(1).lower() if match else ""
    if token == "yes":
        return 1
    if token == "no":
        return 0
    logger.warning("Unparsable relevance answer %r; treating skill as not suggested.", raw)
    warnings.warn(f"unparsable relevance answer {raw!r}", UnparsableAnswerWarning, stacklevel=2)
    return 0


# --- Cache ---
class CacheKey(NamedTuple):
    backend_id: str
    goal_text: str
    traj_text: str
    skill_text: str


class PromptCache:
    """Relevance bits keyed by (backend, goal, traj, skill).

    get_or_insert computes each key at most once. Concurrent callers asking for
    the same missing key wait on the first caller's result; other keys are
    served without waiting.
    """

    def __init__(self, entries: Mapping[CacheKey, int] | None = None):
        self._entries: dict[CacheKey, int] = dict(entries or {})
        self._pending: dict[CacheKey, Future] = {}
        self._lock = threading.Lock()

    def get_or_insert(self, key: CacheKey, compute: Callable[[], int]) -> int:
        with self._lock:
            if key in self._entries:
                return self._entries[key]
            future = self._pending.get(key)
            owner = future is None
            if owner:
                future = self._pending[key] = Future()
        if not owner:
            return future.result()
        try:
            bit = int(compute())
        except BaseException as exc:
            with self._lock:
                del self._pending[key]
            future.set_exception(exc)
            raise
        with self._lock:
            self._entries[key] = bit
            del self._pending[key]
        future.set_result(bit)
        return bit

    def items(self) -> list[tuple[CacheKey, int]]:
        with self._lock:
            return sorted(self._entries.items())

    def backend_ids(self) -> set[str]:
        with self._lock:
            return {key.backend_id for key in self._entries}

    def filter(self, backend_id: str) -> "PromptCache":
        return PromptCache({k: v for k, v in self.items() if k.backend_id == backend_id})

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[CacheKey]:
        return iter([key for key, _ in self.items()])

    def __contains__(self, key: object) -> bool:
        with self._lock:
            return key in self._entries

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PromptCache):
            return NotImplemented
        return self.items() == other.items()


def persist_cache(cache: PromptCache, path: str | os.PathLike) -> None:
    path = Path(path)
    lines = []
    for key, bit in cache.items():
        for field in key:
            if "\t" in field or "\n" in field:
                raise CacheFormatError(f"field {field!r} contains a tab or newline", str(path), None)
        lines.append("\t".join([*key, str(bit)]) + "\n")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.writelines(lines)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    logger.info("Persisted %d cached relevance answers to %s", len(lines), path)


def load_cache(path: str | os.PathLike) -> PromptCache:
    path = Path(path)
    entries: dict[CacheKey, int] = {}
    with open(path, "rb") as handle:
        for lineno, raw in enumerate(handle, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise CacheFormatError(f"invalid UTF-8 at byte {exc.start}", str(path), lineno) from exc
            if not line.endswith("\n"):
                raise CacheFormatError("truncated record (missing newline)", str(path), lineno)
            fields = line[:-1].split("\t")
            if len(fields) != 5:
                raise CacheFormatError(f"expected 5 tab-separated fields, found {len(fields)}", str(path), lineno)
            if fields[4] not in ("0", "1"):
                raise CacheFormatError(f"relevance bit must be 0 or 1, found {fields[4]!r}", str(path), lineno)
            entries[CacheKey(*fields[:4])] = int(fields[4])
    return PromptCache(entries)


# --- Backends ---
class BackendConfig(BaseModel):
    kind: Literal["http", "scripted", "replay"] = "scripted"
    endpoint_url: str = LLM_BASE_URL
    model_name: str = LLM_MODEL
    temperature: float = 0.0
    max_retries: int = Field(3, ge=0)
    timeout: float = Field(30.0, gt=0)
    retry_backoff: float = Field(1.0, ge=0)
    noise: float = Field(0.0, ge=0.0, le=1.0, description="Scripted oracle bit-flip probability")
    replay_path: str | None = None
    replay_source: str | None = None

    @field_validator("temperature")
    @classmethod
    def _deterministic(cls, value: float) -> float:
        if value != 0.0:
            raise ValueError("relevance queries run at temperature 0.0")
        return value


class RelevanceBackend(Protocol):
    backend_id: str
    calls: int

    def answer(self, goal: GoalInstruction, traj: TrajectorySummary, skill: Skill) -> str: ...


def admissible_next(plans: list[list[str]], traj: tuple[str, ...]) -> set[str]:
    """Skills that continue some ground-truth plan, given the recent (completed) skills."""
    vocabulary = {step for plan in plans for step in plan}
    recent = [s for s in traj if s in vocabulary]
    if not recent:
        return {plan[0] for plan in plans if plan}
    best, candidates = 0, set()
    for plan in plans:
        for j in range(1, len(plan) + 1):
            m = 0
            while m < len(recent) and m < j and plan[j - 1 - m] == recent[-1 - m]:
                m += 1
            if m == 0:
                continue
            nxt = {plan[j]} if j < len(plan) else set()
            if m > best:
                best, candidates = m, set(nxt)
            elif m == best:
                candidates |= nxt
    return candidates


def scripted_oracle(goal: GoalInstruction | str, traj: TrajectorySummary, skill: Skill | str,
                    noise: float = 0.0, rng: np.random.Generator | None = None) -> int:
    goal_text = goal.text if isinstance(goal, GoalInstruction) else goal
    skill_text = skill.description if isinstance(skill, Skill) else skill
    plans = plans_for_goal(goal_text)
    if plans is None:
        raise UnknownTaskError(f"goal {goal_text!r} belongs to no known task family")
    bit = int(skill_text in admissible_next(plans, traj.recent_skills))
    if noise > 0.0:
        if rng is None:
            raise ValueError("a seeded generator is required when noise > 0")
        if rng.random() < noise:
            bit = 1 - bit
    return bit


def stable_hash(*fields: str) -> int:
    digest = hashlib.sha256("\t".join(fields).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class ScriptedBackend:
    """Offline stand-in for the LLM, answering from the task's ground-truth sub-goal plans."""

    def __init__(self, noise: float = 0.0, seed: int = 0):
        self.noise = noise
        self.seed = seed
        self.calls = 0
        self.backend_id = "scripted" if noise == 0.0 else f"scripted:eps={noise:g}:seed={seed}"

    def answer(self, goal: GoalInstruction, traj: TrajectorySummary, skill: Skill) -> str:
        self.calls += 1
        rng = None
        if self.noise > 0.0:
            # noise per query, independent of the order queries arrive in
            rng = np.random.default_rng([self.seed, stable_hash(goal.text, render_traj(traj), skill.description)])
        bit = scripted_oracle(goal, traj, skill, noise=self.noise, rng=rng)
        return "Yes" if bit else "No"


class HttpBackend:
    """OpenAI-compatible chat completions through LangChain, one word per answer."""

    def __init__(self, config: BackendConfig, template: PromptTemplate, chat_model=None):
        self.config = config
        self.template = template
        self.calls = 0
        self.backend_id = f"http:{config.model_name}"
        if chat_model is None:
            if not OPENAI_API_KEY:
                raise ConfigError("OPENAI_API_KEY is not set; the http backend reads its token from the environment.")
            from langchain_openai import ChatOpenAI

            chat_model = ChatOpenAI(
                model=config.model_name,
                base_url=config.endpoint_url,
                api_key=OPENAI_API_KEY,
                temperature=0.0,
                max_tokens=4,
                timeout=config.timeout,
                max_retries=0,
            )
        self.chat_model = chat_model

    def answer(self, goal: GoalInstruction, traj: TrajectorySummary, skill: Skill) -> str:
        messages = prompt_messages(self.template, goal, traj, skill)
        last_err = None
        attempts = self.config.max_retries + 1
        self.calls += 1
        for attempt in range(attempts):
            try:
                response = self.chat_model.invoke(messages)
                return str(response.content)
            except Exception as exc:
                last_err = exc
                logger.warning("LLM request attempt %d/%d failed: %r", attempt + 1, attempts, exc)
                if attempt + 1 < attempts:
                    time.sleep(self.config.retry_backoff * (attempt + 1))
        raise BackendError(f"LLM request failed after {attempts} attempts: {last_err}")


class ReplayBackend:
    """Answers recorded earlier by another backend; never reaches the network."""

    def __init__(self, answers: Mapping[tuple[str, str, str], int], source: str):
        self.answers = dict(answers)
        self.source = source
        self.calls = 0
        self.backend_id = f"replay:{source}"

    @classmethod
    def from_file(cls, path: str | os.PathLike, source: str) -> "ReplayBackend":
        cache = load_cache(path).filter(source)
        answers = {(k.goal_text, k.traj_text, k.skill_text): bit for k, bit in cache.items()}
        logger.info("Loaded %d replay answers for %s from %s", len(answers), source, path)
        return cls(answers, source)

    def answer(self, goal: GoalInstruction, traj: TrajectorySummary, skill: Skill) -> str:
        self.calls += 1
        key = (goal.text, render_traj(traj), skill.description)
        if key not in self.answers:
            raise BackendError(f"replay of {self.source} has no answer for {key!r}")
        return "Yes" if self.answers[key] else "No"


def make_backend(config: BackendConfig, template: PromptTemplate, seed: int = 0) -> RelevanceBackend:
    if config.kind == "scripted":
        return ScriptedBackend(noise=config.noise, seed=seed)
    if config.kind == "http":
        return HttpBackend(config, template)
    if not config.replay_path or not config.replay_source:
        raise ConfigError("replay backend needs replay_path and replay_source")
    return ReplayBackend.from_file(config.replay_path, config.replay_source)


def query_relevance(backend: RelevanceBackend, cache: PromptCache, goal: GoalInstruction,
                    traj: TrajectorySummary, skill: Skill) -> int:
    key = CacheKey(backend.backend_id, goal.text, render_traj(traj), skill.description)
    return cache.get_or_insert(key, lambda: parse_answer(backend.answer(goal, traj, skill)))
