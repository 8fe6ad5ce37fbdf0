# hrl_workbench/envs/blockworld.py

import re
from collections import deque
from typing import Any

import numpy as np

from hrl_workbench.core import Skill
from hrl_workbench.envs.base import Environment, SkillOutcome, failed

ZONES = (0, 1, 2)
BLOCKS = ("red", "green")
IN_TRAY = "in_tray"
HELD = "held"

DESK_GOAL = re.compile(r"^put the red block and the green block in the tray in zone (\d)$")
SWAP_GOAL = re.compile(r"^swap the red block in zone (\d) and the green block in zone (\d)$")

# (holding, red_location, green_location)
BlockState = tuple[str | None, Any, Any]


class BlockWorld(Environment):
    """A robot arm over three table zones with a red block, a green block and, for clean-up, a tray."""

    task_ids = ("DeskCleanUp", "SwapBlocks")

    def __init__(self, task_id: str, **kwargs):
        self.arm_location = 0
        self.holding: str | None = None
        self.locations: dict[str, Any] = {"red": 0, "green": 1}
        self.tray_zone: int | None = None
        self.swap_zones: tuple[int, int] | None = None
        super().__init__(task_id, **kwargs)

    @classmethod
    def skill_descriptions(cls, task_id: str) -> list[str]:
        return [f"pick:{b}" for b in BLOCKS] + [f"place:zone{z}" for z in ZONES] + ["place:tray"]

    @classmethod
    def plans_for_goal(cls, goal_text: str) -> list[list[str]] | None:
        if DESK_GOAL.match(goal_text):
            return [
                ["pick:red", "place:tray", "pick:green", "place:tray"],
                ["pick:green", "place:tray", "pick:red", "place:tray"],
            ]
        match = SWAP_GOAL.match(goal_text)
        if match is None:
            return None
        a, b = int(match.group(1)), int(match.group(2))
        (empty,) = set(ZONES) - {a, b}
        return [
            ["pick:red", f"place:zone{empty}", "pick:green", f"place:zone{a}", "pick:red", f"place:zone{b}"],
            ["pick:green", f"place:zone{empty}", "pick:red", f"place:zone{b}", "pick:green", f"place:zone{a}"],
        ]

    def _build(self, goal_rng: np.random.Generator, layout_rng: np.random.Generator) -> str:
        self.holding = None
        self.arm_location = int(layout_rng.integers(len(ZONES)))
        if self.task_id == "DeskCleanUp":
            self.tray_zone = int(goal_rng.integers(len(ZONES)))
            self.swap_zones = None
            free = [z for z in ZONES if z != self.tray_zone]
            order = layout_rng.permutation(free)
            self.locations = {"red": int(order[0]), "green": int(order[1])}
            return f"put the red block and the green block in the tray in zone {self.tray_zone}"
        a, b = (int(z) for z in goal_rng.permutation(ZONES)[:2])
        self.tray_zone = None
        self.swap_zones = (a, b)
        self.locations = {"red": a, "green": b}
        return f"swap the red block in zone {a} and the green block in zone {b}"

    # --- Transition model shared by the controller and the oracle ---
    def _state(self) -> BlockState:
        return self.holding, self.locations["red"], self.locations["green"]

    def _transition(self, state: BlockState, description: str) -> BlockState | str:
        """Next abstract state, or the failure reason when the skill does not apply."""
        holding, red, green = state
        where = {"red": red, "green": green}
        verb, arg = description.split(":")
        if verb == "pick":
            if holding is not None:
                return "hands full"
            where[arg] = HELD
            return arg, where["red"], where["green"]
        if holding is None:
            return "nothing held"
        if arg == "tray":
            if self.tray_zone is None:
                return "no tray"
            where[holding] = IN_TRAY
        else:
            zone = int(arg.removeprefix("zone"))
            if zone == self.tray_zone:
                return "zone holds the tray"
            if zone in where.values():
                return "zone occupied"
            where[holding] = zone
        return None, where["red"], where["green"]

    def _goal_reached(self, state: BlockState) -> bool:
        holding, red, green = state
        if holding is not None:
            return False
        if self.tray_zone is not None:
            return red == IN_TRAY and green == IN_TRAY
        a, b = self.swap_zones
        return red == b and green == a

    def _zone_of(self, block: str) -> int:
        location = self.locations[block]
        return self.tray_zone if location == IN_TRAY else location

    def _run_skill(self, skill: Skill) -> SkillOutcome:
        result = self._transition(self._state(), skill.description)
        if isinstance(result, str):
            return failed(result)
        verb, arg = skill.executor_ref
        if verb == "pick":
            zone = self._zone_of(arg)
        else:
            zone = self.tray_zone if arg == "tray" else int(arg.removeprefix("zone"))
        steps = abs(self.arm_location - zone) + 1
        self.arm_location = zone
        self.holding, self.locations["red"], self.locations["green"] = result
        return SkillOutcome(completed=True, primitive_steps_used=steps)

    def _is_success(self) -> bool:
        return self._goal_reached(self._state())

    def observation(self) -> dict[str, Any]:
        return {
            "task": self.task_id,
            "goal": self.goal.text if self.goal else "",
            "arm": self.arm_location,
            "holding": self.holding,
            "red": self.locations["red"],
            "green": self.locations["green"],
        }

    def subgoals_achieved(self) -> set[str]:
        achieved = set()
        if self.tray_zone is not None:
            achieved |= {f"{b}:{IN_TRAY}" for b in BLOCKS if self.locations[b] == IN_TRAY}
        else:
            a, b = self.swap_zones
            if self.locations["red"] == b:
                achieved.add(f"red:zone{b}")
            if self.locations["green"] == a:
                achieved.add(f"green:zone{a}")
        return achieved

    def oracle_next(self) -> int:
        """First skill of a shortest plan, found by breadth-first search in skill-id order."""
        start = self._state()
        queue = deque([(start, None)])
        seen = {start}
        while queue:
            state, first = queue.popleft()
            for skill in self._skills:
                result = self._transition(state, skill.description)
                if isinstance(result, str) or result in seen:
                    continue
                head = skill.id if first is None else first
                if self._goal_reached(result):
                    return head
                seen.add(result)
                queue.append((result, head))
        raise RuntimeError(f"no plan reaches the goal from {start}")

    def render(self) -> str:
        cells = []
        for zone in ZONES:
            content = [b[0].upper() for b in BLOCKS if self.locations[b] == zone]
            if zone == self.tray_zone:
                content = ["T:" + "".join(b[0].upper() for b in BLOCKS if self.locations[b] == IN_TRAY)]
            arm = "*" if zone == self.arm_location else " "
            cells.append(f"{arm}zone{zone}[{''.join(content)}]")
        lines = [
            f"arm_location={self.arm_location}",
            f"holding={self.holding or 'none'}",
            f"red_location={self.locations['red']}",
            f"green_location={self.locations['green']}",
            " ".join(cells),
        ]
        if self.goal is not None:
            lines.append(f"Goal: {self.goal.text}")
        return "\n".join(lines)
