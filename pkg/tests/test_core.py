import pytest
from pydantic import ValidationError

from hrl_workbench.core import (
    DecisionRecord,
    FlagVector,
    PriorVector,
    Skill,
    TrajectorySummary,
    canonical_state_key,
    dense_ids,
    render_traj,
)


def test_render_traj_forms():
    assert render_traj(TrajectorySummary()) == ""
    assert render_traj(TrajectorySummary(recent_skills=("pick:green:key",))) == "pick:green:key"
    two = TrajectorySummary(recent_skills=("pick:green:key", "unlock:green:door"))
    assert render_traj(two) == "pick:green:key, unlock:green:door"


def test_append_to_full_summary_evicts_oldest():
    summary = TrajectorySummary(recent_skills=("a", "b"), window=2)
    appended = summary.append("c")
    assert appended.recent_skills == ("b", "c")
    assert len(appended.recent_skills) == 2
    assert summary.recent_skills == ("a", "b")


def test_summary_longer_than_window_is_rejected():
    with pytest.raises(ValidationError):
        TrajectorySummary(recent_skills=("a", "b", "c"), window=2)


@pytest.mark.parametrize("description", ["", "pick\nkey", "pick\tkey", "pick, key"])
def test_skill_description_rules(description):
    with pytest.raises(ValidationError):
        Skill(id=0, description=description)


def test_skill_executor_ref_stays_out_of_dumps():
    skill = Skill(id=3, description="goto:blue:box", executor_ref=("goto", "blue", "box"))
    assert skill.model_dump() == {"id": 3, "description": "goto:blue:box"}


def test_flag_vector_is_binary():
    assert len(FlagVector(flags=(0, 1, 0))) == 3
    with pytest.raises(ValidationError):
        FlagVector(flags=(0, 2))
    with pytest.raises(ValidationError):
        FlagVector(flags=())


def test_prior_vector_must_be_normalized():
    PriorVector(log_probs=(-0.6931471805599453, -0.6931471805599453))
    with pytest.raises(ValidationError):
        PriorVector(log_probs=(0.0, 0.0))
    with pytest.raises(ValidationError):
        PriorVector(log_probs=(float("-inf"), 0.0))


def test_decision_record_lambda_range():
    fields = dict(state_key="s", skill_id=0, reward=0.0, next_state_key="t", terminal=False, success=False)
    DecisionRecord(lambda_used=0.5, **fields)
    with pytest.raises(ValidationError):
        DecisionRecord(lambda_used=1.5, **fields)


def test_canonical_state_key_sorts_fields():
    key = canonical_state_key({"open": ["green", "red"], "carrying": None, "arm": 2, "empty": []})
    assert key == "arm=2;carrying=none;empty=none;open=green,red"
    assert key == canonical_state_key({"empty": [], "arm": 2, "open": ["green", "red"], "carrying": None})


def test_dense_ids():
    skills = [Skill(id=i, description=f"s{i}") for i in range(3)]
    assert dense_ids(skills)
    assert not dense_ids(skills[1:])
