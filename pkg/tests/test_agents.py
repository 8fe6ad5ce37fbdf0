import numpy as np
import pytest

from hrl_workbench.agents import (
    OracleAgent,
    PolicyHyper,
    QHyper,
    QTable,
    SayCanAgent,
    SoftmaxPolicy,
    clipped_surrogate,
    discounted_returns,
    select_action,
    surrogate_gradient,
    update_policy_gradient,
    update_q,
)
from hrl_workbench.core import DecisionRecord, FlagVector
from hrl_workbench.envs import make_env
from hrl_workbench.errors import CheckpointFormatError
from hrl_workbench.priors import biased_distribution, log_softmax, uniform_prior


def record(state="s", action=0, reward=0.0, next_state="t", terminal=False, lam=0.0):
    return DecisionRecord(state_key=state, skill_id=action, lambda_used=lam, reward=reward,
                          next_state_key=next_state, terminal=terminal, success=terminal and reward > 0)


def prior(*flags):
    return log_softmax(FlagVector(flags=flags))


# --- Action selection ---
def test_unseen_state_with_full_bias_matches_prior_shape():
    policy = SoftmaxPolicy(4)
    dist = biased_distribution(policy.logits("unseen"), prior(0, 1, 0, 0), 1.0)
    assert dist.probs == pytest.approx([0.17487, 0.47537, 0.17487, 0.17487], abs=1e-5)


def test_zero_lambda_ignores_prior():
    policy = SoftmaxPolicy(4)
    policy.logits_table["s"] = np.array([0.5, 0.0, -0.5, 1.0])
    a = [select_action(policy, "s", prior(1, 0, 0, 0), 0.0, np.random.default_rng(i)) for i in range(50)]
    b = [select_action(policy, "s", prior(0, 0, 0, 1), 0.0, np.random.default_rng(i)) for i in range(50)]
    assert a == b


def test_saycan_takes_lowest_argmax():
    agent = SayCanAgent()
    assert agent.select_action("s", prior(1, 0, 1), 0.0, np.random.default_rng(0)) == 0
    assert agent.select_action("s", prior(0, 0, 1), 1.0, np.random.default_rng(0)) == 2
    assert agent.requires_prior and not agent.learns


def test_oracle_agent_reads_environment():
    env = make_env("UnlockReach")
    env.reset(0)
    assert OracleAgent().select_action("s", uniform_prior(20), 1.0, np.random.default_rng(0), env=env) == env.oracle_next()
    with pytest.raises(ValueError):
        OracleAgent().select_action("s", uniform_prior(20), 1.0, np.random.default_rng(0))


def test_q_table_samples_boltzmann_over_q():
    table = QTable(3, QHyper(temperature=0.5))
    table.q["s"] = np.array([1.0, 0.0, 0.0])
    rng = np.random.default_rng(0)
    draws = [table.select_action("s", uniform_prior(3), 0.0, rng) for _ in range(4000)]
    expected = np.exp([2.0, 0.0, 0.0]) / np.exp([2.0, 0.0, 0.0]).sum()
    assert np.bincount(draws, minlength=3) / 4000 == pytest.approx(expected, abs=0.03)


# --- Policy gradient ---
def test_discounted_returns():
    assert discounted_returns([0.0, 0.0, 1.0], 0.5) == pytest.approx([0.25, 0.5, 1.0])
    assert discounted_returns([0.0], 0.5, bootstrap=2.0) == pytest.approx([1.0])
    assert discounted_returns([], 0.9) == []


def test_zero_advantage_leaves_logits_unchanged():
    policy = SoftmaxPolicy(4)
    update_policy_gradient(policy, [record("a", 1), record("b", 2, terminal=True)])
    assert policy.logits_table == {}


def test_empty_episode_is_a_no_op():
    policy = SoftmaxPolicy(3)
    assert update_policy_gradient(policy, []) is policy
    assert policy.value_table == {}


def test_rewarded_action_gains_probability_mass():
    policy = SoftmaxPolicy(4)
    update_policy_gradient(policy, [record("s", 2, reward=1.0, terminal=True)])
    logits = policy.logits("s")
    assert logits[2] > 0
    assert all(logits[i] < 0 for i in (0, 1, 3))
    assert policy.value("s") == pytest.approx(0.1)


def test_surrogate_gradient_vanishes_outside_clip_range():
    old = np.zeros(2)
    pushed = np.array([2.0, 0.0])  # ratio 0.88 / 0.5 = 1.76
    assert np.all(surrogate_gradient(pushed, old, 0, advantage=1.0, clip=0.2) == 0.0)
    assert np.any(surrogate_gradient(pushed, old, 0, advantage=-1.0, clip=0.2) != 0.0)
    assert np.all(surrogate_gradient(-pushed, old, 0, advantage=-1.0, clip=0.2) == 0.0)


def test_repeated_updates_stop_at_clip_boundary():
    hyper = PolicyHyper(learning_rate=5.0, epochs=4)
    policy = SoftmaxPolicy(2, hyper)
    update_policy_gradient(policy, [record("s", 0, reward=1.0, terminal=True)])
    first_epoch_only = SoftmaxPolicy(2, PolicyHyper(learning_rate=5.0, epochs=1))
    update_policy_gradient(first_epoch_only, [record("s", 0, reward=1.0, terminal=True)])
    # one step already pushes the ratio past 1.2, so later epochs contribute nothing
    ratio = np.exp(first_epoch_only.logits("s"))[0] / np.exp(first_epoch_only.logits("s")).sum() / 0.5
    assert ratio > 1.2
    assert np.allclose(policy.logits("s"), first_epoch_only.logits("s"))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    checked = 0
    for _ in range(100):
        k = int(rng.integers(2, 7))
        old = rng.normal(size=k)
        new = old + 0.05 * rng.normal(size=k)
        action = int(rng.integers(k))
        advantage = float(rng.normal())
        grad = surrogate_gradient(new, old, action, advantage, 0.2)
        if not np.any(grad):
            continue
        eps = 1e-6
        fd = np.array([
            (clipped_surrogate(new + eps * np.eye(k)[i], old, action, advantage, 0.2)
             - clipped_surrogate(new - eps * np.eye(k)[i], old, action, advantage, 0.2)) / (2 * eps)
            for i in range(k)
        ])
        cosine = grad @ fd / (np.linalg.norm(grad) * np.linalg.norm(fd))
        assert cosine > 0.99
        checked += 1
    assert checked > 80


def test_update_ignores_lambda_used():
    episode_greedy = [record("a", 1, lam=0.0), record("b", 3, reward=1.0, terminal=True, lam=0.0)]
    episode_biased = [record("a", 1, lam=1.0), record("b", 3, reward=1.0, terminal=True, lam=1.0)]
    p, q = SoftmaxPolicy(4), SoftmaxPolicy(4)
    update_policy_gradient(p, episode_greedy)
    update_policy_gradient(q, episode_biased)
    for key in ("a", "b"):
        assert np.array_equal(p.logits(key), q.logits(key))
    assert p.value_table == q.value_table


def test_truncated_episode_bootstraps_from_value():
    policy = SoftmaxPolicy(2)
    policy.value_table["end"] = 1.0
    update_policy_gradient(policy, [record("s", 0, reward=0.0, next_state="end", terminal=False)])
    assert policy.logits("s")[0] > 0


# --- Q-learning ---
def test_terminal_update():
    table = QTable(3)
    update_q(table, record("s", 1, reward=1.0, terminal=True))
    assert table.row("s")[1] == pytest.approx(0.2)


def test_q_decays_without_reward():
    table = QTable(2)
    table.q["s"] = np.array([0.5, 0.0])
    update_q(table, record("s", 0, reward=0.0, next_state="t"))
    assert table.row("s")[0] == pytest.approx(0.4)


def test_two_state_chain_converges():
    table = QTable(2)
    chain = [record("s0", 0, next_state="s1"), record("s1", 0, reward=1.0, terminal=True)]
    for _ in range(10_000):
        for r in chain:
            table.observe(r)
    assert table.row("s1")[0] == pytest.approx(1.0, abs=1e-6)
    assert table.row("s0")[0] == pytest.approx(0.95, abs=1e-6)
    assert table.max_abs() <= 1 / (1 - 0.95)


# --- Checkpoints ---
def test_policy_checkpoint_round_trip(tmp_path):
    policy = SoftmaxPolicy(3)
    policy.logits_table = {"carrying=none": np.array([0.1234567891, -2.0, 0.0]), "x=1": np.array([1.0, 2.0, 3.0])}
    policy.value_table = {"carrying=none": 0.5}
    path = tmp_path / "ckpt" / "seed_0.tsv"
    policy.save_table(path)
    restored = SoftmaxPolicy(3)
    restored.load_table(path)
    assert restored.logits_table.keys() == policy.logits_table.keys()
    for key, row in policy.logits_table.items():
        assert np.allclose(restored.logits_table[key], row, atol=1e-10)
    assert restored.value_table == pytest.approx(policy.value_table)
    assert path.read_text(encoding="utf-8").splitlines()[0] == "carrying=none\t0.1234567891\t-2.0000000000\t0.0000000000"


def test_q_checkpoint_round_trip(tmp_path):
    table = QTable(2)
    table.q = {"s": np.array([0.2, 0.04])}
    table.save_table(tmp_path / "q.tsv")
    restored = QTable(2)
    restored.load_table(tmp_path / "q.tsv")
    assert np.allclose(restored.row("s"), [0.2, 0.04])


def test_malformed_checkpoint_is_rejected(tmp_path):
    path = tmp_path / "q.tsv"
    path.write_text("s\t0.1\t0.2\nt\t0.1\n", encoding="utf-8")
    with pytest.raises(CheckpointFormatError) as info:
        QTable(2).load_table(path)
    assert info.value.line == 2
    path.write_text("s\t0.1\tnope\n", encoding="utf-8")
    with pytest.raises(CheckpointFormatError):
        QTable(2).load_table(path)
