import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from samo.errors import ConfigError
from samo.policy import ActionSpace
from samo.sac import (ALPHA_FLOOR, Batch, ReplayBuffer, SacLearner, SacParams, Transition,
                      is_mature, q_targets, soft_update_targets, update_alpha, update_critics,
                      update_policy)

CONT = ActionSpace("continuous", 1)
DISC = ActionSpace("discrete", 2)


def make_learner(space=CONT, obs_dim=3, seed=0, **kw):
    return SacLearner(obs_dim, space, SacParams(hidden=(8,), **kw), np.random.default_rng(seed))


def const_net(net, value):
    net.params[...] = 0.0
    net.layers[-1][1][...] = value


def batch_of(n=1, obs_dim=3, action_dim=1, reward=0.0, done=0.0, seed=0):
    rng = np.random.default_rng(seed)
    return Batch(rng.normal(size=(n, obs_dim)), rng.uniform(-0.9, 0.9, size=(n, action_dim)),
                 rng.normal(size=(n, obs_dim)), np.full(n, reward), np.zeros(n),
                 np.full(n, done), np.zeros((n, action_dim)))


class StubPolicy:
    """Returns a fixed action and log-probability for every state."""

    discrete = False

    def __init__(self, logp):
        self.logp = logp

    def sample(self, states, noise):
        n = len(states)
        return np.zeros((n, 1)), np.full(n, self.logp)


def set_alpha(learner, alpha):
    learner.log_alpha[0] = np.log(alpha) if alpha > 0 else -np.inf


# -- q_targets ------------------------------------------------------------------

def test_terminal_target_is_reward():
    ln = make_learner()
    b = batch_of(4, reward=-1.0, done=1.0)
    y = q_targets(b, ln, np.random.default_rng(1))
    assert np.all(y == -1.0)


@pytest.mark.parametrize("alpha, expected", [(0.2, -0.297), (0.0, -0.495)])
def test_soft_target_arithmetic(alpha, expected):
    ln = make_learner()
    const_net(ln.q1_targ, -0.5)
    const_net(ln.q2_targ, 0.3)
    ln.policy = StubPolicy(-1.0)
    set_alpha(ln, alpha)
    y = q_targets(batch_of(2), ln, noise=np.zeros((2, 1)))
    assert y == pytest.approx([expected, expected], abs=1e-12)


def test_twin_swap_leaves_targets_unchanged():
    ln = make_learner(seed=3)
    b = batch_of(8, seed=4)
    noise = np.random.default_rng(5).standard_normal((8, 1))
    y1 = q_targets(b, ln, noise=noise)
    ln.q1_targ, ln.q2_targ = ln.q2_targ, ln.q1_targ
    assert np.array_equal(y1, q_targets(b, ln, noise=noise))


def test_discrete_target_is_exact_expectation():
    ln = make_learner(DISC, seed=2)
    b = batch_of(3, seed=6)
    b.actions = np.array([[0.0], [1.0], [0.0]])
    y = q_targets(b, ln)
    p = ln.policy.probs(b.next_states)
    q = np.minimum(ln.q1_targ.forward(b.next_states), ln.q2_targ.forward(b.next_states))
    v = sum(p[:, a] * (q[:, a] - ln.alpha * np.log(p[:, a])) for a in range(2))
    assert y == pytest.approx(0.99 * v, rel=1e-12)


# -- critics ---------------------------------------------------------------------

def test_zero_td_batch_has_zero_loss():
    ln = make_learner()
    for net in (ln.q1, ln.q2, ln.q1_targ, ln.q2_targ):
        const_net(net, 0.0)
    assert update_critics(batch_of(5, reward=0.0, done=1.0), ln, np.random.default_rng(0)) == 0.0


def test_critic_loss_is_mean_of_item_residuals():
    ln = make_learner(seed=7)
    b = batch_of(6, reward=-1.0, done=1.0, seed=8)
    x = np.concatenate([b.states, b.actions], axis=1)
    r1 = ln.q1.forward(x)[:, 0] + 1.0
    r2 = ln.q2.forward(x)[:, 0] + 1.0
    per_item = [0.5 * (a * a + c * c) for a, c in zip(r1, r2)]
    loss = update_critics(b, ln, np.random.default_rng(0))
    assert loss == pytest.approx(np.mean(per_item), rel=1e-12)


# -- policy ---------------------------------------------------------------------

def test_flat_q_with_zero_alpha_leaves_policy_mean():
    ln = make_learner(seed=1)
    for net in (ln.q1, ln.q2):
        const_net(net, 2.0)
    set_alpha(ln, 0.0)
    before = ln.policy.net.params.copy()
    update_policy(batch_of(4), ln, noise=np.random.default_rng(0).standard_normal((4, 1)))
    assert np.array_equal(before, ln.policy.net.params)


def test_discrete_policy_moves_toward_better_action():
    ln = make_learner(DISC, seed=2)
    for net in (ln.q1, ln.q2):
        const_net(net, 0.0)
        net.layers[-1][1][...] = [1.0, 0.0]
    set_alpha(ln, 0.0)
    b = batch_of(16, seed=3)
    p0 = ln.policy.probs(b.states)[:, 0]
    update_policy(b, ln)
    assert np.all(ln.policy.probs(b.states)[:, 0] > p0)


# -- temperature ------------------------------------------------------------------

def test_alpha_decreases_when_entropy_above_target():
    ln = make_learner()
    b = batch_of(4)
    a0 = ln.alpha
    # E[log pi] = -3, target -1: dJ/dalpha = 4 > 0
    assert update_alpha(b, ln, log_probs=np.full(4, -3.0)) < a0


def test_alpha_stationary_at_target():
    ln = make_learner()
    set_alpha(ln, 0.5)
    a0 = ln.alpha
    # gradient E[-log pi - H] vanishes when the entropy -E[log pi] equals H = -1
    assert update_alpha(batch_of(4), ln, log_probs=np.full(4, 1.0)) == a0


def test_alpha_fixed_when_not_learned():
    ln = make_learner(learn_alpha=False, init_alpha=0.3)
    assert update_alpha(batch_of(2), ln, log_probs=np.full(2, -5.0)) == pytest.approx(0.3)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=1, max_size=200))
def test_alpha_stays_in_range(logps):
    ln = make_learner(lr=0.5)
    b = batch_of(1)
    for lp in logps:
        a = update_alpha(b, ln, log_probs=np.array([lp]))
        assert ALPHA_FLOOR < a <= 1.0


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-30, -1.01), min_size=2, max_size=50))
def test_alpha_non_increasing_when_gradient_positive(logps):
    ln = make_learner()
    b = batch_of(1)
    prev = ln.alpha
    for lp in logps:
        a = update_alpha(b, ln, log_probs=np.array([lp]))
        assert a <= prev
        prev = a


@pytest.mark.parametrize("alpha, alpha_min, expected", [(0.09, 0.1, True), (0.1, 0.1, False),
                                                        (1.0, 1.0, False), (1.0, 0.01, False)])
def test_is_mature(alpha, alpha_min, expected):
    ln = make_learner()
    set_alpha(ln, alpha)
    assert is_mature(ln, alpha_min) is expected


def test_init_alpha_range_checked():
    with pytest.raises(ConfigError):
        make_learner(init_alpha=0.0)


# -- targets ------------------------------------------------------------------------

def test_targets_equal_online_at_construction():
    ln = make_learner()
    assert np.array_equal(ln.q1.params, ln.q1_targ.params)
    assert np.array_equal(ln.q2.params, ln.q2_targ.params)


def _perturbed():
    ln = make_learner()
    rng = np.random.default_rng(9)
    ln.q1.params += rng.normal(size=ln.q1.params.shape)
    ln.q2.params += rng.normal(size=ln.q2.params.shape)
    return ln


def test_tau_one_copies():
    ln = _perturbed()
    soft_update_targets(ln, 1.0)
    assert np.array_equal(ln.q1.params, ln.q1_targ.params)
    assert np.array_equal(ln.q2.params, ln.q2_targ.params)


def test_tau_zero_keeps_targets():
    ln = _perturbed()
    before = ln.q1_targ.params.copy()
    soft_update_targets(ln, 0.0)
    assert np.array_equal(before, ln.q1_targ.params)


def test_tau_half_is_midpoint():
    ln = _perturbed()
    mid = 0.5 * (ln.q1.params + ln.q1_targ.params)
    soft_update_targets(ln, 0.5)
    assert np.allclose(ln.q1_targ.params, mid, atol=1e-15)


# -- replay buffer ------------------------------------------------------------------

def tr(i):
    return Transition(np.full(2, float(i)), np.array([0.0]), np.zeros(2), float(i), 0.0,
                      False, np.array([0.0]))


def test_buffer_fifo_eviction():
    buf = ReplayBuffer(3, 2, 1)
    for i in range(5):
        buf.push(tr(i))
    assert len(buf) == 3
    assert sorted(buf.rewards) == [2.0, 3.0, 4.0]


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(0, 60))
def test_buffer_size_bounded(capacity, pushes):
    buf = ReplayBuffer(capacity, 2, 1)
    for i in range(pushes):
        buf.push(tr(i))
    assert len(buf) == min(capacity, pushes)
    if pushes:
        kept = set(buf.rewards[:len(buf)])
        assert kept == set(float(i) for i in range(max(0, pushes - capacity), pushes))


def test_buffer_sampling_is_uniform():
    buf = ReplayBuffer(4, 2, 1)
    for i in range(4):
        buf.push(tr(i))
    b = buf.sample(40_000, np.random.default_rng(0))
    counts = np.bincount(b.rewards.astype(int), minlength=4) / 40_000
    assert np.allclose(counts, 0.25, atol=0.01)


def test_empty_buffer_sample_rejected():
    with pytest.raises(ConfigError):
        ReplayBuffer(2, 1, 1).sample(1, np.random.default_rng(0))


def test_batch_from_transitions_shapes():
    b = Batch.from_transitions([tr(0), tr(1)])
    assert b.states.shape == (2, 2) and b.actions.shape == (2, 1) and len(b) == 2
