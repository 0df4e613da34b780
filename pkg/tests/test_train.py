import numpy as np
import pytest

import samo.train as train_mod
from samo.envs.two_zone import TwoZoneEnv
from samo.errors import ConfigError
from samo.nncore import DenseNet
from samo.options import Option, OptionSet
from samo.policy import ActionSpace
from samo.sac import ReplayBuffer, SacLearner, SacParams, Transition, sac_update
from samo.train import (ExecState, RunContext, SamoParams, run_episode, select_action_cascade,
                        select_action_cascade_tmin, shaped_reward, start_exec, termination_reward,
                        train_all, train_option)

DISC = ActionSpace("discrete", 2)


class FixedDiscrete:
    """Frozen discrete head that always picks one action."""

    discrete = True

    def __init__(self, action: int):
        self.action = action
        self.net = DenseNet((1, 2))

    def greedy(self, state):
        return self.action

    def sample(self, state, u):
        return self.action, 0.0


class StateTermination:
    """Verdict from a predicate on the state (ignores the action)."""

    threshold = 0.5

    def __init__(self, prefix_length, terminates):
        self.prefix_length = prefix_length
        self.terminates = terminates
        # same shape as a real two-zone termination net so warm starts can copy it
        self.net = DenseNet((12, 64, 64, 1))

    def value(self, state, action):
        return float(self.terminates(np.asarray(state)))


def position(state):
    return int(np.argmax(state[-10:]))


def zone_a_set():
    """Option 1 always plays 0 and is trusted only in positions 0-4."""
    os_ = OptionSet(DISC, 0.95)
    os_.append(Option(FixedDiscrete(0), 0.005), StateTermination(1, lambda s: position(s) >= 5))
    return os_


def ctx_for(env, seed=0, total=3000):
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]
    return RunContext(env, *rngs, total_steps=total)


SMALL_SAC = SacParams(hidden=(16,), warmup=50, batch=8)


@pytest.fixture
def pushes(monkeypatch):
    seen: list[Transition] = []

    class SpyBuffer(ReplayBuffer):
        def push(self, tr):
            seen.append(tr)
            super().push(tr)

    monkeypatch.setattr(train_mod, "ReplayBuffer", SpyBuffer)
    return seen


# -- shaped / termination rewards -------------------------------------------------------

@pytest.mark.parametrize("raw, prev_beta, new_acts, expected", [
    (0.0, 0, True, 1.0), (0.0, 1, True, 0.0), (-1.0, 1, True, -1.0), (0.0, 0, False, 0.0),
    (0.0, None, True, 0.0)])
def test_shaped_reward(raw, prev_beta, new_acts, expected):
    assert shaped_reward(raw, prev_beta, new_acts) == expected


@pytest.mark.parametrize("outcome, expected", [("failure", 1.0), ("wrong_corridor", 1.0),
                                               ("goal", 0.0), ("cap", 0.0), (None, 0.0)])
def test_termination_reward(outcome, expected):
    assert termination_reward(outcome) == expected


# -- delegation and shaping inside option training ----------------------------------------

def test_fully_trusted_previous_option_keeps_new_option_idle(pushes):
    os_ = OptionSet(DISC, 0.95)
    os_.append(Option(FixedDiscrete(0), 0.005), StateTermination(1, lambda s: False))
    env = TwoZoneEnv(max_steps=20, seed=1)
    ctx = ctx_for(env, total=400)
    res = train_option(os_, SMALL_SAC, SamoParams(step_budget=400, alpha_min=0.01), ctx)
    assert pushes == [] and res.updates == 0 and res.steps == 400


def test_new_option_only_stores_where_previous_prefix_terminates(pushes):
    env = TwoZoneEnv(max_steps=50, seed=2)
    train_option(zone_a_set(), SMALL_SAC, SamoParams(step_budget=1500, alpha_min=0.01),
                 ctx_for(env, total=1500))
    assert pushes
    assert all(position(t.state) >= 5 for t in pushes)


def test_shaping_rewards_handover_to_previous_option(pushes):
    env = TwoZoneEnv(max_steps=50, seed=3)
    train_option(zone_a_set(), SMALL_SAC, SamoParams(step_budget=1500, alpha_min=0.01),
                 ctx_for(env, total=1500))
    handover = [not t.done and position(t.next_state) < 5 for t in pushes]
    assert any(handover)
    for t, h in zip(pushes, handover):
        assert t.reward == 1.0 if h else t.reward in (0.0, -1.0)
    # failures are never shaped and carry r_beta = 1
    assert all(t.termination_reward == 1.0 for t in pushes if t.reward == -1.0)


def test_shaping_off_leaves_raw_rewards(pushes):
    env = TwoZoneEnv(max_steps=50, seed=3)
    train_option(zone_a_set(), SMALL_SAC,
                 SamoParams(step_budget=1500, alpha_min=0.01, shaping=False),
                 ctx_for(env, total=1500))
    assert pushes and all(t.reward in (0.0, -1.0) for t in pushes)


def test_stored_next_action_is_the_action_taken(pushes):
    env = TwoZoneEnv(max_steps=50, seed=4)
    train_option(zone_a_set(), SMALL_SAC, SamoParams(step_budget=800, alpha_min=0.01),
                 ctx_for(env, total=800))
    for a, b in zip(pushes, pushes[1:]):
        if np.array_equal(a.next_state, b.state) and not a.done:
            assert np.array_equal(a.next_action, b.action)


# -- full runs ------------------------------------------------------------------------------

def test_frozen_options_never_change():
    env = TwoZoneEnv(max_steps=40, seed=5)
    ctx = ctx_for(env, seed=5, total=4000)
    snapshots = []
    train_all(env, SMALL_SAC, SamoParams(max_options=3, step_budget=600, alpha_min=0.01,
                                         bce_epochs=2),
              ctx, on_freeze=lambda os_, c: snapshots.append(os_.checksum()))
    assert len(snapshots) == 3
    # each option's policy and its prefix function keep their checksum after freezing
    for early, late in zip(snapshots, snapshots[1:]):
        assert late[:len(early) - 1] == early[:-1]


def test_train_all_counts():
    env = TwoZoneEnv(max_steps=40, seed=6)
    os_ = train_all(env, SMALL_SAC, SamoParams(max_options=3, step_budget=300, alpha_min=0.01,
                                               bce_epochs=1), ctx_for(env, total=3000))
    assert os_.k == 3 and len(os_.terminations) == 3
    assert [t.prefix_length for t in os_.terminations] == [1, 2, 3]


def test_budget_is_respected():
    env = TwoZoneEnv(max_steps=40, seed=7)
    ctx = ctx_for(env, total=1234)
    train_all(env, SMALL_SAC, SamoParams(max_options=2, step_budget=500, alpha_min=0.01,
                                         bce_epochs=1), ctx)
    assert ctx.env_step == 1234


def reference_sac(env, sac_params, ctx, steps):
    """Plain SAC on the raw reward, acting with the same RNG streams and step order."""
    space = env.action_space
    learner = SacLearner(env.obs_dim, space, sac_params, ctx.init_rng)
    buf = ReplayBuffer(sac_params.buffer, env.obs_dim, space.dim)
    n = 0

    def act(n, s):
        if n < sac_params.warmup:
            return np.array([float(ctx.policy_rng.integers(space.n))])
        return learner.act(s, ctx.policy_rng)

    while n < steps:
        state = env.reset()
        a = act(n, state)
        done = False
        while not done and n < steps:
            s2, r, done, info = env.step(a)
            n += 1
            nxt = None
            if not done or info["outcome"] == "cap":
                nxt = act(n, s2)
            buf.push(Transition(state, a, s2, r, 0.0, done and info["outcome"] != "cap",
                                nxt if nxt is not None else np.zeros(1)))
            if n >= sac_params.warmup and len(buf) >= sac_params.batch:
                sac_update(buf.sample(sac_params.batch, ctx.buffer_rng), learner, ctx.policy_rng)
            state = s2
            if nxt is not None:
                a = nxt
    return learner


def test_single_option_run_is_plain_sac():
    steps = 600
    a_env, b_env = TwoZoneEnv(max_steps=30, seed=8), TwoZoneEnv(max_steps=30, seed=8)
    os_ = train_all(a_env, SMALL_SAC, SamoParams(max_options=1, shaping=False),
                    ctx_for(a_env, seed=9, total=steps))
    ref = reference_sac(b_env, SMALL_SAC, ctx_for(b_env, seed=9, total=steps), steps)
    assert os_.k == 1
    assert np.array_equal(os_.options[0].policy.net.params, ref.policy.net.params)


# -- execution cascade --------------------------------------------------------------------

def counter_set(accept_1):
    """Two options acting 0 / 1; prefix 1 trusts option 1 where ``accept_1(t)``, prefix 2 always."""
    os_ = OptionSet(DISC, 0.95)
    os_.append(Option(FixedDiscrete(0), 0.05), StateTermination(1, lambda s: not accept_1(s[0])))
    os_.append(Option(FixedDiscrete(1), 0.05), StateTermination(2, lambda s: False))
    return os_


def trace(os_, t_min, steps):
    ex = start_exec(os_, t_min)
    out = []
    for t in range(steps):
        _, ex = select_action_cascade_tmin(os_, np.array([float(t)]), ex, t_min, greedy=True)
        out.append(ex.active)
    return out


def test_tmin_one_matches_plain_cascade():
    os_ = counter_set(lambda t: t < 5 or t >= 30)
    ex = start_exec(os_)
    plain = []
    for t in range(40):
        _, ex = select_action_cascade(os_, np.array([float(t)]), ex, greedy=True)
        plain.append(ex.active)
    assert trace(os_, 1, 40) == plain == [1] * 5 + [2] * 25 + [1] * 10


def test_tmin_holds_option_for_sixteen_steps():
    os_ = counter_set(lambda t: t < 5 or t >= 30)
    # option 1 from t=0 is held through t=15; option 2 from t=16 is held through t=31
    assert trace(os_, 16, 40) == [1] * 16 + [2] * 16 + [1] * 8


def test_dwell_resets_on_switch():
    os_ = counter_set(lambda t: t < 5)
    ex = start_exec(os_, 4)
    seen = []
    for t in range(8):
        _, ex = select_action_cascade_tmin(os_, np.array([float(t)]), ex, 4, greedy=True)
        seen.append((ex.active, ex.dwell))
    assert seen == [(1, 1), (1, 2), (1, 3), (1, 4), (1, 5), (2, 1), (2, 2), (2, 3)]


def test_cascade_rejects_bad_inputs():
    with pytest.raises(ConfigError):
        start_exec(OptionSet(DISC, 0.95))
    with pytest.raises(ConfigError):
        select_action_cascade_tmin(counter_set(lambda t: True), np.zeros(1), ExecState(1), 0)
    with pytest.raises(ConfigError):
        select_action_cascade(counter_set(lambda t: True), np.zeros(1), ExecState(3))


def test_run_episode_with_partition_option_set_reaches_cap():
    os_ = zone_a_set()
    os_.append(Option(FixedDiscrete(1), 0.005), StateTermination(2, lambda s: False))
    ep = run_episode(os_, TwoZoneEnv(max_steps=200, seed=0), None, greedy=True)
    assert ep["length"] == 200 and ep["outcome"] == "cap"
    assert ep["hist"] == [100, 100]


@pytest.mark.parametrize("kw", [dict(alpha_min=0.0), dict(gamma_beta=0.0), dict(max_options=0),
                                dict(t_min=0), dict(step_budget=0)])
def test_samo_params_validated(kw):
    with pytest.raises(ConfigError):
        SamoParams(**kw)
