"""Sequential option training and the execution cascade over trained options.

Options are trained one at a time with SAC. While option ``k`` trains, the
frozen options ``1..k-1`` keep acting wherever their joint termination
function says they can cope (delegation); the new option only acts, stores
transitions and learns in the remaining states. Once its temperature drops
below ``alpha_min`` it is frozen, and the termination function for the prefix
``1..k`` is refit on labelled rollouts of the whole option set.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from samo.errors import ConfigError
from samo.envs import FAILURE_OUTCOMES
from samo.options import (LabeledPool, Option, OptionSet, TerminationFn, bce_train_beta,
                          classify, geometric_labels, td_update_beta, warm_start_prefix)
from samo.sac import ReplayBuffer, SacLearner, SacParams, Transition, is_mature, sac_update

log = logging.getLogger(__name__)


@dataclass
class SamoParams:
    alpha_min: float = 0.1
    gamma_beta: float = 0.95
    max_options: int = 3
    t_min: int = 1
    shaping: bool = True
    step_budget: int = 50_000
    bce_first: bool = True
    bce_epochs: int = 20
    bce_pool: int = 1000
    threshold: float = 0.5
    beta_hidden: tuple[int, ...] = (64, 64)

    def __post_init__(self):
        if not 0.0 < self.alpha_min < 1.0:
            raise ConfigError("alpha_min must lie in (0, 1)")
        if not 0.0 < self.gamma_beta <= 1.0:
            raise ConfigError("gamma_beta must lie in (0, 1]")
        if self.max_options < 1 or self.t_min < 1 or self.step_budget < 1:
            raise ConfigError("max_options, t_min and step_budget must be >= 1")
        if self.bce_pool < 1 or self.bce_epochs < 0:
            raise ConfigError("bce_pool must be >= 1; bce_epochs >= 0")


# -- execution ----------------------------------------------------------------

@dataclass
class ExecState:
    """Active option index (1-based) and how many consecutive steps it has acted."""

    active: int
    dwell: int = 0


def start_exec(option_set: OptionSet, t_min: int = 1) -> ExecState:
    """Episode-start state: the last option is active and no dwell is owed."""
    if option_set.k == 0:
        raise ConfigError("cannot execute an empty option set")
    return ExecState(active=option_set.k, dwell=t_min)


def select_action_cascade(option_set: OptionSet, state: np.ndarray, exec_state: ExecState,
                          rng: np.random.Generator | None = None, greedy: bool = False,
                          literal: bool = False) -> tuple[np.ndarray, ExecState]:
    """Pick the acting option for one step.

    The earliest option whose prefix classifies its own proposed action as
    non-termination acts; if there is none, the last option acts. With
    nested prefixes this is where the downward walk over prefixes ends.
    ``literal=True`` runs that walk step by step instead, starting from the
    active option's proposal judged by the full prefix.
    """
    k = option_set.k
    if k == 0:
        raise ConfigError("cannot execute an empty option set")
    if not 1 <= exec_state.active <= k:
        raise ConfigError(f"active option {exec_state.active} outside 1..{k}")
    if literal:
        action, j = _walk_down(option_set, state, exec_state.active, rng, greedy)
    else:
        for j in range(1, k + 1):
            action = option_set.act(j, state, rng, greedy)
            if classify(option_set.prefix(j), state, action) == 0:
                break
    dwell = exec_state.dwell + 1 if j == exec_state.active else 1
    return action, ExecState(active=j, dwell=dwell)


def _walk_down(option_set: OptionSet, state, active: int, rng, greedy):
    k = option_set.k
    action = option_set.act(active, state, rng, greedy)
    j = k
    if classify(option_set.prefix(k), state, action) == 0:
        while j > 1:
            proposal = option_set.act(j - 1, state, rng, greedy)
            if classify(option_set.prefix(j - 1), state, proposal) == 1:
                break
            action = proposal
            j -= 1
    if j == k and active != k:
        action = option_set.act(k, state, rng, greedy)
    return action, j


def select_action_cascade_tmin(option_set: OptionSet, state: np.ndarray, exec_state: ExecState,
                               t_min: int, rng: np.random.Generator | None = None,
                               greedy: bool = False) -> tuple[np.ndarray, ExecState]:
    """Cascade that keeps the active option for at least ``t_min`` consecutive steps."""
    if t_min < 1:
        raise ConfigError("t_min must be >= 1")
    if exec_state.dwell < t_min:
        action = option_set.act(exec_state.active, state, rng, greedy)
        return action, replace(exec_state, dwell=exec_state.dwell + 1)
    return select_action_cascade(option_set, state, exec_state, rng, greedy)


def shaped_reward(raw_reward: float, next_state_prev_beta: int | None,
                  acting_is_new_option: bool) -> float:
    """+1 when the new option hands the agent to a state the earlier options can handle."""
    if acting_is_new_option and next_state_prev_beta == 0:
        return 1.0
    return float(raw_reward)


def termination_reward(outcome: str | None) -> float:
    return 1.0 if outcome in FAILURE_OUTCOMES else 0.0


# -- run bookkeeping ------------------------------------------------------------

@dataclass
class EpisodeRecord:
    length: int
    ret: float
    alpha: float
    option_hist: list[int]
    option_count: int
    event: str = "none"


@dataclass
class RunContext:
    """Counters, RNG streams and the metrics sink shared by all training phases."""

    env: object
    policy_rng: np.random.Generator
    buffer_rng: np.random.Generator
    init_rng: np.random.Generator
    total_steps: int
    env_step: int = 0
    episode: int = 0
    on_episode: Callable[["RunContext", EpisodeRecord], None] | None = None

    @property
    def remaining(self) -> int:
        return max(0, self.total_steps - self.env_step)

    def emit(self, rec: EpisodeRecord) -> None:
        self.episode += 1
        if self.on_episode is not None:
            self.on_episode(self, rec)


@dataclass
class _Decision:
    action: np.ndarray
    new_acts: bool
    prev_beta: int | None  # classification of the previous prefix, None without one
    exec_state: ExecState | None
    acting: int


@dataclass
class PhaseResult:
    option: Option
    termination: TerminationFn
    steps: int
    updates: int
    mature: bool
    bce_loss: float | None = None


def _uniform_action(space, rng: np.random.Generator) -> np.ndarray:
    if space.discrete:
        return np.array([float(rng.integers(space.n))])
    return rng.uniform(-1.0, 1.0, size=space.n)


def train_option(option_set: OptionSet, sac_params: SacParams, params: SamoParams,
                 ctx: RunContext, freeze_on_maturity: bool = True) -> PhaseResult:
    """Train one new option against the frozen set, then freeze and append it.

    With ``freeze_on_maturity=False`` the phase only ends when the step budget
    runs out, which turns a one-option run into plain SAC.
    """
    env = ctx.env
    space = env.action_space
    prev_k = option_set.k
    k = prev_k + 1
    learner = SacLearner(env.obs_dim, space, sac_params, ctx.init_rng)
    beta = TerminationFn.build(env.obs_dim, space, k, params.beta_hidden, ctx.init_rng,
                               threshold=params.threshold, lr=sac_params.lr)
    warm_start_prefix(option_set, beta)
    buffer = ReplayBuffer(sac_params.buffer, env.obs_dim, space.dim)
    budget = min(params.step_budget, ctx.remaining) if freeze_on_maturity else ctx.remaining
    prev_prefix = option_set.prefix(prev_k) if prev_k else None
    new_steps = 0

    def decide(state, exec_state) -> _Decision:
        if prev_prefix is not None:
            a_prev, ex = select_action_cascade(option_set, state, exec_state, ctx.policy_rng)
            b = classify(prev_prefix, state, a_prev)
            if b == 0:
                return _Decision(a_prev, False, 0, ex, ex.active)
            # the new option takes over; the cascade restarts from the first option
            ex = ExecState(active=1, dwell=0)
        else:
            b, ex = None, None
        if new_steps < sac_params.warmup:
            a = _uniform_action(space, ctx.policy_rng)
        else:
            a = learner.act(state, ctx.policy_rng)
        return _Decision(a, True, b, ex, k)

    steps = 0
    mature = False
    while steps < budget and not mature:
        state = env.reset()
        exec_state = start_exec(option_set) if prev_k else None
        cur = decide(state, exec_state)
        length, ret = 0, 0.0
        hist = [0] * k
        done = False
        while not done and steps < budget and not mature:
            next_state, r, done, info = env.step(cur.action)
            steps += 1
            ctx.env_step += 1
            length += 1
            ret += r
            hist[cur.acting - 1] += 1
            outcome = info.get("outcome")
            nxt = None
            if not done or outcome == "cap":
                nxt = decide(next_state, cur.exec_state)
            if cur.new_acts:
                new_steps += 1
                reward = r
                if params.shaping and not done and nxt is not None:
                    reward = shaped_reward(r, nxt.prev_beta, True)
                terminal = done and outcome != "cap"
                next_action = nxt.action if nxt is not None else np.zeros(space.dim)
                buffer.push(Transition(state, cur.action, next_state, reward,
                                       termination_reward(outcome), terminal, next_action))
                if new_steps >= sac_params.warmup and len(buffer) >= sac_params.batch:
                    batch = buffer.sample(sac_params.batch, ctx.buffer_rng)
                    sac_update(batch, learner, ctx.policy_rng)
                    td_update_beta(beta, batch, params.gamma_beta)
                    if freeze_on_maturity and is_mature(learner, params.alpha_min):
                        mature = True
            if nxt is not None:
                cur = nxt
            state = next_state
        frozen = freeze_on_maturity and (mature or steps >= budget)
        # a partial episode is only logged when a freeze cut it
        if done or frozen:
            event = "option_frozen" if frozen else "none"
            ctx.emit(EpisodeRecord(length, ret, learner.alpha, hist, prev_k, event))

    option = Option(learner.policy, learner.alpha, mature=mature or not freeze_on_maturity)
    if freeze_on_maturity and not mature:
        log.warning("option %d hit its step budget at alpha=%.4f; frozen as immature",
                    k, learner.alpha)
    option_set.append(option, beta)
    result = PhaseResult(option, beta, steps, learner.updates, mature)
    if freeze_on_maturity and (k > 1 or params.bce_first):
        result.bce_loss = fit_termination(option_set, params, ctx)
    return result


# -- composite rollouts -----------------------------------------------------------

def run_episode(option_set: OptionSet, env, rng: np.random.Generator | None, greedy: bool,
                t_min: int = 1, max_steps: int | None = None, record: bool = False) -> dict:
    """Execute the option set for one episode (or until ``max_steps`` env steps)."""
    state = env.reset()
    ex = start_exec(option_set, t_min)
    states, actions, rewards, active, poses = [], [], [], [], []
    done, outcome, ret, n = False, None, 0.0, 0
    hist = [0] * option_set.k
    while not done and (max_steps is None or n < max_steps):
        action, ex = select_action_cascade_tmin(option_set, state, ex, t_min, rng, greedy)
        if record:
            states.append(state)
            actions.append(action)
            poses.append(env.pose)
        state, r, done, info = env.step(action)
        outcome = info.get("outcome")
        hist[ex.active - 1] += 1
        ret += r
        n += 1
        if record:
            rewards.append(r)
            active.append(ex.active)
    return {"length": n, "return": ret, "done": done, "outcome": outcome, "hist": hist,
            "states": states, "actions": actions, "rewards": rewards, "active": active,
            "poses": poses}


def fit_termination(option_set: OptionSet, params: SamoParams, ctx: RunContext) -> float | None:
    """Refit the newest prefix termination function on labelled composite rollouts."""
    fn = option_set.prefix(option_set.k)
    pool = LabeledPool(params.bce_pool)
    collected = 0
    last: EpisodeRecord | None = None
    alpha = option_set.options[-1].alpha
    while collected < params.bce_pool and ctx.remaining > 0:
        ep = run_episode(option_set, ctx.env, ctx.policy_rng, greedy=False, t_min=params.t_min,
                         max_steps=ctx.remaining, record=True)
        ctx.env_step += ep["length"]
        if last is not None:
            ctx.emit(last)
        if not ep["done"]:
            # cut by the run budget: no complete trajectory to label
            last = None
            break
        last = EpisodeRecord(ep["length"], ep["return"], alpha, ep["hist"], option_set.k)
        labels = geometric_labels(ep["length"], params.gamma_beta,
                                  ep["outcome"] in FAILURE_OUTCOMES)
        pool.add_trajectory(ep["states"], ep["actions"], labels)
        collected += ep["length"]
    loss = None
    if len(pool):
        loss = bce_train_beta(fn, pool, params.bce_epochs, ctx.buffer_rng)
    if last is not None:
        if loss is not None:
            last.event = "bce_done"
        ctx.emit(last)
    return loss


def run_composite(option_set: OptionSet, params: SamoParams, ctx: RunContext) -> None:
    """Spend the remaining budget executing the frozen options (stochastic heads)."""
    alpha = option_set.options[-1].alpha
    while ctx.remaining > 0:
        ep = run_episode(option_set, ctx.env, ctx.policy_rng, greedy=False, t_min=params.t_min,
                         max_steps=ctx.remaining)
        ctx.env_step += ep["length"]
        if ep["done"]:
            ctx.emit(EpisodeRecord(ep["length"], ep["return"], alpha, ep["hist"], option_set.k))


def train_all(env, sac_params: SacParams, params: SamoParams, ctx: RunContext,
              option_set: OptionSet | None = None,
              on_freeze: Callable[[OptionSet, RunContext], None] | None = None) -> OptionSet:
    """Train options until ``max_options`` exist, then execute them for the rest of the budget.

    A single-option run never freezes and is plain SAC on the stay-alive
    reward for the whole budget. ``option_set`` may hold options restored
    from a checkpoint; training continues after them.
    """
    if option_set is None:
        option_set = OptionSet(env.action_space, params.gamma_beta)
    if params.max_options == 1:
        if option_set.k == 0:
            train_option(option_set, sac_params, params, ctx, freeze_on_maturity=False)
        return option_set
    while option_set.k < params.max_options and ctx.remaining > 0:
        res = train_option(option_set, sac_params, params, ctx)
        log.info("option %d: %d steps, %d updates, alpha %.4f, mature=%s, bce=%s",
                 option_set.k, res.steps, res.updates, res.option.alpha, res.mature, res.bce_loss)
        if on_freeze is not None:
            on_freeze(option_set, ctx)
    if option_set.k:
        run_composite(option_set, params, ctx)
    return option_set
