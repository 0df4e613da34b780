"""Soft actor-critic: replay buffer, twin critics, policy and temperature updates.

The temperature alpha doubles as the maturity signal for an option: once it
drops below ``alpha_min`` the option is considered trained.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from samo.errors import ConfigError
from samo.nncore import AdamState, DenseNet, adam_step
from samo.policy import ActionSpace, CategoricalHead, GaussianHead

ALPHA_FLOOR = 1e-4
_LOG_ALPHA_MIN = float(np.log(np.nextafter(ALPHA_FLOOR, 1.0)))


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    next_state: np.ndarray
    reward: float
    termination_reward: float
    done: bool
    next_action: np.ndarray


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    rewards: np.ndarray
    term_rewards: np.ndarray
    dones: np.ndarray
    next_actions: np.ndarray

    def __len__(self) -> int:
        return len(self.rewards)

    @classmethod
    def from_transitions(cls, items: list[Transition]) -> "Batch":
        return cls(
            np.array([t.state for t in items], dtype=np.float64),
            np.array([np.atleast_1d(t.action) for t in items], dtype=np.float64),
            np.array([t.next_state for t in items], dtype=np.float64),
            np.array([t.reward for t in items], dtype=np.float64),
            np.array([t.termination_reward for t in items], dtype=np.float64),
            np.array([float(t.done) for t in items]),
            np.array([np.atleast_1d(t.next_action) for t in items], dtype=np.float64),
        )


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int):
        if capacity <= 0:
            raise ConfigError("replay capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.next_states = np.zeros((capacity, obs_dim))
        self.rewards = np.zeros(capacity)
        self.term_rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity)
        self.next_actions = np.zeros((capacity, action_dim))
        self.size = 0
        self._next = 0

    def __len__(self) -> int:
        return self.size

    def push(self, tr: Transition) -> None:
        i = self._next
        self.states[i] = tr.state
        self.actions[i] = tr.action
        self.next_states[i] = tr.next_state
        self.rewards[i] = tr.reward
        self.term_rewards[i] = tr.termination_reward
        self.dones[i] = float(tr.done)
        self.next_actions[i] = tr.next_action
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self.size == 0:
            raise ConfigError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return Batch(self.states[idx], self.actions[idx], self.next_states[idx],
                     self.rewards[idx], self.term_rewards[idx], self.dones[idx],
                     self.next_actions[idx])


@dataclass
class SacParams:
    lr: float = 3e-4
    gamma: float = 0.99
    tau: float = 0.005
    batch: int = 16
    buffer: int = 10_000
    warmup: int = 1000
    hidden: tuple[int, ...] = (64, 64)
    init_alpha: float = 1.0
    learn_alpha: bool = True


class SacLearner:
    """Policy head, twin online/target critics and a log-parameterized temperature."""

    def __init__(self, obs_dim: int, space: ActionSpace, params: SacParams,
                 rng: np.random.Generator):
        if not 0.0 < params.init_alpha <= 1.0:
            raise ConfigError("initial alpha must lie in (0, 1]")
        self.space = space
        self.params = params
        self.obs_dim = obs_dim
        hid = tuple(params.hidden)
        if space.discrete:
            self.policy = CategoricalHead.build(obs_dim, space.n, hid, rng)
            q_sizes = (obs_dim, *hid, space.n)
        else:
            self.policy = GaussianHead.build(obs_dim, space.n, hid, rng)
            q_sizes = (obs_dim + space.n, *hid, 1)
        self.q1 = DenseNet.init(q_sizes, "relu", rng)
        self.q2 = DenseNet.init(q_sizes, "relu", rng)
        self.q1_targ = self.q1.copy()
        self.q2_targ = self.q2.copy()
        self.pi_opt = AdamState.like(self.policy.net.params)
        self.q1_opt = AdamState.like(self.q1.params)
        self.q2_opt = AdamState.like(self.q2.params)
        self.log_alpha = np.array([np.log(params.init_alpha)])
        self.alpha_opt = AdamState.like(self.log_alpha)
        # one action variable for discrete spaces, so the target is -1 there too
        self.target_entropy = -float(space.dim)
        self.updates = 0

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    @property
    def gamma(self) -> float:
        return self.params.gamma

    def act(self, state: np.ndarray, rng: np.random.Generator, greedy: bool = False) -> np.ndarray:
        return policy_action(self.policy, state, rng, greedy)

    # critic helpers -----------------------------------------------------
    def _q_in(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return np.concatenate([states, actions], axis=1)


def policy_action(head, state: np.ndarray, rng: np.random.Generator | None,
                  greedy: bool = False) -> np.ndarray:
    """One action vector for a single state (index in a length-1 vector if discrete)."""
    state = np.asarray(state, dtype=np.float64)
    if head.discrete:
        if greedy:
            return np.array([float(head.greedy(state))])
        idx, _ = head.sample(state, rng.random())
        return np.array([float(idx)])
    if greedy:
        return head.greedy(state)
    action, _ = head.sample(state, rng.standard_normal(head.action_dim))
    return action


def q_targets(batch: Batch, learner: SacLearner, rng: np.random.Generator | None = None,
              noise: np.ndarray | None = None) -> np.ndarray:
    """Soft Bellman targets using the target critics and a fresh policy sample at s'."""
    s2 = batch.next_states
    alpha = learner.alpha
    if learner.space.discrete:
        logp2 = learner.policy.log_probs(s2)
        q_min = np.minimum(learner.q1_targ.forward(s2), learner.q2_targ.forward(s2))
        v_next = (np.exp(logp2) * (q_min - alpha * logp2)).sum(axis=1)
    else:
        if noise is None:
            noise = rng.standard_normal((len(batch), learner.space.n))
        a2, logp2 = learner.policy.sample(s2, noise)
        x2 = learner._q_in(s2, a2)
        q_min = np.minimum(learner.q1_targ.forward(x2), learner.q2_targ.forward(x2))[:, 0]
        v_next = q_min - alpha * logp2
    return batch.rewards + learner.gamma * (1.0 - batch.dones) * v_next


def update_critics(batch: Batch, learner: SacLearner, rng: np.random.Generator | None = None,
                   noise: np.ndarray | None = None) -> float:
    """One Adam step of both critics toward the soft targets; returns the mean squared TD error."""
    y = q_targets(batch, learner, rng, noise)
    n = len(batch)
    if learner.space.discrete:
        x = batch.states
        idx = batch.actions[:, 0].astype(np.int64)
    else:
        x = learner._q_in(batch.states, batch.actions)
    losses = []
    for net, opt in ((learner.q1, learner.q1_opt), (learner.q2, learner.q2_opt)):
        out, acts = net.forward_cached(x)
        if learner.space.discrete:
            pred = out[np.arange(n), idx]
            resid = pred - y
            g = np.zeros_like(out)
            g[np.arange(n), idx] = 2.0 * resid / n
        else:
            resid = out[:, 0] - y
            g = (2.0 * resid / n)[:, None]
        losses.append(float(np.mean(resid * resid)))
        grads, _ = net.backward_cached(acts, g, need_input=False)
        adam_step(net.params, grads, opt, learner.params.lr)
    return 0.5 * (losses[0] + losses[1])


def update_policy(batch: Batch, learner: SacLearner, rng: np.random.Generator | None = None,
                  noise: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Minimize E[alpha log pi(a|s) - min Q(s, a)].

    Continuous heads use the reparameterized sample; discrete heads take the
    exact expectation over actions. Returns the loss and the per-state
    log-probability term reused by the temperature update (for discrete
    heads, minus the exact entropy).
    """
    s = batch.states
    n = len(batch)
    alpha = learner.alpha
    head = learner.policy
    if learner.space.discrete:
        out, acts = head.net.forward_cached(s)
        logp = out - out.max(axis=1, keepdims=True)
        logp = logp - np.log(np.exp(logp).sum(axis=1, keepdims=True))
        p = np.exp(logp)
        q_min = np.minimum(learner.q1.forward(s), learner.q2.forward(s))
        f = alpha * logp - q_min
        per_state = (p * f).sum(axis=1)
        g_logits = p * (f - per_state[:, None]) / n
        grads, _ = head.net.backward_cached(acts, g_logits, need_input=False)
        adam_step(head.net.params, grads, learner.pi_opt, learner.params.lr)
        return float(per_state.mean()), (p * logp).sum(axis=1)
    if noise is None:
        noise = rng.standard_normal((n, learner.space.n))
    a, logp, cache = head.rsample(s, noise)
    x = learner._q_in(s, a)
    out1, acts1 = learner.q1.forward_cached(x)
    out2, acts2 = learner.q2.forward_cached(x)
    use1 = out1[:, 0] <= out2[:, 0]
    q_min = np.where(use1, out1[:, 0], out2[:, 0])
    ones = np.ones((n, 1))
    _, gx1 = learner.q1.backward_cached(acts1, ones, need_params=False)
    _, gx2 = learner.q2.backward_cached(acts2, ones, need_params=False)
    dq_da = np.where(use1[:, None], gx1, gx2)[:, learner.obs_dim:]
    grad_a = -dq_da / n
    grad_logp = np.full(n, alpha / n)
    grads = head.backward(cache, grad_a, grad_logp)
    adam_step(head.net.params, grads, learner.pi_opt, learner.params.lr)
    return float(np.mean(alpha * logp - q_min)), logp


def update_alpha(batch: Batch, learner: SacLearner, log_probs: np.ndarray | None = None,
                 rng: np.random.Generator | None = None) -> float:
    """Gradient step on J(alpha) = E[-alpha log pi - alpha H_target] through log(alpha).

    The descent direction follows dJ/dalpha = E[-log pi - H_target]; alpha is
    kept inside (1e-4, 1].
    """
    if not learner.params.learn_alpha:
        return learner.alpha
    if log_probs is None:
        if learner.space.discrete:
            logp = learner.policy.log_probs(batch.states)
            log_probs = (np.exp(logp) * logp).sum(axis=1)
        else:
            noise = rng.standard_normal((len(batch), learner.space.n))
            _, log_probs = learner.policy.sample(batch.states, noise)
    grad = np.array([np.mean(-log_probs - learner.target_entropy)])
    adam_step(learner.log_alpha, grad, learner.alpha_opt, learner.params.lr)
    np.clip(learner.log_alpha, _LOG_ALPHA_MIN, 0.0, out=learner.log_alpha)
    return learner.alpha


def soft_update_targets(learner: SacLearner, tau: float | None = None) -> None:
    tau = learner.params.tau if tau is None else tau
    for net, targ in ((learner.q1, learner.q1_targ), (learner.q2, learner.q2_targ)):
        if tau == 1.0:
            targ.params[...] = net.params
        elif tau > 0.0:
            targ.params *= 1.0 - tau
            targ.params += tau * net.params


def is_mature(learner: SacLearner, alpha_min: float) -> bool:
    return learner.alpha < alpha_min


def sac_update(batch: Batch, learner: SacLearner, rng: np.random.Generator) -> dict:
    """Critics, policy, temperature and target smoothing, in that order."""
    q_loss = update_critics(batch, learner, rng)
    pi_loss, logp = update_policy(batch, learner, rng)
    alpha = update_alpha(batch, learner, logp)
    soft_update_targets(learner)
    learner.updates += 1
    return {"q_loss": q_loss, "pi_loss": pi_loss, "alpha": alpha}
