"""Stochastic policy heads with exact log-probabilities.

``GaussianHead`` squashes a diagonal Gaussian through tanh for continuous
steering; ``CategoricalHead`` is a softmax over discrete actions. Both wrap a
``DenseNet`` and expose batched sampling plus the backward pass needed by the
SAC policy update.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from samo.errors import DomainError
from samo.nncore import DenseNet

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
# floor inside the tanh-correction log so saturated actions stay finite
SQUASH_EPS = 1e-6


@dataclass
class ActionSpace:
    kind: str  # "continuous" or "discrete"
    n: int  # action dimension (continuous) or number of actions (discrete)

    @property
    def discrete(self) -> bool:
        return self.kind == "discrete"

    @property
    def dim(self) -> int:
        """Length of the stored action vector: the index for discrete spaces."""
        return 1 if self.discrete else self.n

    @property
    def encoded_dim(self) -> int:
        """Length of the action encoding fed to Q / termination networks."""
        return self.n

    def encode(self, actions: np.ndarray) -> np.ndarray:
        actions = np.asarray(actions, dtype=np.float64)
        if not self.discrete:
            return actions
        # stored discrete actions have shape (..., 1) holding the index
        return np.eye(self.n)[actions[..., 0].astype(np.int64)]


class GaussianHead:
    """tanh(N(mu, sigma^2)) policy; the net emits ``(mu, log_sigma)`` per dimension."""

    discrete = False

    def __init__(self, net: DenseNet):
        if net.n_out % 2:
            raise DomainError("Gaussian head needs an even number of outputs")
        self.net = net
        self.action_dim = net.n_out // 2

    @classmethod
    def build(cls, obs_dim: int, action_dim: int, hidden: tuple[int, ...],
              rng: np.random.Generator) -> "GaussianHead":
        return cls(DenseNet.init((obs_dim, *hidden, 2 * action_dim), "tanh", rng))

    def _split(self, out: np.ndarray):
        d = self.action_dim
        mu = out[..., :d]
        raw = out[..., d:]
        log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
        inside = (raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)
        return mu, log_std, inside

    def mean_std(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mu, log_std, _ = self._split(self.net.forward(states))
        return mu, np.exp(log_std)

    def sample(self, states: np.ndarray, noise: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mu, log_std, _ = self._split(self.net.forward(states))
        action = np.tanh(mu + np.exp(log_std) * noise)
        return action, _squashed_logp(noise, log_std, action)

    def greedy(self, states: np.ndarray) -> np.ndarray:
        mu, _, _ = self._split(self.net.forward(states))
        return np.tanh(mu)

    def log_prob(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        actions = np.asarray(actions, dtype=np.float64)
        if np.any(np.abs(actions) >= 1.0):
            raise DomainError("squashed log-density is defined only for |action| < 1")
        mu, log_std, _ = self._split(self.net.forward(states))
        noise = (np.arctanh(actions) - mu) / np.exp(log_std)
        return _squashed_logp(noise, log_std, actions)

    def rsample(self, states: np.ndarray, noise: np.ndarray):
        """Reparameterized sample on a batch; returns action, log_prob, cache."""
        out, acts = self.net.forward_cached(states)
        mu, log_std, inside = self._split(out)
        std = np.exp(log_std)
        noise = np.asarray(noise, dtype=np.float64).reshape(mu.shape)
        action = np.tanh(mu + std * noise)
        logp = _squashed_logp(noise, log_std, action)
        return action, logp, (acts, action, std, noise, inside)

    def backward(self, cache, grad_action: np.ndarray, grad_logp: np.ndarray) -> np.ndarray:
        """Parameter gradient given dL/d(action) (B, d) and dL/d(log_prob) (B,)."""
        acts, action, std, noise, inside = cache
        one_minus = 1.0 - action * action
        # d logp / d u of the tanh correction term
        corr = 2.0 * action * one_minus / (one_minus + SQUASH_EPS)
        g_u = grad_action * one_minus + grad_logp[:, None] * corr
        g_mu = g_u
        g_log_std = (g_u * std * noise - grad_logp[:, None]) * inside
        grads, _ = self.net.backward_cached(acts, np.concatenate([g_mu, g_log_std], axis=1),
                                            need_input=False)
        return grads


def _squashed_logp(noise: np.ndarray, log_std: np.ndarray, action: np.ndarray) -> np.ndarray:
    per_dim = -0.5 * noise * noise - log_std - HALF_LOG_2PI - np.log(1.0 - action * action + SQUASH_EPS)
    return per_dim.sum(axis=-1)


class CategoricalHead:
    """Softmax over one logit per discrete action."""

    discrete = True

    def __init__(self, net: DenseNet):
        self.net = net
        self.n_actions = net.n_out

    @classmethod
    def build(cls, obs_dim: int, n_actions: int, hidden: tuple[int, ...],
              rng: np.random.Generator) -> "CategoricalHead":
        return cls(DenseNet.init((obs_dim, *hidden, n_actions), "tanh", rng))

    def probs(self, states: np.ndarray) -> np.ndarray:
        return softmax(self.net.forward(states))

    def log_probs(self, states: np.ndarray) -> np.ndarray:
        return log_softmax(self.net.forward(states))

    def sample(self, states: np.ndarray, uniform: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Inverse-CDF sampling; returns indices and their log-probabilities."""
        logp = self.log_probs(states)
        cdf = np.cumsum(np.exp(logp), axis=-1)
        u = np.asarray(uniform, dtype=np.float64)
        idx = np.minimum((cdf <= u[..., None]).sum(axis=-1), self.n_actions - 1)
        return idx, np.take_along_axis(logp, np.asarray(idx)[..., None], axis=-1)[..., 0]

    def greedy(self, states: np.ndarray) -> np.ndarray:
        return np.argmax(self.net.forward(states), axis=-1)

    def log_prob(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        logp = self.log_probs(states)
        idx = np.asarray(actions).astype(np.int64)
        return np.take_along_axis(logp, idx[..., None], axis=-1)[..., 0]

    def entropy(self, states: np.ndarray) -> np.ndarray:
        logp = self.log_probs(states)
        return -(np.exp(logp) * logp).sum(axis=-1)


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    s = z - z.max(axis=-1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def sample_squashed(head: GaussianHead, state: np.ndarray, noise: np.ndarray):
    action, logp = head.sample(state, noise)
    return action, float(logp) if np.ndim(logp) == 0 else logp


def log_prob_squashed(head: GaussianHead, state: np.ndarray, action: np.ndarray):
    logp = head.log_prob(state, action)
    return float(logp) if np.ndim(logp) == 0 else logp


def sample_categorical(head: CategoricalHead, state: np.ndarray, uniform_draw: float):
    idx, logp = head.sample(state, np.asarray(uniform_draw))
    return int(idx), float(logp)


def entropy_estimate(head, state: np.ndarray, n_samples: int,
                     rng: np.random.Generator | None = None, squashed: bool = True) -> float:
    """Policy entropy at one state.

    Categorical heads return the exact value. Gaussian heads return a Monte
    Carlo estimate of -E[log pi]; with ``squashed=False`` the estimate is of the
    pre-tanh Gaussian instead.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    if head.discrete:
        return float(head.entropy(state))
    rng = rng or np.random.default_rng(0)
    states = np.repeat(np.atleast_2d(state), n_samples, axis=0)
    noise = rng.standard_normal((n_samples, head.action_dim))
    if squashed:
        _, logp = head.sample(states, noise)
    else:
        _, log_std, _ = head._split(head.net.forward(states))
        logp = (-0.5 * noise * noise - log_std - HALF_LOG_2PI).sum(axis=-1)
    return float(-logp.mean())
