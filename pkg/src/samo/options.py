"""Nested termination functions and the option set they partition.

``terminations[i-1]`` is the termination classifier for the prefix of the
first ``i`` options. A hard output of 1 means the prefix is expected to fail
soon from ``(state, action)``; 0 means the prefix can handle it.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from samo.errors import ConfigError
from samo.nncore import AdamState, DenseNet, adam_step
from samo.policy import ActionSpace
from samo.sac import Batch, policy_action

log = logging.getLogger(__name__)

BCE_POOL_MAX = 1000


class BceSkippedWarning(RuntimeWarning):
    pass


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class TerminationFn:
    """Sigmoid network over ``state ++ encoded action`` for one option prefix."""

    def __init__(self, net: DenseNet, space: ActionSpace, prefix_length: int,
                 threshold: float = 0.5, lr: float = 3e-4):
        if prefix_length < 1:
            raise ConfigError("prefix_length must be >= 1")
        if not 0.0 < threshold < 1.0:
            raise ConfigError("threshold must lie in (0, 1)")
        if net.n_out != 1:
            raise ConfigError("termination net must have a single output")
        self.net = net
        self.space = space
        self.prefix_length = prefix_length
        self.threshold = threshold
        self.lr = lr
        self.opt = AdamState.like(net.params)

    @classmethod
    def build(cls, obs_dim: int, space: ActionSpace, prefix_length: int,
              hidden: tuple[int, ...], rng: np.random.Generator, **kw) -> "TerminationFn":
        net = DenseNet.init((obs_dim + space.encoded_dim, *hidden, 1), "tanh", rng)
        return cls(net, space, prefix_length, **kw)

    def inputs(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return np.concatenate([np.asarray(states, dtype=np.float64),
                               self.space.encode(actions)], axis=-1)

    def value(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Sigmoid output in (0, 1); batched or single."""
        return _sigmoid(self.net.forward(self.inputs(states, actions))[..., 0])

    def classify(self, state: np.ndarray, action: np.ndarray) -> int:
        return classify(self, state, action)


def classify(fn: TerminationFn, state: np.ndarray, action: np.ndarray) -> int:
    """1 (termination) iff the sigmoid output reaches the threshold; ties terminate."""
    return int(float(fn.value(state, action)) >= fn.threshold)


@dataclass
class Option:
    policy: object  # GaussianHead or CategoricalHead, frozen
    alpha: float
    mature: bool = True


@dataclass
class OptionSet:
    space: ActionSpace
    gamma_beta: float
    options: list[Option] = field(default_factory=list)
    terminations: list[TerminationFn] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.options)

    @property
    def k(self) -> int:
        return len(self.options)

    def prefix(self, i: int) -> TerminationFn:
        """Termination function of the prefix made of options 1..i."""
        if not 1 <= i <= self.k:
            raise ConfigError(f"prefix index {i} outside 1..{self.k}")
        return self.terminations[i - 1]

    def act(self, i: int, state: np.ndarray, rng: np.random.Generator | None,
            greedy: bool = False) -> np.ndarray:
        if not 1 <= i <= self.k:
            raise ConfigError(f"option index {i} outside 1..{self.k}")
        return policy_action(self.options[i - 1].policy, state, rng, greedy)

    def append(self, option: Option, termination: TerminationFn) -> None:
        if termination.prefix_length != self.k + 1:
            raise ConfigError("termination prefix length must equal the new option count")
        self.options.append(option)
        self.terminations.append(termination)

    def checksum(self) -> list[float]:
        """Parameter sums, one per frozen net; used to verify immutability."""
        out = []
        for opt, term in zip(self.options, self.terminations):
            out.append(float(np.sum(opt.policy.net.params)))
            out.append(float(np.sum(term.net.params)))
        return out


def eligible(option_set: OptionSet, i: int, state: np.ndarray, action_i: np.ndarray) -> bool:
    """Whether option ``i`` may act on ``(state, action_i)``.

    Eligible when the prefix before it classifies termination and the prefix
    including it classifies non-termination. The empty prefix counts as
    termination. The last option is also eligible when every prefix
    classifies termination.
    """
    k = option_set.k
    if not 1 <= i <= k:
        raise ConfigError(f"option index {i} outside 1..{k}")
    prev = 1 if i == 1 else classify(option_set.prefix(i - 1), state, action_i)
    own = classify(option_set.prefix(i), state, action_i)
    if prev == 1 and own == 0:
        return True
    if i == k:
        return all(classify(option_set.prefix(j), state, action_i) == 1 for j in range(1, k + 1))
    return False


def td_targets(fn: TerminationFn, batch: Batch, gamma_beta: float) -> np.ndarray:
    boot = fn.value(batch.next_states, batch.next_actions)
    y = batch.term_rewards + gamma_beta * (1.0 - batch.dones) * boot
    return np.clip(y, 0.0, 1.0)


def td_update_beta(fn: TerminationFn, batch: Batch, gamma_beta: float) -> float:
    """Regress the sigmoid output toward r_beta + gamma_beta * beta(s', a') (squared error)."""
    y = td_targets(fn, batch, gamma_beta)
    out, acts = fn.net.forward_cached(fn.inputs(batch.states, batch.actions))
    p = _sigmoid(out[:, 0])
    resid = p - y
    n = len(y)
    g = (2.0 * resid * p * (1.0 - p) / n)[:, None]
    grads, _ = fn.net.backward_cached(acts, g, need_input=False)
    adam_step(fn.net.params, grads, fn.opt, fn.lr)
    return float(np.mean(resid * resid))


def geometric_labels(length: int, gamma_beta: float, failed: bool) -> np.ndarray:
    """Labels gamma_beta**(T-1-t) for a trajectory that ended in failure, else zeros."""
    if length < 1:
        raise ConfigError("trajectory length must be >= 1")
    if not failed:
        return np.zeros(length)
    return gamma_beta ** np.arange(length - 1, -1, -1, dtype=np.float64)


@dataclass
class LabeledPool:
    """Bounded FIFO of (state, action, label) records for BCE training."""

    capacity: int = BCE_POOL_MAX
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    labels: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.labels)

    def add_trajectory(self, states, actions, labels) -> None:
        self.states.extend(states)
        self.actions.extend(actions)
        self.labels.extend(float(y) for y in labels)
        extra = len(self.labels) - self.capacity
        if extra > 0:
            del self.states[:extra], self.actions[:extra], self.labels[:extra]

    def arrays(self):
        return (np.asarray(self.states, dtype=np.float64),
                np.asarray(self.actions, dtype=np.float64).reshape(len(self), -1),
                np.asarray(self.labels, dtype=np.float64))


def bce_loss(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


def bce_train_beta(fn: TerminationFn, pool: LabeledPool, epochs: int,
                   rng: np.random.Generator, batch_size: int = 32) -> float | None:
    """Balanced binary cross-entropy training; returns the final pool loss.

    Every minibatch is half records with label >= 0.5 and half with label
    < 0.5, drawn with replacement when a side has fewer records than half a
    batch. Returns None (with a warning) when either side is empty.
    """
    states, actions, labels = pool.arrays()
    pos = np.flatnonzero(labels >= 0.5)
    neg = np.flatnonzero(labels < 0.5)
    if len(pos) == 0 or len(neg) == 0:
        msg = (f"BCE training of prefix {fn.prefix_length} skipped: "
               f"{len(pos)} termination / {len(neg)} non-termination records")
        warnings.warn(msg, BceSkippedWarning, stacklevel=2)
        log.warning(msg)
        return None
    x_all = fn.inputs(states, actions)
    half = max(1, batch_size // 2)
    steps = max(1, len(labels) // (2 * half))
    for _ in range(epochs):
        for _ in range(steps):
            ip = rng.choice(pos, size=half, replace=len(pos) < half)
            ineg = rng.choice(neg, size=half, replace=len(neg) < half)
            idx = np.concatenate([ip, ineg])
            out, acts = fn.net.forward_cached(x_all[idx])
            # d BCE / d logit = sigmoid - y
            g = ((_sigmoid(out[:, 0]) - labels[idx]) / len(idx))[:, None]
            grads, _ = fn.net.backward_cached(acts, g, need_input=False)
            adam_step(fn.net.params, grads, fn.opt, fn.lr)
    p = _sigmoid(fn.net.forward(x_all)[:, 0])
    return float(np.mean(bce_loss(p, labels)))


def warm_start_prefix(option_set: OptionSet, new_fn: TerminationFn) -> TerminationFn:
    """Copy the latest prefix's parameters into ``new_fn`` (no-op for the first option)."""
    if option_set.k >= 1:
        src = option_set.prefix(option_set.k)
        if src.net.layer_sizes != new_fn.net.layer_sizes:
            raise ConfigError("warm start needs identical termination architectures")
        new_fn.net.params[...] = src.net.params
    return new_fn


def nesting_violation_rate(option_set: OptionSet, states: np.ndarray, actions: np.ndarray) -> float:
    """Fraction of (state, action) pairs where prefix i-1 says non-termination but prefix i says termination.

    Averaged over every consecutive prefix pair; 0.0 when fewer than two options exist.
    """
    if option_set.k < 2 or len(states) == 0:
        return 0.0
    rates = []
    for i in range(2, option_set.k + 1):
        prev = option_set.prefix(i - 1).value(states, actions) >= option_set.prefix(i - 1).threshold
        cur = option_set.prefix(i).value(states, actions) >= option_set.prefix(i).threshold
        rates.append(float(np.mean(~prev & cur)))
    return float(np.mean(rates))
