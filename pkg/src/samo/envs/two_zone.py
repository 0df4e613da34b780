"""Ten positions on a loop split into two zones that each demand one action.

Positions 0-4 survive only under action 0, positions 5-9 only under action 1.
Every surviving step advances the position by one. Small enough that the best
achievable survival from every start is known exactly.
"""
from __future__ import annotations

from collections import deque

import numpy as np

from samo.errors import UsageError
from samo.policy import ActionSpace

N_POSITIONS = 10


def required_action(position: int) -> int:
    return 0 if position < N_POSITIONS // 2 else 1


class TwoZoneEnv:
    name = "two_zone"

    def __init__(self, max_steps: int = 200, k_frames: int = 1, seed: int | None = None):
        self.max_steps = max_steps
        self.k_frames = k_frames
        self.action_space = ActionSpace("discrete", 2)
        self.rng = np.random.default_rng(seed)
        self._frames: deque = deque(maxlen=k_frames)
        self.position = 0
        self.t = 0
        self.done = True

    @property
    def obs_dim(self) -> int:
        return N_POSITIONS * self.k_frames

    @property
    def pose(self) -> tuple[float, float, float]:
        return float(self.position), 0.0, 0.0

    def _frame(self) -> np.ndarray:
        f = np.zeros(N_POSITIONS)
        f[self.position] = 1.0
        return f

    def reset(self, seed: int | None = None, start: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.position = int(self.rng.integers(N_POSITIONS)) if start is None else int(start)
        self.t = 0
        self.done = False
        self._frames.clear()
        for _ in range(self.k_frames - 1):
            self._frames.append(np.zeros(N_POSITIONS))
        self._frames.append(self._frame())
        return np.concatenate(self._frames)

    def step(self, action) -> tuple[np.ndarray, float, bool, dict]:
        if self.done:
            raise UsageError("step() called on a finished episode; call reset()")
        a = int(np.asarray(action).reshape(-1)[0])
        self.t += 1
        if a != required_action(self.position):
            self.done = True
            self._frames.append(self._frame())
            return np.concatenate(self._frames), -1.0, True, {"outcome": "failure"}
        self.position = (self.position + 1) % N_POSITIONS
        self._frames.append(self._frame())
        obs = np.concatenate(self._frames)
        if self.t >= self.max_steps:
            self.done = True
            return obs, 0.0, True, {"outcome": "cap"}
        return obs, 0.0, False, {"outcome": None}
