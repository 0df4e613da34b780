"""Environment factory."""
from __future__ import annotations

from samo.envs.corridor import (ColorCorridorEnv, CorridorEnv, GoalCorridorEnv, load_map)
from samo.envs.two_zone import TwoZoneEnv
from samo.errors import ConfigError

ENV_NAMES = ("corridor", "color_corridor", "goal_corridor", "two_zone")

# outcomes that count as failure for termination rewards and labels
FAILURE_OUTCOMES = frozenset({"failure", "wrong_corridor"})


def make_env(name: str, config: dict | None = None, seed: int | None = None):
    """Build an environment by name.

    ``config`` may carry ``max_steps``, ``k_frames`` and, for the corridor
    environments, ``map`` (path to a map file).
    """
    cfg = dict(config or {})
    kw = {k: cfg[k] for k in ("max_steps", "k_frames") if cfg.get(k) is not None}
    if name == "corridor":
        cmap = load_map(cfg["map"]) if cfg.get("map") else None
        return CorridorEnv(cmap, seed=seed, **kw)
    if name == "color_corridor":
        cmap = load_map(cfg["map"]) if cfg.get("map") else None
        return ColorCorridorEnv(cmap, seed=seed, **kw)
    if name == "goal_corridor":
        return GoalCorridorEnv(seed=seed, **kw)
    if name == "two_zone":
        return TwoZoneEnv(seed=seed, **kw)
    raise ConfigError(f"unknown environment {name!r}; expected one of {ENV_NAMES}")
