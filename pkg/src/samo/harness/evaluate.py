"""Greedy (or stochastic) evaluation of a checkpoint and trajectory export."""
from __future__ import annotations

import csv
from collections import Counter
from pathlib import Path

import numpy as np

from samo.envs import make_env
from samo.harness.checkpoint import load_checkpoint
from samo.options import OptionSet, nesting_violation_rate
from samo.train import run_episode

TRACE_FIELDS = ("step", "x", "y", "theta", "action", "reward", "active_option")


def evaluate_option_set(option_set: OptionSet, env, episodes: int, greedy: bool = True,
                        t_min: int = 1, rng: np.random.Generator | None = None) -> dict:
    lengths, outcomes = [], Counter()
    occupancy = np.zeros(option_set.k)
    states, actions = [], []
    for _ in range(episodes):
        ep = run_episode(option_set, env, rng, greedy, t_min=t_min, record=True)
        lengths.append(ep["length"])
        outcomes[ep["outcome"]] += 1
        occupancy += ep["hist"]
        states.extend(ep["states"])
        actions.extend(ep["actions"])
    lengths = np.asarray(lengths)
    report = {
        "episodes": episodes,
        "mean_length": float(lengths.mean()),
        "min_length": int(lengths.min()),
        "max_length": int(lengths.max()),
        "outcomes": dict(sorted(outcomes.items(), key=lambda kv: str(kv[0]))),
        "occupancy": (occupancy / occupancy.sum()).tolist(),
        "nesting_violation": nesting_violation_rate(
            option_set, np.asarray(states), np.asarray(actions).reshape(len(actions), -1)),
    }
    if getattr(env, "name", "") == "goal_corridor":
        report["success_rate"] = outcomes["goal"] / episodes
    return report


def _env_for(meta: dict, env_name: str | None, seed: int):
    name = env_name or meta["env"]
    params = meta.get("env_params", {}) if name == meta.get("env") else {}
    return make_env(name, params, seed=seed)


def evaluate(checkpoint: str | Path, env_name: str | None = None, episodes: int = 100,
             greedy: bool = True, seed: int = 0, t_min: int | None = None) -> dict:
    """Run the cascade stored in ``checkpoint`` for ``episodes`` episodes."""
    option_set, meta = load_checkpoint(checkpoint)
    env = _env_for(meta, env_name, seed)
    rng = None if greedy else np.random.default_rng(seed)
    t = meta.get("t_min", 1) if t_min is None else t_min
    report = evaluate_option_set(option_set, env, episodes, greedy, t, rng)
    report["checkpoint"] = str(checkpoint)
    report["env"] = env.name
    report["greedy"] = greedy
    return report


def trace(checkpoint: str | Path, out: str | Path, env_name: str | None = None,
          seed: int = 0, greedy: bool = True) -> int:
    """Write one episode as CSV rows (step, x, y, theta, action, reward, active_option)."""
    option_set, meta = load_checkpoint(checkpoint)
    env = _env_for(meta, env_name, seed)
    rng = None if greedy else np.random.default_rng(seed)
    ep = run_episode(option_set, env, rng, greedy, t_min=meta.get("t_min", 1), record=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_FIELDS)
        for t, (pose, a, r, j) in enumerate(zip(ep["poses"], ep["actions"], ep["rewards"],
                                                ep["active"])):
            act = ";".join(repr(float(v)) for v in np.atleast_1d(a))
            w.writerow([t, repr(pose[0]), repr(pose[1]), repr(pose[2]), act, repr(float(r)), j])
    return ep["length"]
