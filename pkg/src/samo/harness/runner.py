"""Seeded experiment runs: metrics CSV per seed, checkpoints at every option freeze, resume."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from samo.envs import make_env
from samo.errors import ConfigError
from samo.harness.checkpoint import load_checkpoint, load_state, save_checkpoint, save_state
from samo.harness.config import RunConfig, save_config, to_flat
from samo.options import OptionSet
from samo.train import EpisodeRecord, RunContext, train_all

log = logging.getLogger(__name__)

METRICS_FIELDS = ("run_id", "seed", "env_step", "episode", "episode_length", "return", "alpha",
                  "option_hist", "option_count", "event")
FINAL_WINDOW = 0.1


@dataclass
class SeedStreams:
    env_seed: int
    policy: np.random.Generator
    buffer: np.random.Generator
    init: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "SeedStreams":
        env_ss, pol, buf, init = np.random.SeedSequence(seed).spawn(4)
        return cls(int(env_ss.generate_state(1)[0]), np.random.default_rng(pol),
                   np.random.default_rng(buf), np.random.default_rng(init))


def run_id(cfg: RunConfig, seed: int) -> str:
    kind = "sac" if cfg.baseline else f"samo{cfg.samo.max_options}"
    return f"{cfg.env.name}-{kind}-s{seed}"


def metrics_row(rid: str, seed: int, ctx: RunContext, rec: EpisodeRecord) -> dict:
    return {"run_id": rid, "seed": seed, "env_step": ctx.env_step, "episode": ctx.episode,
            "episode_length": rec.length, "return": repr(float(rec.ret)),
            "alpha": repr(float(rec.alpha)),
            "option_hist": ";".join(str(c) for c in rec.option_hist),
            "option_count": rec.option_count, "event": rec.event}


def read_metrics(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def final_window_mean(rows: list[dict], total_steps: int, frac: float = FINAL_WINDOW) -> float:
    """Mean episode length over episodes ending in the last ``frac`` of the step budget.

    Episodes cut short by an option freeze are left out.
    """
    start = (1.0 - frac) * total_steps
    lengths = [int(r["episode_length"]) for r in rows
               if int(r["env_step"]) > start and r["event"] != "option_frozen"]
    return float(np.mean(lengths)) if lengths else float("nan")


def _check_writable(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc


def _rng_states(ctx: RunContext) -> dict:
    return {"policy": ctx.policy_rng.bit_generator.state,
            "buffer": ctx.buffer_rng.bit_generator.state,
            "init": ctx.init_rng.bit_generator.state,
            "env": ctx.env.rng.bit_generator.state}


def _restore_rngs(ctx: RunContext, states: dict) -> None:
    ctx.policy_rng.bit_generator.state = states["policy"]
    ctx.buffer_rng.bit_generator.state = states["buffer"]
    ctx.init_rng.bit_generator.state = states["init"]
    ctx.env.rng.bit_generator.state = states["env"]


def _truncate_metrics(path: Path, rows: int) -> None:
    with open(path, newline="") as fh:
        lines = fh.readlines()
    with open(path, "w", newline="") as fh:
        fh.writelines(lines[: rows + 1])


def env_metadata(cfg: RunConfig) -> dict:
    return {"env": cfg.env.name, "env_params": cfg.env.as_dict(), "t_min": cfg.samo.t_min}


def run_seed(cfg: RunConfig, seed: int, seed_dir: str | Path, resume: bool = True,
             after_freeze: Callable[[OptionSet, RunContext], None] | None = None) -> dict:
    """Train one seed into ``seed_dir``; picks up from the last freeze checkpoint if present."""
    seed_dir = Path(seed_dir)
    _check_writable(seed_dir)
    metrics_path = seed_dir / "metrics.csv"
    state_path = seed_dir / "state.json"
    rid = run_id(cfg, seed)
    streams = SeedStreams.from_seed(seed)
    env = make_env(cfg.env.name, cfg.env.as_dict(), seed=streams.env_seed)
    ctx = RunContext(env, streams.policy, streams.buffer, streams.init, cfg.total_steps)
    meta = env_metadata(cfg)

    option_set = None
    state = load_state(state_path) if resume and state_path.exists() else None
    if state is not None and state.get("complete"):
        log.info("%s already complete", rid)
        return _seed_summary(cfg, seed, seed_dir)
    if state is not None:
        option_set, _ = load_checkpoint(seed_dir / state["checkpoint"])
        _restore_rngs(ctx, state["rng"])
        ctx.env_step, ctx.episode = state["env_step"], state["episode"]
        _truncate_metrics(metrics_path, state["rows"])
        log.info("%s resumed with %d options at step %d", rid, option_set.k, ctx.env_step)
    else:
        with open(metrics_path, "w", newline="") as fh:
            csv.DictWriter(fh, METRICS_FIELDS).writeheader()

    fh = open(metrics_path, "a", newline="")
    writer = csv.DictWriter(fh, METRICS_FIELDS)
    rows_written = state["rows"] if state is not None else 0

    def on_episode(c: RunContext, rec: EpisodeRecord) -> None:
        nonlocal rows_written
        writer.writerow(metrics_row(rid, seed, c, rec))
        fh.flush()
        rows_written += 1

    def on_freeze(oset: OptionSet, c: RunContext) -> None:
        name = f"options_k{oset.k}.samo"
        save_checkpoint(seed_dir / name, oset, meta)
        save_state(state_path, {"checkpoint": name, "env_step": c.env_step,
                                "episode": c.episode, "rows": rows_written,
                                "rng": _rng_states(c), "complete": False})
        if after_freeze is not None:
            after_freeze(oset, c)

    ctx.on_episode = on_episode
    try:
        option_set = train_all(env, cfg.sac, cfg.samo, ctx, option_set, on_freeze=on_freeze)
    finally:
        fh.close()
    save_checkpoint(seed_dir / "final.samo", option_set, meta)
    save_state(state_path, {"checkpoint": "final.samo", "env_step": ctx.env_step,
                            "episode": ctx.episode, "rows": rows_written,
                            "rng": _rng_states(ctx), "complete": True})
    return _seed_summary(cfg, seed, seed_dir)


def _seed_summary(cfg: RunConfig, seed: int, seed_dir: Path) -> dict:
    rows = read_metrics(seed_dir / "metrics.csv")
    option_set, _ = load_checkpoint(seed_dir / "final.samo")
    return {"seed": seed, "metrics": str(seed_dir / "metrics.csv"),
            "checkpoint": str(seed_dir / "final.samo"),
            "episodes": len(rows),
            "final_window_mean_length": final_window_mean(rows, cfg.total_steps),
            "options": option_set.k,
            "immature_options": sum(not o.mature for o in option_set.options),
            "freeze_events": sum(r["event"] == "option_frozen" for r in rows)}


def run_experiment(cfg: RunConfig, out: str | Path | None = None, seeds: list[int] | None = None,
                   resume: bool = True) -> dict:
    """Run every seed, writing ``seed_<n>/metrics.csv`` and one ``manifest.json``."""
    out = Path(out or cfg.out or "runs")
    _check_writable(out)
    save_config(cfg, out / "config.yaml")
    seeds = list(cfg.seeds if seeds is None else seeds)
    per_seed = [run_seed(cfg, s, out / f"seed_{s}", resume) for s in seeds]
    manifest = out / "manifest.json"
    if manifest.exists():
        # keep seeds recorded by earlier calls for the same config
        old = json.loads(manifest.read_text())
        if old.get("config") == to_flat(cfg):
            per_seed += [p for p in old["seeds"] if p["seed"] not in seeds]
    per_seed.sort(key=lambda p: p["seed"])
    finals = [p["final_window_mean_length"] for p in per_seed]
    summary = {"config": to_flat(cfg), "seeds": per_seed,
               "final_window_mean_length": float(np.mean(finals)),
               "baseline": cfg.baseline}
    manifest.write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary
