"""Run configuration: YAML files with nested sections, validated into dataclasses.

Every key is addressed by its dotted name (``sac.lr``). Required keys must be
present; anything not listed in ``REQUIRED`` or ``OPTIONAL`` is rejected.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from samo.envs import ENV_NAMES
from samo.errors import ConfigError
from samo.sac import SacParams
from samo.train import SamoParams

REQUIRED = (
    "env.name", "env.max_steps", "env.k_frames",
    "sac.lr", "sac.gamma", "sac.tau", "sac.batch", "sac.buffer",
    "samo.alpha_min", "samo.gamma_beta", "samo.max_options", "samo.t_min",
    "samo.shaping", "samo.step_budget",
    "run.seeds", "run.total_steps",
)
OPTIONAL = ("env.map", "sac.warmup", "sac.hidden", "samo.bce_first", "samo.bce_epochs",
            "samo.threshold", "run.out")


@dataclass
class EnvConfig:
    name: str
    max_steps: int
    k_frames: int
    map: str | None = None

    def as_dict(self) -> dict:
        return {"max_steps": self.max_steps, "k_frames": self.k_frames, "map": self.map}


@dataclass
class RunConfig:
    env: EnvConfig
    sac: SacParams
    samo: SamoParams
    seeds: list[int] = field(default_factory=lambda: [0])
    total_steps: int = 100_000
    out: str | None = None

    @property
    def baseline(self) -> bool:
        """A one-option run is plain SAC for the whole budget."""
        return self.samo.max_options == 1


def flatten(tree: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in tree.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten(value, name + "."))
        else:
            flat[name] = value
    return flat


def _as_int(key, v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{key} must be an integer, got {v!r}")
    return v


def _as_float(key, v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key} must be a number, got {v!r}")
    return float(v)


def _as_bool(key, v) -> bool:
    if isinstance(v, bool):
        return v
    if v in ("on", "off"):
        return v == "on"
    raise ConfigError(f"{key} must be a boolean (or on/off), got {v!r}")


def _unit(key, v):
    if not (0.0 < v <= 1.0):
        raise ConfigError(f"{key}={v} outside (0, 1]")
    return v


def from_flat(flat: dict) -> RunConfig:
    unknown = sorted(set(flat) - set(REQUIRED) - set(OPTIONAL))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    missing = [k for k in REQUIRED if k not in flat]
    if missing:
        raise ConfigError(f"missing config key(s): {', '.join(missing)}")
    g = flat.get

    name = g("env.name")
    if name not in ENV_NAMES:
        raise ConfigError(f"env.name={name!r} is not one of {ENV_NAMES}")
    env = EnvConfig(name, _as_int("env.max_steps", g("env.max_steps")),
                    _as_int("env.k_frames", g("env.k_frames")), g("env.map"))
    if env.max_steps < 1 or env.k_frames < 1:
        raise ConfigError("env.max_steps and env.k_frames must be >= 1")

    lr = _as_float("sac.lr", g("sac.lr"))
    if lr <= 0:
        raise ConfigError(f"sac.lr={lr} must be > 0")
    hidden = tuple(g("sac.hidden", (64, 64)))
    if not hidden or any(_as_int("sac.hidden", h) < 1 for h in hidden):
        raise ConfigError("sac.hidden must list positive layer widths")
    sac = SacParams(
        lr=lr,
        gamma=_unit("sac.gamma", _as_float("sac.gamma", g("sac.gamma"))),
        tau=_unit("sac.tau", _as_float("sac.tau", g("sac.tau"))),
        batch=_as_int("sac.batch", g("sac.batch")),
        buffer=_as_int("sac.buffer", g("sac.buffer")),
        warmup=_as_int("sac.warmup", g("sac.warmup", 1000)),
        hidden=hidden,
    )
    if sac.batch < 1 or sac.buffer < 1 or sac.warmup < 0:
        raise ConfigError("sac.batch and sac.buffer must be >= 1, sac.warmup >= 0")

    alpha_min = _as_float("samo.alpha_min", g("samo.alpha_min"))
    if not 0.0 < alpha_min < 1.0:
        raise ConfigError(f"samo.alpha_min={alpha_min} outside (0, 1)")
    samo = SamoParams(
        alpha_min=alpha_min,
        gamma_beta=_unit("samo.gamma_beta", _as_float("samo.gamma_beta", g("samo.gamma_beta"))),
        max_options=_as_int("samo.max_options", g("samo.max_options")),
        t_min=_as_int("samo.t_min", g("samo.t_min")),
        shaping=_as_bool("samo.shaping", g("samo.shaping")),
        step_budget=_as_int("samo.step_budget", g("samo.step_budget")),
        bce_first=_as_bool("samo.bce_first", g("samo.bce_first", True)),
        bce_epochs=_as_int("samo.bce_epochs", g("samo.bce_epochs", 20)),
        threshold=_as_float("samo.threshold", g("samo.threshold", 0.5)),
    )

    seeds = g("run.seeds")
    if isinstance(seeds, int) and not isinstance(seeds, bool):
        seeds = [seeds]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("run.seeds must be a non-empty list of integers")
    seeds = [_as_int("run.seeds", s) for s in seeds]
    total = _as_int("run.total_steps", g("run.total_steps"))
    if total < 1:
        raise ConfigError("run.total_steps must be >= 1")
    return RunConfig(env, sac, samo, seeds, total, g("run.out"))


def to_flat(cfg: RunConfig) -> dict:
    flat = {
        "env.name": cfg.env.name, "env.max_steps": cfg.env.max_steps,
        "env.k_frames": cfg.env.k_frames,
        "sac.lr": cfg.sac.lr, "sac.gamma": cfg.sac.gamma, "sac.tau": cfg.sac.tau,
        "sac.batch": cfg.sac.batch, "sac.buffer": cfg.sac.buffer,
        "sac.warmup": cfg.sac.warmup, "sac.hidden": list(cfg.sac.hidden),
        "samo.alpha_min": cfg.samo.alpha_min, "samo.gamma_beta": cfg.samo.gamma_beta,
        "samo.max_options": cfg.samo.max_options, "samo.t_min": cfg.samo.t_min,
        "samo.shaping": cfg.samo.shaping, "samo.step_budget": cfg.samo.step_budget,
        "samo.bce_first": cfg.samo.bce_first, "samo.bce_epochs": cfg.samo.bce_epochs,
        "samo.threshold": cfg.samo.threshold,
        "run.seeds": list(cfg.seeds), "run.total_steps": cfg.total_steps,
    }
    if cfg.env.map is not None:
        flat["env.map"] = cfg.env.map
    if cfg.out is not None:
        flat["run.out"] = cfg.out
    return flat


def nest(flat: dict) -> dict:
    tree: dict = {}
    for key, value in flat.items():
        node = tree
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return tree


def loads(text: str) -> RunConfig:
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(tree, dict):
        raise ConfigError("config must be a mapping of sections")
    return from_flat(flatten(tree))


def dumps(cfg: RunConfig) -> str:
    return yaml.safe_dump(nest(to_flat(cfg)), sort_keys=False)


def parse_config(path: str | Path) -> RunConfig:
    return loads(Path(path).read_text())


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(dumps(cfg))
