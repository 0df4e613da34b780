"""Learning-curve aggregation across seeds: mean episode length and a half-std band."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from samo.errors import ConfigError
from samo.harness.runner import read_metrics

CURVE_FIELDS = ("env_step", "mean_length", "half_std", "n_seeds")


def bucket_means(rows: list[dict], window: int) -> dict[int, float]:
    """Per-seed mean episode length for each bucket of ``window`` env steps."""
    sums: dict[int, list[int]] = {}
    for r in rows:
        b = (int(r["env_step"]) - 1) // window
        sums.setdefault(b, []).append(int(r["episode_length"]))
    return {b: float(np.mean(v)) for b, v in sums.items()}


def combine(per_seed: list[dict[int, float]], window: int) -> list[dict]:
    buckets = sorted(set().union(*per_seed)) if per_seed else []
    out = []
    for b in buckets:
        vals = np.array([m[b] for m in per_seed if b in m])
        half = 0.5 * float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        out.append({"env_step": (b + 1) * window, "mean_length": float(vals.mean()),
                    "half_std": half, "n_seeds": len(vals)})
    return out


def aggregate_curves(run_dir: str | Path, window: int = 5000, out: str | Path | None = None
                     ) -> list[dict]:
    """Combine every ``seed_*/metrics.csv`` below ``run_dir``; buckets with no episodes are omitted."""
    if window < 1:
        raise ConfigError("window must be >= 1")
    files = sorted(Path(run_dir).glob("seed_*/metrics.csv"))
    if not files:
        raise ConfigError(f"no seed_*/metrics.csv files under {run_dir}")
    curves = combine([bucket_means(read_metrics(f), window) for f in files], window)
    if out is not None:
        with open(out, "w", newline="") as fh:
            w = csv.DictWriter(fh, CURVE_FIELDS)
            w.writeheader()
            w.writerows(curves)
    return curves
