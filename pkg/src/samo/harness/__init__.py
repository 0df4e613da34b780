"""Configuration, seeded runs, checkpoints, evaluation and curve aggregation."""
from samo.harness.aggregate import aggregate_curves
from samo.harness.checkpoint import load_checkpoint, save_checkpoint
from samo.harness.config import RunConfig, parse_config
from samo.harness.evaluate import evaluate, trace
from samo.harness.runner import run_experiment

__all__ = ["RunConfig", "aggregate_curves", "evaluate", "load_checkpoint", "parse_config",
           "run_experiment", "save_checkpoint", "trace"]
