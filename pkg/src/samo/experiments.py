"""Reference experiments shared by ``scripts/`` and the acceptance tests.

Each ``criterion_*`` function runs one check end to end and returns a
``Result`` with a pass flag and the numbers behind it. The long-running ones
go through ``run_experiment`` with the YAML configs in ``configs/``, the same
path the ``samo train`` command takes.
"""
from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from samo.envs import make_env
from samo.envs.two_zone import N_POSITIONS, required_action
from samo.harness.checkpoint import load_checkpoint
from samo.harness.config import RunConfig, parse_config
from samo.harness.evaluate import evaluate_option_set
from samo.harness.runner import run_experiment
from samo.nncore import DenseNet, backward
from samo.options import Option, OptionSet, eligible, geometric_labels
from samo.policy import ActionSpace
from samo.sac import Batch, SacLearner, SacParams, sac_update, update_alpha
from samo.train import ExecState, select_action_cascade

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


@dataclass
class Result:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        shown = ", ".join(f"{k}={_fmt(v)}" for k, v in self.detail.items())
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {shown}"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(str(_fmt(x)) for x in v) + "]"
    return str(v)


def load_named_config(name: str) -> RunConfig:
    return parse_config(CONFIG_DIR / f"{name}.yaml")


# -- 1: gradient soundness ------------------------------------------------------

def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    return np.abs(a - b) / np.maximum(floor, np.maximum(np.abs(a), np.abs(b)))


def finite_difference_grad(net: DenseNet, x: np.ndarray, upstream: np.ndarray,
                           eps: float = 1e-5) -> np.ndarray:
    """Central differences of ``upstream . net(x)`` with respect to every parameter."""
    grad = np.empty_like(net.params)
    for i in range(len(net.params)):
        keep = net.params[i]
        net.params[i] = keep + eps
        up = float(np.sum(upstream * net.forward(x)))
        net.params[i] = keep - eps
        dn = float(np.sum(upstream * net.forward(x)))
        net.params[i] = keep
        grad[i] = (up - dn) / (2.0 * eps)
    return grad


def criterion_gradients(n_nets: int = 100, seed: int = 0, tol: float = 1e-4,
                        time_limit: float = 30.0) -> Result:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(n_nets):
        depth = int(rng.integers(1, 4))
        sizes = [int(n) for n in rng.integers(1, 17, size=depth + 1)]
        net = DenseNet.init(sizes, str(rng.choice(["tanh", "relu"])), rng)
        x = rng.normal(size=sizes[0])
        up = rng.normal(size=sizes[-1])
        analytic, _ = backward(net, x, up)
        worst = max(worst, float(relative_error(analytic, finite_difference_grad(net, x, up)).max()))
    elapsed = time.perf_counter() - t0
    return Result("1 gradient soundness", worst < tol and elapsed < time_limit,
                  {"nets": n_nets, "max_rel_err": worst, "seconds": elapsed})


# -- 2 and 3: mocked cascade and eligibility ------------------------------------------

class ScriptedPolicy:
    """Always proposes the same action; stands in for a frozen head."""

    discrete = False

    def __init__(self, action: float):
        self.action = np.array([action])
        self.net = DenseNet((1, 2))
        self.action_dim = 1

    def greedy(self, state):
        return self.action

    def sample(self, state, noise):
        return self.action, 0.0


class ScriptedTermination:
    """Hard output per proposed action: ``table[action]`` in {0, 1}."""

    threshold = 0.5

    def __init__(self, prefix_length: int, table: dict[float, int]):
        self.prefix_length = prefix_length
        self.table = table
        self.net = DenseNet((1, 1))

    def value(self, state, action):
        return float(self.table[float(np.asarray(action).reshape(-1)[0])])


def scripted_option_set(verdicts: list[list[int]]) -> OptionSet:
    """``verdicts[j-1][i-1]`` is prefix j's verdict on option i's proposal (action i)."""
    k = len(verdicts)
    oset = OptionSet(ActionSpace("continuous", 1), 0.95)
    for j in range(1, k + 1):
        table = {float(i): verdicts[j - 1][i - 1] for i in range(1, k + 1)}
        oset.append(Option(ScriptedPolicy(float(j)), 0.05), ScriptedTermination(j, table))
    return oset


# nested verdicts for k = 3: row = prefix, column = proposing option
CASCADE_TRACES = {
    "prefix-1 accepts option 1": ([[0, 1, 1], [0, 0, 1], [0, 0, 0]], 1),
    "prefix-2 accepts after prefix-1 rejects": ([[1, 1, 1], [1, 0, 1], [1, 0, 0]], 2),
    "every prefix rejects": ([[1, 1, 1], [1, 1, 1], [1, 1, 1]], 3),
}


def criterion_cascade() -> Result:
    t0 = time.perf_counter()
    got = {}
    ok = True
    for name, (verdicts, expected) in CASCADE_TRACES.items():
        oset = scripted_option_set(verdicts)
        # the earliest-capable rule ignores the active index; the literal walk is traced from
        # the episode-start index k
        runs = [(active, False) for active in (1, 2, 3)] + [(3, True)]
        for active, literal in runs:
            a, ex = select_action_cascade(oset, np.zeros(1), ExecState(active), greedy=True,
                                          literal=literal)
            ok &= ex.active == expected and float(a[0]) == float(expected)
        got[name] = ex.active
    elapsed = time.perf_counter() - t0
    return Result("2 cascade hand-traces", ok and elapsed < 1.0,
                  {**{k: v for k, v in got.items()}, "seconds": elapsed})


EXPECTED_LABELS = (0.81450625, 0.857375, 0.9025, 0.95, 1.0)


def criterion_truth_table() -> Result:
    table = {}
    ok = True
    for prev in (0, 1):
        for own in (0, 1):
            # option 2 of 3; the last prefix accepts so the fallback never applies
            verdicts = [[prev] * 3, [own] * 3, [0] * 3]
            got = eligible(scripted_option_set(verdicts), 2, np.zeros(1), np.array([2.0]))
            want = prev == 1 and own == 0
            table[f"prev={prev},own={own}"] = int(got)
            ok &= got == want
    # option 1 (empty prefix counts as termination) and the last-option fallback
    ok &= eligible(scripted_option_set([[0], ]), 1, np.zeros(1), np.array([1.0]))
    ok &= not eligible(scripted_option_set([[1, 1], [1, 0]]), 1, np.zeros(1), np.array([1.0]))
    ok &= eligible(scripted_option_set([[1, 1], [1, 1]]), 2, np.zeros(1), np.array([2.0]))
    labels = geometric_labels(5, 0.95, True)
    label_err = float(np.max(np.abs(labels - np.array(EXPECTED_LABELS))))
    ok &= label_err <= 1e-12
    return Result("3 eligibility truth table + labels", bool(ok),
                  {**table, "label_max_err": label_err})


# -- 4: SAC sanity ------------------------------------------------------------------

MDP_REWARD = np.array([[0.0, 1.0], [0.5, 0.0]])  # r(s, a); action a leads to state a


def soft_value_iteration(reward: np.ndarray, gamma: float, alpha: float,
                         iters: int = 5000) -> np.ndarray:
    """Soft-optimal Q for deterministic dynamics s' = a."""
    q = np.zeros_like(reward)
    for _ in range(iters):
        v = alpha * np.log(np.exp(q / alpha).sum(axis=1))
        q = reward + gamma * v[None, :]
    return q


def criterion_sac(seed: int = 0, updates: int = 20_000, gamma: float = 0.9, alpha: float = 0.2,
                  tol: float = 0.05) -> Result:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    space = ActionSpace("discrete", 2)
    learner = SacLearner(2, space, SacParams(gamma=gamma, init_alpha=alpha, learn_alpha=False),
                         rng)
    eye = np.eye(2)
    oracle = soft_value_iteration(MDP_REWARD, gamma, alpha)
    for _ in range(updates):
        s = rng.integers(2, size=learner.params.batch)
        a = rng.integers(2, size=learner.params.batch)
        batch = Batch(eye[s], a[:, None].astype(np.float64), eye[a], MDP_REWARD[s, a],
                      np.zeros(len(s)), np.zeros(len(s)), np.zeros((len(s), 1)))
        sac_update(batch, learner, rng)
    q_err = max(float(np.abs(learner.q1.forward(eye) - oracle).max()),
                float(np.abs(learner.q2.forward(eye) - oracle).max()))

    # temperature: with a two-way softmax -log pi <= log 2 but H = -1, so E[-log pi - H] > 0
    fresh = SacLearner(2, space, SacParams(), np.random.default_rng(seed + 1))
    alphas = [fresh.alpha]
    decreasing = True
    for _ in range(50):
        s = rng.integers(2, size=16)
        logp = fresh.policy.log_probs(eye[s])
        drive = float(np.mean(-(np.exp(logp) * logp).sum(axis=1) - fresh.target_entropy))
        update_alpha(None, fresh, (np.exp(logp) * logp).sum(axis=1))
        decreasing &= drive > 0 and fresh.alpha < alphas[-1]
        alphas.append(fresh.alpha)
    elapsed = time.perf_counter() - t0
    return Result("4 SAC sanity (2-state MDP)", q_err < tol and decreasing and elapsed < 120,
                  {"q_max_err": q_err, "alpha_strictly_decreasing": decreasing,
                   "alpha_after_50": alphas[-1], "seconds": elapsed})


# -- 5: two-zone partition ------------------------------------------------------------

def two_zone_oracle(max_steps: int = 200) -> np.ndarray:
    """Best achievable episode length from every start, by dynamic programming over (t, pos)."""
    best = np.zeros(N_POSITIONS, dtype=np.int64)  # steps to go = 0
    for _ in range(max_steps):
        nxt = np.empty_like(best)
        for pos in range(N_POSITIONS):
            # the wrong action still counts the failing step
            nxt[pos] = max(1 + best[(pos + 1) % N_POSITIONS] if a == required_action(pos) else 1
                           for a in (0, 1))
        best = nxt
    return best


def two_zone_bruteforce(start: int, horizon: int) -> int:
    """Longest episode over every action sequence of length ``horizon`` (cap = horizon)."""
    from itertools import product

    env = make_env("two_zone", {"max_steps": horizon})
    longest = 0
    for seq in product((0, 1), repeat=horizon):
        env.reset(start=start)
        n, done = 0, False
        for a in seq:
            _, _, done, _ = env.step([a])
            n += 1
            if done:
                break
        longest = max(longest, n)
    return longest


def _greedy_report(seed_dir: Path, episodes: int, seed: int = 10_000) -> dict:
    option_set, meta = load_checkpoint(seed_dir / "final.samo")
    env = make_env(meta["env"], meta["env_params"], seed=seed)
    return evaluate_option_set(option_set, env, episodes, greedy=True, t_min=meta["t_min"])


def criterion_two_zone(out: str | Path, seeds=(0, 1, 2, 3, 4), episodes: int = 50,
                       config: str = "two_zone") -> Result:
    cfg = load_named_config(config)
    oracle = float(two_zone_oracle(cfg.env.max_steps).mean())
    out = Path(out)
    lengths, times = [], []
    for s in seeds:
        t0 = time.perf_counter()
        run_experiment(cfg, out, seeds=[s])
        times.append(time.perf_counter() - t0)
        lengths.append(_greedy_report(out / f"seed_{s}", episodes)["mean_length"])
    hits = [m >= 0.95 * oracle for m in lengths]
    ok = sum(hits) >= len(seeds) - 1 and max(times) < 300
    return Result("5 two-zone partition", ok,
                  {"oracle": oracle, "greedy_mean_lengths": lengths, "seeds_passing": sum(hits),
                   "max_seed_seconds": max(times)})


# -- 6 and 7: corridor orderings ------------------------------------------------------

def _final_windows(cfg: RunConfig, out: Path, seeds) -> tuple[list[float], list[float]]:
    finals, times = [], []
    for s in seeds:
        t0 = time.perf_counter()
        summary = run_experiment(cfg, out, seeds=[s])
        times.append(time.perf_counter() - t0)
        finals.append(next(p["final_window_mean_length"] for p in summary["seeds"]
                           if p["seed"] == s))
    return finals, times


def criterion_corridor(out: str | Path, seeds=(0, 1, 2, 3, 4)) -> Result:
    out = Path(out)
    samo, t_samo = _final_windows(load_named_config("corridor_samo3"), out / "samo3", seeds)
    sac, t_sac = _final_windows(load_named_config("corridor_sac"), out / "sac", seeds)
    m_samo, m_sac = float(np.mean(samo)), float(np.mean(sac))
    ok = m_samo >= 1.2 * m_sac and m_samo >= 300 and max(t_samo + t_sac) <= 900
    return Result("6 corridor SAMO vs SAC", ok,
                  {"samo_mean": m_samo, "sac_mean": m_sac, "ratio": m_samo / m_sac,
                   "samo_per_seed": samo, "sac_per_seed": sac,
                   "max_seed_seconds": max(t_samo + t_sac)})


def criterion_shaping(out: str | Path, seeds=(0, 1, 2, 3, 4)) -> Result:
    out = Path(out)
    on, _ = _final_windows(load_named_config("corridor_samo4_shaping"), out / "shaping_on", seeds)
    off, _ = _final_windows(load_named_config("corridor_samo4_noshaping"), out / "shaping_off",
                            seeds)
    m_on, m_off = float(np.mean(on)), float(np.mean(off))
    return Result("7 shaping ablation", m_on >= m_off,
                  {"shaping_on_mean": m_on, "shaping_off_mean": m_off,
                   "on_per_seed": on, "off_per_seed": off})


# -- 8: goal corridor -------------------------------------------------------------------

def criterion_goal(out: str | Path, seeds=(0, 1, 2, 3, 4), episodes: int = 100) -> Result:
    cfg = load_named_config("goal_corridor")
    out = Path(out)
    rates = []
    for s in seeds:
        run_experiment(cfg, out, seeds=[s])
        rates.append(_greedy_report(out / f"seed_{s}", episodes)["success_rate"])
    hits = sum(r >= 0.9 for r in rates)
    return Result("8 goal corridor", hits >= len(seeds) - 1,
                  {"success_rates": rates, "seeds_passing": hits})


# -- 9: reproducibility -------------------------------------------------------------------

def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def criterion_reproducibility(out: str | Path, config: str = "two_zone", seed: int = 0,
                              reference: str | Path | None = None) -> Result:
    """Run ``config`` for ``seed`` into two fresh directories and compare the metrics bytes.

    ``reference`` may name an earlier run directory of the same config to compare against too.
    """
    cfg = load_named_config(config)
    out = Path(out)
    digests = []
    for tag in ("a", "b"):
        run_experiment(cfg, out / tag, seeds=[seed], resume=False)
        digests.append(file_digest(out / tag / f"seed_{seed}" / "metrics.csv"))
    if reference is not None:
        digests.append(file_digest(Path(reference) / f"seed_{seed}" / "metrics.csv"))
    return Result("9 reproducibility", len(set(digests)) == 1,
                  {"config": config, "seed": seed, "digests": [d[:12] for d in digests]})
