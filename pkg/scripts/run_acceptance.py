"""Run the acceptance criteria and print one PASS/FAIL line each.

    python3 scripts/run_acceptance.py --out runs/acceptance
    python3 scripts/run_acceptance.py --out runs/acceptance --only 5 9
"""
import argparse
import json
import sys
import time
from pathlib import Path

from samo import experiments as ex


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/acceptance", help="directory for run artifacts")
    ap.add_argument("--only", type=int, nargs="*", help="criterion numbers to run (default all)")
    ap.add_argument("--seeds", type=int, nargs="*", default=[0, 1, 2, 3, 4])
    ap.add_argument("--json", help="also write the results as JSON here")
    args = ap.parse_args(argv)

    out = Path(args.out)
    seeds = tuple(args.seeds)
    jobs = {
        1: lambda: ex.criterion_gradients(),
        2: lambda: ex.criterion_cascade(),
        3: lambda: ex.criterion_truth_table(),
        4: lambda: ex.criterion_sac(),
        5: lambda: ex.criterion_two_zone(out / "two_zone", seeds=seeds),
        6: lambda: ex.criterion_corridor(out / "corridor", seeds=seeds),
        7: lambda: ex.criterion_shaping(out / "shaping", seeds=seeds),
        8: lambda: ex.criterion_goal(out / "goal", seeds=seeds),
        9: lambda: ex.criterion_reproducibility(out / "repro", reference=out / "two_zone"
                                                if (out / "two_zone" / "seed_0").exists() else None),
    }
    results = []
    for n in args.only or sorted(jobs):
        t0 = time.perf_counter()
        res = jobs[n]()
        print(res.line(), f"({time.perf_counter() - t0:.0f}s)", flush=True)
        results.append(res)
    if args.json:
        Path(args.json).write_text(json.dumps(
            [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results],
            indent=2, default=float))
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
