"""Build the full toy benchmark (all ablation conditions, all seeds).

Artifacts land in the cache directory (STROKEGESTALT_BENCH_DIR or
~/.cache/strokegestalt-bench); re-running only fills in missing pieces.
"""

import argparse
import json
from pathlib import Path

from strokegestalt.benchmark import BenchmarkConfig, CONDITIONS, ensure_results


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cache-dir", type=Path, default=None)
    ap.add_argument("--steps", type=int, default=None, help="override sr_steps")
    ap.add_argument("--conditions", nargs="*", choices=list(CONDITIONS), default=None)
    args = ap.parse_args()

    cfg = BenchmarkConfig() if args.steps is None else BenchmarkConfig(sr_steps=args.steps)
    results = ensure_results(cfg, cache_dir=args.cache_dir, conditions=args.conditions)
    print(json.dumps({"baselines": results.baselines, "runs": results.runs}, indent=2))


if __name__ == "__main__":
    main()
