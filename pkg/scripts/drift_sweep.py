"""Sweep per-frame yaw drift on a fixed episode suite and report success metrics."""
import argparse
import json
from dataclasses import replace

from planarnav.harness import BenchmarkConfig, drift_sweep, load_config, monotone_within


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="base benchmark config (defaults if omitted)")
    ap.add_argument("--sigmas", default="0,0.02,0.05,0.1", help="comma-separated rad per frame")
    ap.add_argument("--worlds", type=int, default=10)
    ap.add_argument("--episodes", type=int, default=5)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)
    base = load_config(args.config) if args.config else BenchmarkConfig()
    base = replace(base, n_worlds=args.worlds, episodes_per_world=args.episodes)
    sigmas = [float(s) for s in args.sigmas.split(",")]
    rows = drift_sweep(base, sigmas, workers=args.workers)
    for s, agg in rows:
        print(json.dumps({"drift_sigma_r": s, **agg}))
    print(json.dumps({"sr_monotone": monotone_within([agg["SR"] for _, agg in rows])}))


if __name__ == "__main__":
    main()
