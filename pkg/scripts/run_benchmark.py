"""Run the navigation benchmark and write the run directory plus all three reports.

Example:
    python scripts/run_benchmark.py --config configs/oracle.toml --out runs/oracle --workers 4
"""
import argparse
import json
from dataclasses import replace

from planarnav.harness import BenchmarkConfig, emit_report, load_config, run_benchmark, write_run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON or TOML benchmark config (defaults if omitted)")
    ap.add_argument("--out", default="runs/bench")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--worlds", type=int)
    ap.add_argument("--episodes", type=int)
    args = ap.parse_args(argv)
    cfg = load_config(args.config) if args.config else BenchmarkConfig()
    if args.worlds:
        cfg = replace(cfg, n_worlds=args.worlds)
    if args.episodes:
        cfg = replace(cfg, episodes_per_world=args.episodes)
    cfg = replace(cfg, output_dir=args.out)
    rec = run_benchmark(cfg, workers=args.workers)
    write_run(rec, args.out)
    for fmt in ("csv", "json", "plotdata"):
        emit_report(rec, fmt, args.out)
    print(json.dumps({"config_hash": rec.config_hash, "incomplete": rec.incomplete,
                      **rec.aggregate}, indent=1))
    return 3 if rec.incomplete else 0


if __name__ == "__main__":
    raise SystemExit(main())
