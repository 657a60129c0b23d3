"""``planarnav`` command line.

Exit codes: 0 success, 1 usage, 2 validation, 3 runtime.
"""
from __future__ import annotations

import argparse
import json
import sys

from .datapipe import PipelineConfig
from .harness import (REPORT_FORMATS, BenchmarkConfig, ConfigError, config_from_dict,
                      config_to_dict, emit_report, kinematic_summary, load_config, load_results,
                      read_run, run_benchmark, run_datapipe, write_run)
from .idm import IdmConfig
from .metrics import aggregate
from .worldsim import WorldGenerationError, WorldParams, generate_world, save_world

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _bench_run(args) -> int:
    cfg = load_config(args.config) if args.config else BenchmarkConfig()
    doc = config_to_dict(cfg)
    if args.seed is not None:
        doc["global_seed"] = args.seed
    if args.planner is not None:
        doc["planner"] = args.planner
    if args.experts is not None:
        doc["experts"] = args.experts
    if args.worlds is not None:
        doc["n_worlds"] = args.worlds
    if args.episodes is not None:
        doc["episodes_per_world"] = args.episodes
    if args.out is not None:
        doc["output_dir"] = args.out
    cfg = config_from_dict(doc)
    rec = run_benchmark(cfg, workers=args.workers)
    path = write_run(rec, cfg.output_dir)
    print(json.dumps({"run": str(path), "config_hash": rec.config_hash, "aggregate": rec.aggregate,
                      "incomplete": rec.incomplete, "error": rec.error}, indent=2))
    return EXIT_RUNTIME if rec.incomplete else EXIT_OK


def _datapipe_run(args) -> int:
    cfg = PipelineConfig(clip_len=args.clip_len, hop=args.hop, idm=IdmConfig(stride=args.stride),
                         mirror=not args.no_mirror, frames=args.frames)
    tags = [t for t in (args.tags or "").split(",") if t]
    summary, report = run_datapipe(args.inp, args.out, cfg, tags)
    print(report)
    return EXIT_OK


def _metrics_eval(args) -> int:
    results = load_results(args.results)
    if not results:
        raise ValueError(f"{args.results}: no episode records")
    doc = aggregate(results)
    doc["success_threshold"] = results[0].success_threshold
    doc["kinematics"] = kinematic_summary(results)
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def _report(args) -> int:
    if args.format not in REPORT_FORMATS:
        raise UsageError(f"unknown format {args.format!r}; choose from {', '.join(REPORT_FORMATS)}")
    rec = read_run(args.run)
    print(emit_report(rec, args.format, args.out or args.run))
    return EXIT_OK


def _world_gen(args) -> int:
    params = WorldParams(nx=args.nx, ny=args.ny, resolution=args.resolution, density=args.density,
                         n_landmarks=args.landmarks)
    save_world(generate_world(args.seed, params), args.out)
    print(args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="planarnav", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="group", required=True, parser_class=_Parser)

    bench = sub.add_parser("bench", help="navigation benchmark").add_subparsers(dest="cmd", required=True)
    b = bench.add_parser("run", help="run a benchmark from a config file")
    b.add_argument("--config", help="TOML or JSON config")
    b.add_argument("--seed", type=int)
    b.add_argument("--planner", help="oracle | oracle-noisy | external:<addr>")
    b.add_argument("--experts", choices=("acmoe", "single"))
    b.add_argument("--worlds", type=int)
    b.add_argument("--episodes", type=int, help="episodes per world")
    b.add_argument("--out", help="output directory (overrides the config)")
    b.add_argument("--workers", type=int, default=1)
    b.set_defaults(fn=_bench_run)

    dp = sub.add_parser("datapipe", help="clip auto-labeling").add_subparsers(dest="cmd", required=True)
    d = dp.add_parser("run", help="label a directory of frame logs")
    d.add_argument("--in", dest="inp", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--clip-len", type=int, default=121)
    d.add_argument("--hop", type=int)
    d.add_argument("--stride", type=int, default=4)
    d.add_argument("--no-mirror", action="store_true")
    d.add_argument("--frames", choices=("inline", "external"), default="inline")
    d.add_argument("--tags", help="comma-separated scene tags")
    d.set_defaults(fn=_datapipe_run)

    me = sub.add_parser("metrics", help="metric evaluation").add_subparsers(dest="cmd", required=True)
    m = me.add_parser("eval", help="aggregate episode records")
    m.add_argument("--results", required=True)
    m.set_defaults(fn=_metrics_eval)

    r = sub.add_parser("report", help="render a run report")
    r.add_argument("--run", required=True)
    r.add_argument("--format", required=True)
    r.add_argument("--out")
    r.set_defaults(fn=_report)

    wo = sub.add_parser("world", help="world files").add_subparsers(dest="cmd", required=True)
    w = wo.add_parser("gen", help="generate a world")
    w.add_argument("--seed", type=int, required=True)
    w.add_argument("--out", required=True)
    defaults = WorldParams()
    w.add_argument("--nx", type=int, default=defaults.nx)
    w.add_argument("--ny", type=int, default=defaults.ny)
    w.add_argument("--resolution", type=float, default=defaults.resolution)
    w.add_argument("--density", type=float, default=defaults.density)
    w.add_argument("--landmarks", type=int, default=defaults.n_landmarks)
    w.set_defaults(fn=_world_gen)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"planarnav: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"planarnav: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, RuntimeError, WorldGenerationError) as exc:
        print(f"planarnav: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
