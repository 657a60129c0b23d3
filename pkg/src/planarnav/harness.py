"""Benchmark configuration, orchestration and report emission."""
from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import math
import sys
import time
import typing
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, is_dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .controller import (ControllerGains, EpisodeConfig, ExternalPlanner, OraclePlanner,
                         run_episode)
from .datapipe import (ManifestSummary, PipelineConfig, build_manifest, histogram_report,
                       process_logs)
from .geometry import Pose
from .idm import DecodeError, IdmConfig, decode_trajectory
from .imaginer import (ErrorModel, ImagineConfig, Primitive, decompose, default_router, imagine,
                       planned_poses, reference_steps)
from .metrics import (DiscretizationThresholds, EpisodeResult, Termination, aggregate,
                      discretize_actions, episode_from_dict, episode_to_dict, motion_fidelity)
from .protocol import parse_endpoint
from .seeds import derive_seed
from .worldsim import (SensorConfig, WorldParams, generate_episodes, generate_world, inflate,
                       log_from_dict, render_frame)

CONFIG_VERSION = 1
RUN_SCHEMA = "planarnav.run/1"
REPORT_FORMATS = ("csv", "json", "plotdata")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# --- configuration -------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkConfig:
    version: int = CONFIG_VERSION
    name: str = ""
    global_seed: int = 0
    n_worlds: int = 20
    episodes_per_world: int = 5
    min_path_len: float = 5.0
    max_path_len: float = 12.0
    world: WorldParams = WorldParams()
    sensor: SensorConfig = SensorConfig()
    planner: str = "oracle"  # oracle | oracle-noisy | external:<endpoint>
    experts: str = "acmoe"   # acmoe | single
    error_model: ErrorModel = ErrorModel()
    acmoe_flip: float = 0.05
    single_flip: float = 0.3
    horizon_frames: int = 70
    imagine: ImagineConfig = ImagineConfig()
    external_timeout: float = 30.0
    idm: IdmConfig = IdmConfig()
    gains: ControllerGains = ControllerGains()
    episode: EpisodeConfig = EpisodeConfig()
    discretization: DiscretizationThresholds = DiscretizationThresholds()
    trace_stride: int = 1
    output_dir: str = "runs/default"

    def __post_init__(self):
        if self.version != CONFIG_VERSION:
            raise ConfigError("version", f"unsupported config version {self.version!r}")
        if self.n_worlds < 1 or self.episodes_per_world < 1:
            raise ConfigError("n_worlds", "n_worlds and episodes_per_world must be >= 1")
        if not 0 < self.min_path_len <= self.max_path_len:
            raise ConfigError("min_path_len", "need 0 < min_path_len <= max_path_len")
        if self.experts not in ("acmoe", "single"):
            raise ConfigError("experts", f"expected acmoe or single, got {self.experts!r}")
        if not (self.planner in ("oracle", "oracle-noisy") or self.planner.startswith("external:")):
            raise ConfigError("planner", f"unknown planner {self.planner!r}")
        if self.planner.startswith("external:"):
            try:
                parse_endpoint(self.planner[len("external:"):])
            except ValueError as exc:
                raise ConfigError("planner", str(exc)) from exc
        for name in ("acmoe_flip", "single_flip"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(name, "must lie in [0, 1]")
        if self.horizon_frames < self.idm.stride:
            raise ConfigError("horizon_frames", "horizon shorter than one IDM stride")
        if self.trace_stride < 1:
            raise ConfigError("trace_stride", "must be >= 1")
        # one sensor model for the world, the imagination and the episode loop
        object.__setattr__(self, "imagine", replace(self.imagine, sensor=self.sensor))
        object.__setattr__(self, "episode", replace(self.episode, sensor=self.sensor))

    @property
    def method(self) -> str:
        return self.name or f"{self.planner.split(':', 1)[0]}/{self.experts}"


# fields that change where results go, not what they are
_NON_SEMANTIC = ("output_dir",)


def _jsonable(obj):
    if is_dataclass(obj):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (list, tuple)):
        return [_jsonable(x) for x in obj]
    return obj


def config_to_dict(cfg: BenchmarkConfig) -> dict:
    doc = _jsonable(cfg)
    doc["imagine"].pop("sensor", None)
    doc["episode"].pop("sensor", None)
    return doc


def _build(cls, doc, path: str):
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected a table")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown field")
    kwargs = {}
    for k, v in doc.items():
        t = hints[k]
        sub = f"{path}.{k}" if path else k
        if is_dataclass(t):
            if k == "sensor" and cls in (ImagineConfig, EpisodeConfig):
                continue
            v = _build(t, v, sub)
        elif typing.get_origin(t) is tuple and isinstance(v, list):
            v = tuple(v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(path or "$", str(exc)) from exc


def config_from_dict(doc: dict) -> BenchmarkConfig:
    return _build(BenchmarkConfig, doc, "")


def load_config(path) -> BenchmarkConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".toml":
        if sys.version_info >= (3, 11):
            import tomllib
        else:
            import tomli as tomllib
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(path), f"invalid TOML: {exc}") from exc
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON: {exc}") from exc
    return config_from_dict(doc)


def _canonical(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(cfg: BenchmarkConfig) -> str:
    doc = config_to_dict(cfg)
    for k in _NON_SEMANTIC:
        doc.pop(k, None)
    return hashlib.sha256(_canonical(doc).encode()).hexdigest()[:16]


def make_planner(cfg: BenchmarkConfig):
    if cfg.planner.startswith("external:"):
        return ExternalPlanner(parse_endpoint(cfg.planner[len("external:"):]), cfg.horizon_frames,
                               cfg.external_timeout, cfg.sensor)
    if cfg.planner == "oracle":
        router = default_router(cfg.experts, 0.0, 0.0)
    else:
        router = default_router(cfg.experts, cfg.acmoe_flip, cfg.single_flip, cfg.error_model)
    return OraclePlanner(router, cfg.horizon_frames, cfg.imagine)


# --- benchmark -------------------------------------------------------------------

@dataclass
class RunRecord:
    config_hash: str
    config: dict
    results: list
    aggregate: Optional[dict]
    kinematics: dict
    wall_clock: float = 0.0
    version: str = __version__
    incomplete: bool = False
    error: Optional[str] = None

    @property
    def method(self) -> str:
        return config_from_dict(self.config).method

    @property
    def success_threshold(self) -> float:
        return self.config["episode"]["success_threshold"]

    def summary(self) -> dict:
        """Everything except per-episode payloads and wall-clock."""
        return {"schema": RUN_SCHEMA, "config_hash": self.config_hash, "config": self.config,
                "aggregate": self.aggregate, "kinematics": self.kinematics,
                "n_episodes": len(self.results), "incomplete": self.incomplete,
                "error": self.error, "version": self.version}


def kinematic_summary(results: Sequence[EpisodeResult]) -> dict:
    vals = {"RPE-T": [], "RPE-R": [], "MotionFidelity": []}
    for r in results:
        for p in r.plans:
            if "rpe_t" in p:
                vals["RPE-T"].append(p["rpe_t"])
                vals["RPE-R"].append(p["rpe_r"])
            if "motion_fidelity" in p:
                vals["MotionFidelity"].append(p["motion_fidelity"])
    out = {k: (math.fsum(v) / len(v) if v else None) for k, v in vals.items()}
    out["RPE-R_deg"] = math.degrees(out["RPE-R"]) if out["RPE-R"] is not None else None
    out["n_plans"] = sum(len(r.plans) for r in results)
    out["terminations"] = dict(sorted(Counter(r.termination.value for r in results).items()))
    out["collisions"] = sum(r.collisions for r in results)
    return out


_CACHE: dict = {}


def _episode_set(cfg: BenchmarkConfig, wi: int):
    key = (config_hash(cfg), wi)
    if key not in _CACHE:
        world = generate_world(derive_seed(cfg.global_seed, "world", wi), cfg.world)
        eps = generate_episodes(world, cfg.episodes_per_world,
                                derive_seed(cfg.global_seed, "episodes", wi),
                                cfg.min_path_len, cfg.max_path_len)
        _CACHE.clear()
        _CACHE[key] = eps
    return _CACHE[key]


def run_one(cfg: BenchmarkConfig, wi: int, ei: int, planner=None) -> EpisodeResult:
    ep = _episode_set(cfg, wi)[ei]
    planner = planner or make_planner(cfg)
    return run_episode(ep, planner, cfg.idm, cfg.gains, cfg.episode,
                       seed=derive_seed(cfg.global_seed, wi, ei), world_index=wi,
                       disc=cfg.discretization)


_WORKER_PLANNER = None


def _worker(args):
    global _WORKER_PLANNER
    doc, wi, ei = args
    cfg = config_from_dict(doc)
    if _WORKER_PLANNER is None or _WORKER_PLANNER[0] != doc:
        _WORKER_PLANNER = (doc, make_planner(cfg))
    return run_one(cfg, wi, ei, _WORKER_PLANNER[1])


def run_benchmark(cfg: BenchmarkConfig, workers: int = 1) -> RunRecord:
    """Run every episode; a planner failure stops the run and flags it incomplete."""
    t0 = time.perf_counter()
    tasks = [(wi, ei) for wi in range(cfg.n_worlds) for ei in range(cfg.episodes_per_world)]
    results, error = [], None

    def take(r: EpisodeResult) -> bool:
        nonlocal error
        if r.termination is Termination.PLANNER_ERROR:
            msg = next((p["planner_error"] for p in r.plans if "planner_error" in p), "planner error")
            error = f"world {r.world_index} episode {r.episode_index}: {msg}"
            return False
        results.append(r)
        return True

    if workers <= 1:
        planner = make_planner(cfg)
        try:
            for wi, ei in tasks:
                if not take(run_one(cfg, wi, ei, planner)):
                    break
        finally:
            getattr(getattr(planner, "endpoint", None), "close", lambda: None)()
    else:
        doc = config_to_dict(cfg)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_worker, (doc, wi, ei)) for wi, ei in tasks]
            for f in futs:
                if not take(f.result()):
                    for g in futs:
                        g.cancel()
                    break
    agg = aggregate(results) if results else None
    return RunRecord(config_hash(cfg), config_to_dict(cfg), results, agg, kinematic_summary(results),
                     time.perf_counter() - t0, __version__, error is not None, error)


def _episode_name(r: EpisodeResult) -> str:
    return f"episode_w{r.world_index:03d}_e{r.episode_index:03d}.json"


def write_run(record: RunRecord, out_dir, trace_stride: Optional[int] = None) -> Path:
    out = Path(out_dir)
    (out / "episodes").mkdir(parents=True, exist_ok=True)
    stride = trace_stride or record.config.get("trace_stride", 1)
    names = []
    for r in record.results:
        name = _episode_name(r)
        (out / "episodes" / name).write_text(json.dumps(episode_to_dict(r, stride)))
        names.append(f"episodes/{name}")
    doc = record.summary()
    doc["wall_clock"] = record.wall_clock
    doc["episodes"] = names
    (out / "run.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    (out / "config.json").write_text(json.dumps(record.config, indent=2, sort_keys=True))
    return out / "run.json"


def load_results(path) -> list[EpisodeResult]:
    """Episode records from a run directory, an episodes directory or one file."""
    path = Path(path)
    if path.is_file():
        files = [path]
    else:
        base = path / "episodes" if (path / "episodes").is_dir() else path
        files = sorted(p for p in base.glob("*.json") if p.name not in ("run.json", "config.json"))
    out = []
    for p in files:
        try:
            out.append(episode_from_dict(json.loads(p.read_text())))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{p}: {exc}") from exc
    out.sort(key=lambda r: (r.world_index, r.episode_index))
    return out


def read_run(out_dir) -> RunRecord:
    out = Path(out_dir)
    try:
        doc = json.loads((out / "run.json").read_text())
    except FileNotFoundError as exc:
        raise ValueError(f"{out}: no run.json") from exc
    if doc.get("schema") != RUN_SCHEMA:
        raise ValueError(f"{out}/run.json: unsupported schema {doc.get('schema')!r}")
    results = [r for name in doc["episodes"] for r in load_results(out / name)]
    return RunRecord(doc["config_hash"], doc["config"], results, doc["aggregate"], doc["kinematics"],
                     doc.get("wall_clock", 0.0), doc.get("version", ""), doc["incomplete"],
                     doc.get("error"))


# --- reports ---------------------------------------------------------------------

CSV_COLUMNS = ("method", "TL", "NE", "OS", "SR", "SPL", "n_episodes", "success_threshold",
               "incomplete")


def report_row(record: RunRecord) -> dict:
    agg = record.aggregate or {}
    row = {"method": record.method}
    for k in ("TL", "NE", "OS", "SR", "SPL"):
        row[k] = agg.get(k)
    row.update(n_episodes=len(record.results), success_threshold=record.success_threshold,
               incomplete=record.incomplete)
    return row


def render_report(record: RunRecord, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        row = report_row(record)
        w.writerow({k: ("" if v is None else v) for k, v in row.items()})
        return buf.getvalue()
    if fmt == "json":
        doc = report_row(record)
        kin = record.kinematics or {}
        doc.update({k: kin.get(k) for k in ("RPE-T", "RPE-R", "RPE-R_deg", "MotionFidelity")})
        doc.update(config_hash=record.config_hash, version=record.version, error=record.error)
        return json.dumps(doc, indent=2) + "\n"
    if fmt == "plotdata":
        eps = []
        for r in record.results:
            eps.append({
                "world_index": r.world_index, "episode_index": r.episode_index,
                "start": list(r.trace.poses[0].as_tuple()), "goal": list(r.goal),
                "success": bool(r.success), "termination": r.termination.value,
                "polyline": [[p.x, p.y] for p in r.trace.poses],
            })
        return json.dumps({"method": record.method, "success_threshold": record.success_threshold,
                           "incomplete": record.incomplete, "episodes": eps}) + "\n"
    raise ValueError(f"unknown report format {fmt!r}; expected one of {', '.join(REPORT_FORMATS)}")


def emit_report(record: RunRecord, fmt: str, out_dir) -> Path:
    text = render_report(record, fmt)
    ext = {"csv": "report.csv", "json": "report.json", "plotdata": "plotdata.json"}[fmt]
    path = Path(out_dir) / ext
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


# --- data pipeline ---------------------------------------------------------------

def read_logs(in_dir):
    """Frame logs from ``*.json`` (one record) and ``*.jsonl`` (one per line) files."""
    in_dir = Path(in_dir)
    if not in_dir.is_dir():
        raise ValueError(f"{in_dir}: not a directory")
    logs = []
    for p in sorted(in_dir.iterdir()):
        if p.suffix == ".json":
            records = [p.read_text()]
        elif p.suffix == ".jsonl":
            records = [ln for ln in p.read_text().splitlines() if ln.strip()]
        else:
            continue
        for k, text in enumerate(records):
            try:
                doc = json.loads(text)
                stem = p.stem if len(records) == 1 else f"{p.stem}-{k}"
                logs.append(log_from_dict(doc, doc.get("source_id") or stem))
            except (KeyError, TypeError, ValueError, AttributeError) as exc:
                raise ValueError(f"{p}: record {k}: {exc}") from exc
    return logs


def run_datapipe(in_dir, out_path, cfg: PipelineConfig = PipelineConfig(),
                 scene_tags: Sequence[str] = ()) -> tuple[ManifestSummary, str]:
    clips, dropped = process_logs(read_logs(in_dir), cfg, scene_tags)
    summary = build_manifest(clips, out_path, cfg.frames)
    summary.dropped = dropped
    return summary, histogram_report(summary)


# --- experiments -----------------------------------------------------------------

@dataclass
class AblationResult:
    acmoe: np.ndarray
    single: np.ndarray
    p_value: float
    p_wilcoxon: float
    skipped: int

    @property
    def difference(self) -> float:
        return float(self.acmoe.mean() - self.single.mean())


def turn_trials(n: int, seed: int = 0, n_worlds: int = 10, world: WorldParams = WorldParams(),
                sensor: SensorConfig = SensorConfig()):
    """Yield (world, frame, pose, goal, subgoal) with the goal well off to one side."""
    worlds = [generate_world(derive_seed(seed, "abl-world", k), world) for k in range(n_worlds)]
    rooms = [np.argwhere(~inflate(w.grid, 1)) for w in worlds]
    rng = np.random.default_rng(derive_seed(seed, "abl-trials"))
    made = 0
    while made < n:
        k = made % n_worlds
        w, room = worlds[k], rooms[k]
        i, j = room[rng.integers(len(room))]
        x, y = w.cell_center(int(i), int(j))
        pose = Pose(x, y, float(rng.uniform(-math.pi, math.pi)))
        side = 1.0 if rng.random() < 0.5 else -1.0
        bearing = pose.theta + side * rng.uniform(math.pi / 4, 3 * math.pi / 4)
        r = rng.uniform(3.0, 6.0)
        goal = (x + r * math.cos(bearing), y + r * math.sin(bearing))
        gi, gj = w.cell_of(*goal)
        if not (w.in_bounds(gi, gj) and w.cell_free(gi, gj)):
            continue
        frame = render_frame(w, pose, sensor, 0)
        sub = decompose("Walk to the goal.", frame, pose, goal)
        if sub.primitive is Primitive.FORWARD:
            continue
        made += 1
        yield w, frame, pose, goal, sub


def acmoe_ablation(n_plans: int = 500, seed: int = 0, acmoe_flip: float = 0.05,
                   single_flip: float = 0.3, horizon_frames: int = 70,
                   imagine_cfg: ImagineConfig = ImagineConfig(), idm: IdmConfig = IdmConfig(),
                   disc: DiscretizationThresholds = DiscretizationThresholds(),
                   n_worlds: int = 10) -> AblationResult:
    """Motion fidelity of routed experts vs one shared expert on the same turn subgoals.

    Both arms see the same start, goal and reference; their noise is drawn
    independently. Trials where either arm fails to decode are skipped.
    """
    from scipy import stats

    routers = {"acmoe": default_router("acmoe", acmoe_flip, single_flip),
               "single": default_router("single", acmoe_flip, single_flip)}
    scores = {"acmoe": [], "single": []}
    skipped = 0
    trials = turn_trials(10**9, seed, n_worlds, sensor=imagine_cfg.sensor)
    k = 0
    while len(scores["acmoe"]) < n_plans:
        w, frame, pose, goal, sub = next(trials)
        k += 1
        ref_poses, _ = planned_poses(w, pose, sub, horizon_frames, imagine_cfg)
        ref = [a.value for a in discretize_actions(reference_steps(ref_poses, idm.stride), disc)]
        row = {}
        for arm, router in routers.items():
            plan = imagine(w, frame, pose, sub, router.select(sub), horizon_frames,
                           derive_seed(seed, "abl", k, arm), imagine_cfg)
            try:
                steps = decode_trajectory(plan, idm)
            except DecodeError:
                break
            row[arm] = motion_fidelity(ref, [a.value for a in discretize_actions(steps, disc)])
        if len(row) < 2:
            skipped += 1
            continue
        for arm, v in row.items():
            scores[arm].append(v)
    a, s = np.array(scores["acmoe"]), np.array(scores["single"])
    p = float(stats.ttest_rel(a, s, alternative="greater").pvalue)
    pw = float(stats.wilcoxon(a, s, alternative="greater").pvalue) if np.any(a != s) else 1.0
    return AblationResult(a, s, p, pw, skipped)


def drift_sweep(base: BenchmarkConfig, sigmas: Sequence[float] = (0.0, 0.02, 0.05, 0.1),
                workers: int = 1) -> list[tuple[float, dict]]:
    """Success metrics as per-frame yaw drift grows, on one fixed episode suite."""
    out = []
    for s in sigmas:
        cfg = replace(base, planner="oracle-noisy", acmoe_flip=0.0, single_flip=0.0,
                      error_model=replace(base.error_model, drift_sigma_r=float(s)))
        rec = run_benchmark(cfg, workers)
        out.append((float(s), rec.aggregate))
    return out


def monotone_within(values: Sequence[float], band: float = 0.02, allowed: int = 1) -> bool:
    """Non-increasing, except for at most ``allowed`` rises no larger than ``band``."""
    rises = [b - a for a, b in zip(values, values[1:]) if b > a]
    return len(rises) <= allowed and all(r <= band + 1e-12 for r in rises)
