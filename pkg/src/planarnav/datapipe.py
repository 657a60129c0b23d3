"""Auto-labeling of pose-stamped frame logs into captioned motion clips.

Geometry comes first: every clip's camera motion is recovered with the IDM
and classified into a motion primitive, and only then is a caption written,
from the primitive alone. The caption can therefore never name a direction
the geometry contradicts.
"""
from __future__ import annotations

import enum
import json
import math
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import Pose, RelativePose, WaypointTrajectory, wrap
from .idm import DecodeError, IdmConfig, decode_trajectory
from .seeds import derive_seed
from .worldsim import (Frame, FrameLog, Observation, SensorConfig, World, WorldParams,
                       frame_from_dict, frame_to_dict, generate_world, inflate, record_log)

MIRROR_SUFFIX = "_m"


class MotionPrimitive(str, enum.Enum):
    FORWARD = "Forward"
    TURN_LEFT = "TurnLeft"
    TURN_RIGHT = "TurnRight"
    COMPOUND_LEFT = "CompoundLeft"
    COMPOUND_RIGHT = "CompoundRight"
    STATIC = "Static"


PRIMITIVES = tuple(MotionPrimitive)

_SWAP = {
    MotionPrimitive.TURN_LEFT: MotionPrimitive.TURN_RIGHT,
    MotionPrimitive.TURN_RIGHT: MotionPrimitive.TURN_LEFT,
    MotionPrimitive.COMPOUND_LEFT: MotionPrimitive.COMPOUND_RIGHT,
    MotionPrimitive.COMPOUND_RIGHT: MotionPrimitive.COMPOUND_LEFT,
}


def swap_primitive(p: MotionPrimitive) -> MotionPrimitive:
    return _SWAP.get(MotionPrimitive(p), MotionPrimitive(p))


def direction_of(p: MotionPrimitive) -> Optional[str]:
    """'left', 'right' or None for primitives without a rotation sense."""
    p = MotionPrimitive(p)
    if p in (MotionPrimitive.TURN_LEFT, MotionPrimitive.COMPOUND_LEFT):
        return "left"
    if p in (MotionPrimitive.TURN_RIGHT, MotionPrimitive.COMPOUND_RIGHT):
        return "right"
    return None


@dataclass(frozen=True)
class PrimitiveThresholds:
    min_translation: float = 0.3
    min_yaw: float = math.radians(15.0)

    def __post_init__(self):
        if not (self.min_translation > 0 and self.min_yaw > 0):
            raise ValueError("primitive thresholds must be positive")


@dataclass(frozen=True)
class RawClip:
    clip_id: str
    source_id: str
    start: int
    frames: tuple[Frame, ...]
    poses: Optional[tuple[Pose, ...]] = None


@dataclass(frozen=True)
class Clip:
    clip_id: str
    source_id: str
    frames: tuple[Frame, ...]
    recovered_steps: WaypointTrajectory
    primitive: MotionPrimitive
    caption: str
    mirrored: bool = False
    stride: int = 4
    scene_tags: tuple[str, ...] = ()
    caption_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(self, "primitive", MotionPrimitive(self.primitive))
        object.__setattr__(self, "scene_tags", tuple(self.scene_tags))
        if len(self.frames) < 2:
            raise ValueError(f"clip {self.clip_id}: needs at least 2 frames")
        want = (len(self.frames) - 1) // self.stride
        if len(self.recovered_steps) != want:
            raise ValueError(f"clip {self.clip_id}: {len(self.recovered_steps)} steps, "
                             f"expected {want} for {len(self.frames)} frames at stride {self.stride}")

    @property
    def clip_len(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class PipelineConfig:
    clip_len: int = 121
    hop: Optional[int] = None  # None means clip_len (non-overlapping)
    idm: IdmConfig = IdmConfig()
    thresholds: PrimitiveThresholds = PrimitiveThresholds()
    mirror: bool = True
    frames: str = "inline"  # or "external": one sidecar JSON per clip

    def __post_init__(self):
        if self.clip_len < 2:
            raise ValueError("clip_len must be >= 2")
        if self.hop is not None and self.hop < 1:
            raise ValueError("hop must be >= 1")
        if self.frames not in ("inline", "external"):
            raise ValueError(f"unknown frames mode {self.frames!r}")
        if self.clip_len < self.idm.stride + 1:
            raise ValueError("clip_len must cover at least one IDM stride")


# --- segmentation and labeling ---------------------------------------------------

def segment_clips(log: FrameLog, clip_len: int = 121, hop: Optional[int] = None) -> list[RawClip]:
    hop = clip_len if hop is None else hop
    if clip_len < 2:
        raise ValueError("clip_len must be >= 2")
    if hop < 1:
        raise ValueError("hop must be >= 1")
    n = len(log.frames)
    poses = log.trajectory.poses if log.trajectory is not None else None
    out = []
    for s in range(0, n - clip_len + 1, hop):
        out.append(RawClip(f"{log.source_id}_{s}", log.source_id, s,
                           tuple(log.frames[s:s + clip_len]),
                           tuple(poses[s:s + clip_len]) if poses is not None else None))
    return out


def motion_totals(steps: Iterable[RelativePose]) -> tuple[float, float]:
    """Total path length and signed total yaw of a step sequence."""
    t = th = 0.0
    for s in steps:
        t += math.hypot(s.dx, s.dy)
        th += wrap(s.dtheta)
    return t, th


def classify_primitive(steps, th: PrimitiveThresholds = PrimitiveThresholds()) -> MotionPrimitive:
    steps = list(steps)
    if not steps:
        raise ValueError("cannot classify an empty step sequence")
    t, yaw = motion_totals(steps)
    moved = t >= th.min_translation
    rotated = abs(yaw) >= th.min_yaw
    if not rotated:
        return MotionPrimitive.FORWARD if moved else MotionPrimitive.STATIC
    left = yaw > 0
    if not moved:
        return MotionPrimitive.TURN_LEFT if left else MotionPrimitive.TURN_RIGHT
    return MotionPrimitive.COMPOUND_LEFT if left else MotionPrimitive.COMPOUND_RIGHT


_TEMPLATES = {
    MotionPrimitive.FORWARD: ("A steady dolly forward", "Slow dolly forward", "Smooth dolly forward"),
    MotionPrimitive.TURN_LEFT: ("A steady pan left", "Slow pan left", "Smooth pan left"),
    MotionPrimitive.TURN_RIGHT: ("A steady pan right", "Slow pan right", "Smooth pan right"),
    MotionPrimitive.COMPOUND_LEFT: ("A dolly forward with a pan left",
                                    "Slow dolly forward easing into a pan left",
                                    "Smooth dolly forward and pan left"),
    MotionPrimitive.COMPOUND_RIGHT: ("A dolly forward with a pan right",
                                     "Slow dolly forward easing into a pan right",
                                     "Smooth dolly forward and pan right"),
    MotionPrimitive.STATIC: ("A static shot, camera locked off", "Static shot", "Locked-off static shot"),
}


def caption(primitive: MotionPrimitive, scene_tags: Sequence[str] = (), rng_seed: int = 0) -> str:
    """Camera-language description of a primitive, deterministic per seed."""
    rng = random.Random(rng_seed)
    text = rng.choice(_TEMPLATES[MotionPrimitive(primitive)])
    tags = [t.strip() for t in scene_tags if t and t.strip()]
    if tags:
        text += " through the " + " and ".join(tags)
    return text + "."


def caption_direction(text: str) -> Optional[str]:
    """The single direction word a caption names, if any."""
    words = set(text.lower().replace(",", " ").replace(".", " ").split())
    has_l, has_r = "left" in words, "right" in words
    if has_l == has_r:
        return None
    return "left" if has_l else "right"


def base_id(clip_id: str) -> str:
    return clip_id[:-len(MIRROR_SUFFIX)] if clip_id.endswith(MIRROR_SUFFIX) else clip_id


def label_clip(raw: RawClip, idm: IdmConfig = IdmConfig(),
               th: PrimitiveThresholds = PrimitiveThresholds(),
               scene_tags: Sequence[str] = ()) -> Clip:
    """Decode, classify and caption one raw clip. Raises DecodeError."""
    steps = decode_trajectory(raw.frames, idm)
    prim = classify_primitive(steps, th)
    seed = derive_seed("caption", raw.clip_id)
    return Clip(raw.clip_id, raw.source_id, raw.frames, steps, prim,
                caption(prim, scene_tags, seed), False, idm.stride, tuple(scene_tags), seed)


def _mirror_frame(f: Frame) -> Frame:
    obs = tuple(Observation(o.id, o.range, wrap(-o.bearing)) for o in f.observations)
    return Frame(obs, tuple(reversed(f.scan)), f.frame_index)


def mirror(clip: Clip) -> Clip:
    """Left/right reflection of a clip; applying it twice restores the original."""
    prim = swap_primitive(clip.primitive)
    steps = WaypointTrajectory(tuple(RelativePose(s.dx, -s.dy, -s.dtheta)
                                     for s in clip.recovered_steps))
    cid = base_id(clip.clip_id) if clip.mirrored else clip.clip_id + MIRROR_SUFFIX
    return replace(clip, clip_id=cid, frames=tuple(_mirror_frame(f) for f in clip.frames),
                   recovered_steps=steps, primitive=prim,
                   caption=caption(prim, clip.scene_tags, clip.caption_seed),
                   mirrored=not clip.mirrored)


# --- manifest --------------------------------------------------------------------

@dataclass
class ManifestSummary:
    path: Optional[str]
    n_clips: int
    by_primitive: dict
    by_source: dict
    dropped: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"path": self.path, "n_clips": self.n_clips, "by_primitive": dict(self.by_primitive),
                "by_source": dict(self.by_source), "dropped": dict(self.dropped)}


def histogram(clips: Iterable[Clip]) -> dict:
    counts = Counter(c.primitive for c in clips)
    return {p.value: counts.get(p, 0) for p in PRIMITIVES}


def histogram_report(summary: ManifestSummary, width: int = 40) -> str:
    hist = summary.by_primitive
    top = max(hist.values(), default=0) or 1
    lines = [f"{summary.n_clips} clips"]
    for name, n in hist.items():
        lines.append(f"{name:>14} {n:6d} {'#' * round(width * n / top)}")
    if summary.dropped:
        lines.append("dropped: " + ", ".join(f"{k}={v}" for k, v in sorted(summary.dropped.items())))
    return "\n".join(lines)


def clip_to_dict(clip: Clip, frames_ref=None) -> dict:
    return {
        "clip_id": clip.clip_id,
        "source_id": clip.source_id,
        "mirrored": clip.mirrored,
        "primitive": clip.primitive.value,
        "caption": clip.caption,
        "clip_len": clip.clip_len,
        "stride": clip.stride,
        "steps": clip.recovered_steps.as_lists(),
        "scene_tags": list(clip.scene_tags),
        "caption_seed": clip.caption_seed,
        "frames_ref": frames_ref if frames_ref is not None else [frame_to_dict(f) for f in clip.frames],
    }


def clip_from_dict(doc: dict, base_dir: Optional[Path] = None) -> Clip:
    ref = doc["frames_ref"]
    if isinstance(ref, str):
        p = Path(ref) if base_dir is None else Path(base_dir) / ref
        ref = json.loads(p.read_text())
    frames = tuple(frame_from_dict(f, f"frames_ref[{k}]") for k, f in enumerate(ref))
    if len(frames) != doc["clip_len"]:
        raise ValueError(f"clip {doc['clip_id']}: clip_len {doc['clip_len']} but {len(frames)} frames")
    return Clip(doc["clip_id"], doc["source_id"], frames,
                WaypointTrajectory.from_lists(doc["steps"]), doc["primitive"], doc["caption"],
                bool(doc["mirrored"]), int(doc["stride"]), tuple(doc.get("scene_tags", ())),
                int(doc.get("caption_seed", 0)))


def build_manifest(clips: Sequence[Clip], out_path, frames: str = "inline") -> ManifestSummary:
    """Write one JSON line per clip; duplicate ids are rejected before anything is written."""
    seen = set()
    for c in clips:
        if c.clip_id in seen:
            raise ValueError(f"duplicate clip_id {c.clip_id!r}")
        seen.add(c.clip_id)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    frame_dir = out_path.parent / (out_path.stem + "_frames")
    with open(out_path, "w", encoding="utf-8") as fh:
        for c in clips:
            ref = None
            if frames == "external":
                frame_dir.mkdir(exist_ok=True)
                rel = f"{frame_dir.name}/{c.clip_id}.json"
                (out_path.parent / rel).write_text(json.dumps([frame_to_dict(f) for f in c.frames]))
                ref = rel
            elif frames != "inline":
                raise ValueError(f"unknown frames mode {frames!r}")
            fh.write(json.dumps(clip_to_dict(c, ref), separators=(",", ":")) + "\n")
    return ManifestSummary(str(out_path), len(clips), histogram(clips),
                           dict(sorted(Counter(c.source_id for c in clips).items())))


def load_manifest(path) -> list[Clip]:
    path = Path(path)
    out = []
    with open(path, encoding="utf-8") as fh:
        for k, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                out.append(clip_from_dict(json.loads(line), path.parent))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: record {k}: {exc}") from exc
    return out


def process_logs(logs: Iterable[FrameLog], cfg: PipelineConfig = PipelineConfig(),
                 scene_tags: Sequence[str] = ()) -> tuple[list[Clip], dict]:
    """Segment, decode, classify and caption; returns clips and drop counts."""
    clips, dropped = [], Counter()
    for log in logs:
        for raw in segment_clips(log, cfg.clip_len, cfg.hop):
            try:
                c = label_clip(raw, cfg.idm, cfg.thresholds, scene_tags)
            except DecodeError:
                dropped["decode_failure"] += 1
                continue
            clips.append(c)
            if cfg.mirror:
                clips.append(mirror(c))
    return clips, dict(dropped)


# --- simulator logs --------------------------------------------------------------

_DRIVES = {
    MotionPrimitive.FORWARD: (1.0, 0.0),
    MotionPrimitive.TURN_LEFT: (0.0, 1.0),
    MotionPrimitive.TURN_RIGHT: (0.0, -1.0),
    MotionPrimitive.COMPOUND_LEFT: (1.0, 1.0),
    MotionPrimitive.COMPOUND_RIGHT: (1.0, -1.0),
    MotionPrimitive.STATIC: (0.0, 0.0),
}


def simulate_logs(n_logs: int, clips_per_log: int, seed: int = 0, clip_len: int = 121,
                  world_params: WorldParams = WorldParams(), sensor: SensorConfig = SensorConfig(),
                  fps: float = 24.0, kinds: Sequence[MotionPrimitive] = PRIMITIVES,
                  ) -> list[FrameLog]:
    """Random piecewise-constant drives, one command segment per clip window.

    Each segment spans ``clip_len`` frames plus one spacer transition, so
    non-overlapping segmentation lines up with the command boundaries.
    """
    logs = []
    for li in range(n_logs):
        world = generate_world(derive_seed(seed, "log-world", li), world_params)
        rng = np.random.default_rng(derive_seed(seed, "log-drive", li))
        free = np.argwhere(~inflate(world.grid, 2))
        i, j = free[rng.integers(len(free))]
        x, y = world.cell_center(int(i), int(j))
        start = Pose(x, y, float(rng.uniform(-math.pi, math.pi)))
        cmds = []
        for _ in range(clips_per_log):
            kind = kinds[int(rng.integers(len(kinds)))]
            dv, dw = _DRIVES[MotionPrimitive(kind)]
            v = dv * float(rng.uniform(0.3, 0.8))
            w = dw * float(rng.uniform(0.3, 0.7))
            cmds += [(v, w, clip_len - 1), (v, w, 1)]
        logs.append(record_log(world, start, cmds, sensor, fps, source_id=f"sim{li:03d}"))
    return logs


def straight_log(world: World, start: Pose, n_frames: int, speed: float = 0.5,
                 sensor: SensorConfig = SensorConfig(), fps: float = 24.0,
                 source_id: str = "straight") -> FrameLog:
    return record_log(world, start, [(speed, 0.0, n_frames - 1)], sensor, fps, source_id)
