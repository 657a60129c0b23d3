"""Navigation and kinematic-fidelity metrics."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import IDENTITY, Pose, Trajectory, WaypointTrajectory, accumulate, distance, wrap
from .worldsim import Frame, frame_from_dict, frame_to_dict

EPISODE_SCHEMA = "planarnav.episode/1"


class Termination(str, enum.Enum):
    STOP = "stop"
    BUDGET = "budget"
    DECODE_FAILURE = "decode_failure"
    PLANNER_ERROR = "planner_error"


class Action(str, enum.Enum):
    F = "F"
    TL = "TL"
    TR = "TR"
    S = "S"


ALPHABET = (Action.F, Action.TL, Action.TR, Action.S)


@dataclass(frozen=True)
class EpisodeResult:
    success: bool
    shortest_path_len: float
    path_len: float
    final_pose: Pose
    goal: tuple[float, float]
    trace: Trajectory
    termination: Termination
    collisions: int = 0
    success_threshold: float = 3.0
    episode_index: int = 0
    world_index: int = 0
    seed: int = 0
    ticks: int = 0
    plans: tuple = ()
    frames: Optional[tuple[Frame, ...]] = None

    def __post_init__(self):
        if not self.path_len >= 0:
            raise ValueError("path_len must be >= 0")
        if not self.shortest_path_len > 0:
            raise ValueError("shortest_path_len must be > 0")
        object.__setattr__(self, "goal", (float(self.goal[0]), float(self.goal[1])))
        object.__setattr__(self, "termination", Termination(self.termination))
        object.__setattr__(self, "plans", tuple(self.plans))
        if self.trace.poses[-1] != self.final_pose:
            raise ValueError("final_pose must be the last trace pose")
        if bool(self.success) != (self.navigation_error <= self.success_threshold):
            raise ValueError("success must agree with the goal threshold")

    @property
    def navigation_error(self) -> float:
        return navigation_error(self.final_pose, self.goal)

    @property
    def oracle_success(self) -> bool:
        return oracle_success(self.trace, self.goal, self.success_threshold)


@dataclass(frozen=True)
class DiscretizationThresholds:
    trans_min: float = 0.05
    yaw_min: float = 0.05

    def __post_init__(self):
        if not (self.trans_min > 0 and self.yaw_min > 0):
            raise ValueError("thresholds must be positive")


def navigation_error(final: Pose, goal: tuple[float, float]) -> float:
    return distance(final, goal)


def oracle_success(trace: Trajectory, goal: tuple[float, float], threshold: float) -> bool:
    poses = trace.poses if isinstance(trace, Trajectory) else tuple(trace)
    if not poses:
        raise ValueError("empty trace")
    return min(distance(p, goal) for p in poses) <= threshold


def spl(results: Sequence[EpisodeResult]) -> float:
    """Success weighted by (normalized inverse) path length."""
    if not results:
        raise ValueError("spl of an empty result list")
    total = 0.0
    for r in results:
        ell = r.shortest_path_len
        if not ell > 0:
            raise ValueError(f"shortest path length {ell} must be positive")
        if r.success:
            total += ell / max(r.path_len, ell)
    return total / len(results)


def aggregate(results: Sequence[EpisodeResult]) -> dict:
    if not results:
        raise ValueError("aggregate of an empty result list")
    n = len(results)
    return {
        "TL": sum(r.path_len for r in results) / n,
        "NE": sum(r.navigation_error for r in results) / n,
        "OS": sum(1 for r in results if r.oracle_success) / n,
        "SR": sum(1 for r in results if r.success) / n,
        "SPL": spl(results),
        "n": n,
    }


def rpe(ref, gen) -> tuple[float, float]:
    """Mean translational and absolute-yaw error of two aligned pose sequences."""
    a = ref.poses if isinstance(ref, Trajectory) else tuple(ref)
    b = gen.poses if isinstance(gen, Trajectory) else tuple(gen)
    if len(a) != len(b):
        raise ValueError(f"trajectory lengths differ ({len(a)} vs {len(b)})")
    if not a:
        raise ValueError("empty trajectories")
    et = er = 0.0
    for p, q in zip(a, b):
        et += math.hypot(p.x - q.x, p.y - q.y)
        er += abs(wrap(p.theta - q.theta))
    return et / len(a), er / len(a)


def rpe_steps(ref: WaypointTrajectory, gen: WaypointTrajectory) -> tuple[float, float]:
    """RPE between two step sequences, both anchored at the identity pose."""
    return rpe(accumulate(IDENTITY, ref).poses[1:], accumulate(IDENTITY, gen).poses[1:])


def discretize_actions(steps, th: DiscretizationThresholds = DiscretizationThresholds()) -> list[Action]:
    out = []
    for s in steps:
        if abs(s.dtheta) >= th.yaw_min:
            out.append(Action.TL if s.dtheta > 0 else Action.TR)
        elif math.hypot(s.dx, s.dy) >= th.trans_min:
            out.append(Action.F)
        else:
            out.append(Action.S)
    return out


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost edit distance (Wagner-Fischer, two rows)."""
    a, b = list(a), list(b)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def pairwise_levenshtein(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Edit distance between every row of ``A`` (P, m) and every row of ``B`` (Q, n).

    Same prefix recurrence as :func:`levenshtein`, evaluated for all pairs at
    once. Symbols are small integers.
    """
    A = np.asarray(A).reshape(len(A), -1)
    B = np.asarray(B).reshape(len(B), -1)
    P, m = A.shape
    Q, n = B.shape
    dt = np.int16
    prev = [np.full((P, Q), j, dtype=dt) for j in range(n + 1)]
    for i in range(1, m + 1):
        cur = [np.full((P, Q), i, dtype=dt)]
        ai = A[:, i - 1][:, None]
        for j in range(1, n + 1):
            sub = prev[j - 1] + (ai != B[:, j - 1][None, :]).astype(dt)
            cur.append(np.minimum(np.minimum(prev[j], cur[j - 1]) + 1, sub))
        prev = cur
    return prev[n]


def hamming(a: Sequence, b: Sequence) -> int:
    if len(a) != len(b):
        raise ValueError("hamming distance needs equal lengths")
    return sum(x != y for x, y in zip(a, b))


def motion_fidelity(ref: Sequence, gen: Sequence) -> float:
    n = max(len(ref), len(gen))
    if n == 0:
        raise ValueError("motion fidelity of two empty sequences")
    d = levenshtein(ref, gen)
    if len(ref) == len(gen):
        # substitutions alone always give an admissible edit script
        assert d <= hamming(ref, gen)
    return 1.0 - d / n


# --- serialization -------------------------------------------------------------

def _pose(p: Pose) -> list:
    return [p.x, p.y, p.theta]


def episode_to_dict(r: EpisodeResult, trace_stride: int = 1, include_frames: bool = True) -> dict:
    """JSON-ready record; ``trace_stride`` thins the trace but always keeps its last pose."""
    idx = list(range(0, len(r.trace), max(1, trace_stride)))
    if idx[-1] != len(r.trace) - 1:
        idx.append(len(r.trace) - 1)
    trace = {
        "poses": [_pose(r.trace.poses[k]) for k in idx],
        "timestamps": [r.trace.timestamps[k] for k in idx],
    }
    if include_frames and r.frames is not None:
        trace["frames"] = [frame_to_dict(r.frames[k]) for k in idx]
    return {
        "schema": EPISODE_SCHEMA,
        "episode_index": r.episode_index,
        "world_index": r.world_index,
        "seed": r.seed,
        "success": bool(r.success),
        "oracle_success": bool(r.oracle_success),
        "shortest_path_len": r.shortest_path_len,
        "path_len": r.path_len,
        "navigation_error": r.navigation_error,
        "success_threshold": r.success_threshold,
        "final_pose": _pose(r.final_pose),
        "goal": list(r.goal),
        "termination": r.termination.value,
        "collisions": r.collisions,
        "ticks": r.ticks,
        "trace_stride": max(1, trace_stride),
        "trace": trace,
        "plans": list(r.plans),
    }


def episode_from_dict(doc: dict) -> EpisodeResult:
    if doc.get("schema") != EPISODE_SCHEMA:
        raise ValueError(f"unsupported episode schema {doc.get('schema')!r}")
    tr = doc["trace"]
    poses = tuple(Pose(*p) for p in tr["poses"])
    frames = None
    if tr.get("frames"):
        frames = tuple(frame_from_dict(f, f"trace.frames[{k}]") for k, f in enumerate(tr["frames"]))
    return EpisodeResult(
        success=doc["success"], shortest_path_len=doc["shortest_path_len"],
        path_len=doc["path_len"], final_pose=Pose(*doc["final_pose"]),
        goal=tuple(doc["goal"]), trace=Trajectory(poses, tuple(tr["timestamps"])),
        termination=doc["termination"], collisions=doc["collisions"],
        success_threshold=doc["success_threshold"], episode_index=doc["episode_index"],
        world_index=doc.get("world_index", 0), seed=doc["seed"], ticks=doc.get("ticks", 0),
        plans=tuple(doc.get("plans", ())), frames=frames)
