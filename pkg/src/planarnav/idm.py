"""Closed-form inverse dynamics: frame pairs to relative camera motion."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import RelativePose, WaypointTrajectory
from .worldsim import Frame


class DegenerateGeometryError(ValueError):
    """Too few common landmarks to fix a planar rigid motion."""

    def __init__(self, n_matches: int, needed: int):
        super().__init__(f"{n_matches} common landmarks, need {needed}")
        self.n_matches = n_matches


class UnreliableEstimateError(ValueError):
    def __init__(self, residual: float, limit: float):
        super().__init__(f"alignment residual {residual:.4g} m exceeds {limit:.4g} m")
        self.residual = residual


class DecodeError(ValueError):
    """Decoding failed at ``step_index``; ``partial`` holds the steps before it."""

    def __init__(self, step_index: int, cause: Exception, partial=()):
        super().__init__(f"step {step_index}: {cause}")
        self.step_index = step_index
        self.cause = cause
        self.partial = tuple(partial)


@dataclass(frozen=True)
class IdmConfig:
    stride: int = 4
    min_matches: int = 2
    max_residual: float = 0.1

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.min_matches < 2:
            raise ValueError("min_matches must be >= 2")


@dataclass(frozen=True)
class PoseEstimate:
    rel: RelativePose
    n_matches: int
    residual: float


def estimate_relative_pose(a: Frame, b: Frame, cfg: IdmConfig = IdmConfig()) -> PoseEstimate:
    """Camera motion from frame ``a`` to frame ``b``.

    Finds the rotation and translation mapping landmark points seen in
    ``b``'s body frame onto the same landmarks in ``a``'s body frame, in the
    least-squares sense. That transform is the pose of ``b`` expressed in
    ``a``.
    """
    ob = b.by_id()
    pairs = [(o.body_xy(), ob[o.id].body_xy()) for o in a.observations if o.id in ob]
    n = len(pairs)
    if n < cfg.min_matches:
        raise DegenerateGeometryError(n, cfg.min_matches)
    pcx = sum(p[0] for p, _ in pairs) / n
    pcy = sum(p[1] for p, _ in pairs) / n
    qcx = sum(q[0] for _, q in pairs) / n
    qcy = sum(q[1] for _, q in pairs) / n
    s_sin = s_cos = 0.0
    for (px, py), (qx, qy) in pairs:
        px, py, qx, qy = px - pcx, py - pcy, qx - qcx, qy - qcy
        s_sin += qx * py - qy * px
        s_cos += qx * px + qy * py
    theta = math.atan2(s_sin, s_cos)
    c, s = math.cos(theta), math.sin(theta)
    tx = pcx - (c * qcx - s * qcy)
    ty = pcy - (s * qcx + c * qcy)
    sq = 0.0
    for (px, py), (qx, qy) in pairs:
        ex = px - (c * qx - s * qy + tx)
        ey = py - (s * qx + c * qy + ty)
        sq += ex * ex + ey * ey
    residual = math.sqrt(sq / n)
    if residual > cfg.max_residual:
        raise UnreliableEstimateError(residual, cfg.max_residual)
    return PoseEstimate(RelativePose(tx, ty, theta), n, residual)


def decode_trajectory(plan, cfg: IdmConfig = IdmConfig()) -> WaypointTrajectory:
    """Strided waypoints of a frame sequence (a plan or a plain list of frames).

    A trailing partial stride is dropped.
    """
    frames = tuple(getattr(plan, "frames", plan))
    if len(frames) < cfg.stride + 1:
        raise ValueError(f"{len(frames)} frames cannot cover one stride of {cfg.stride}")
    n = (len(frames) - 1) // cfg.stride
    steps = []
    for k in range(n):
        try:
            est = estimate_relative_pose(frames[k * cfg.stride], frames[(k + 1) * cfg.stride], cfg)
        except (DegenerateGeometryError, UnreliableEstimateError) as exc:
            raise DecodeError(k, exc, steps) from exc
        steps.append(est.rel)
    return WaypointTrajectory(tuple(steps))
