"""Planar pose algebra shared by the simulator, decoder, controller and metrics.

Frames are right-handed: x forward, y to the left, theta counterclockwise
from +x. All angles are kept in the half-open interval (-pi, pi].
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

TWO_PI = 2.0 * math.pi

# Default synthetic period between accumulated waypoints (one control tick).
DEFAULT_PERIOD = 1.0 / 6.0


def wrap(angle: float) -> float:
    """Normalize ``angle`` to (-pi, pi].

    ``math.remainder`` is exact, so values already inside the interval come
    back bit-identical and ``wrap`` is idempotent.
    """
    if not math.isfinite(angle):
        raise ValueError(f"cannot wrap non-finite angle {angle!r}")
    r = math.remainder(angle, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return r


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap(float(self.theta)))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.theta)

    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class RelativePose:
    """Displacement expressed in a source body frame (dx forward, dy left)."""

    dx: float
    dy: float
    dtheta: float

    def __post_init__(self):
        object.__setattr__(self, "dtheta", wrap(float(self.dtheta)))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.dx, self.dy, self.dtheta)

    @property
    def translation(self) -> float:
        return math.hypot(self.dx, self.dy)


IDENTITY = Pose(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Trajectory:
    poses: tuple[Pose, ...]
    timestamps: tuple[float, ...]

    def __post_init__(self):
        poses = tuple(self.poses)
        stamps = tuple(float(t) for t in self.timestamps)
        if len(poses) < 1:
            raise ValueError("trajectory needs at least one pose")
        if len(stamps) != len(poses):
            raise ValueError(
                f"{len(poses)} poses but {len(stamps)} timestamps")
        for i in range(1, len(stamps)):
            if not stamps[i] > stamps[i - 1]:
                raise ValueError(f"timestamps not strictly increasing at index {i}")
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "timestamps", stamps)

    def __len__(self) -> int:
        return len(self.poses)

    @classmethod
    def from_poses(cls, poses: Iterable[Pose], period: float = DEFAULT_PERIOD,
                   t0: float = 0.0) -> "Trajectory":
        poses = tuple(poses)
        return cls(poses, tuple(t0 + i * period for i in range(len(poses))))


@dataclass(frozen=True)
class WaypointTrajectory:
    steps: tuple[RelativePose, ...]

    def __post_init__(self):
        steps = tuple(self.steps)
        if len(steps) < 1:
            raise ValueError("waypoint trajectory needs at least one step")
        object.__setattr__(self, "steps", steps)

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __getitem__(self, i):
        return self.steps[i]

    def as_lists(self) -> list[list[float]]:
        return [list(s.as_tuple()) for s in self.steps]

    @classmethod
    def from_lists(cls, rows: Sequence[Sequence[float]]) -> "WaypointTrajectory":
        return cls(tuple(RelativePose(*map(float, r)) for r in rows))


def compose(a: Pose, b: RelativePose) -> Pose:
    """Apply displacement ``b`` in the body frame of ``a``."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose(a.x + b.dx * c - b.dy * s,
                a.y + b.dx * s + b.dy * c,
                a.theta + b.dtheta)


def relative(a: Pose, b: Pose) -> RelativePose:
    """Displacement of ``b`` seen from ``a``; inverse of :func:`compose`."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    ex, ey = b.x - a.x, b.y - a.y
    return RelativePose(c * ex + s * ey, -s * ex + c * ey, b.theta - a.theta)


def accumulate(start: Pose, steps: WaypointTrajectory | Sequence[RelativePose],
               period: float = DEFAULT_PERIOD, t0: float = 0.0) -> Trajectory:
    steps = tuple(steps)
    if not steps:
        raise ValueError("cannot accumulate an empty step sequence")
    poses = [start]
    for st in steps:
        poses.append(compose(poses[-1], st))
    return Trajectory.from_poses(poses, period=period, t0=t0)


def path_length(t: Trajectory | Sequence[Pose]) -> float:
    poses = t.poses if isinstance(t, Trajectory) else tuple(t)
    total = 0.0
    for p, q in zip(poses, poses[1:]):
        total += math.hypot(q.x - p.x, q.y - p.y)
    return total


def distance(a, b) -> float:
    """Planar distance between two poses or (x, y) points."""
    ax, ay = (a.x, a.y) if isinstance(a, Pose) else a
    bx, by = (b.x, b.y) if isinstance(b, Pose) else b
    return math.hypot(ax - bx, ay - by)
