"""Subgoal reasoning, expert routing and imagined observation sequences.

The oracle imaginer plans a collision-free camera path on the true grid,
then corrupts it according to the routed expert's :class:`ErrorModel`
before rendering one frame per imagined pose.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .geometry import Pose, RelativePose, compose, distance, relative, wrap
from .worldsim import (Frame, SensorConfig, World, _render, descend, distance_field,
                       inflate, obstacle_clusters)

FORWARD_CONE = math.pi / 8


class Primitive(str, enum.Enum):
    FORWARD = "Forward"
    TURN_LEFT = "TurnLeft"
    TURN_RIGHT = "TurnRight"


class ExpertId(str, enum.Enum):
    LEFT = "Left"
    RIGHT = "Right"
    SINGLE = "Single"


class RouterMode(str, enum.Enum):
    ACMOE = "acmoe"
    SINGLE = "single"


_PHRASES = {
    Primitive.FORWARD: "dolly forward toward the goal",
    Primitive.TURN_LEFT: "pan left, then dolly forward toward the goal",
    Primitive.TURN_RIGHT: "pan right, then dolly forward toward the goal",
}


@dataclass(frozen=True)
class Subgoal:
    text: str
    primitive: Primitive
    target_hint: Optional[tuple[float, float]] = None


@dataclass(frozen=True)
class ErrorModel:
    flip_prob: float = 0.0
    drift_sigma_t: float = 0.0
    drift_sigma_r: float = 0.0
    hallucination_prob: float = 0.0
    truncation_prob: float = 0.0

    def __post_init__(self):
        for name in ("flip_prob", "hallucination_prob", "truncation_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} outside [0, 1]")
        for name in ("drift_sigma_t", "drift_sigma_r"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


NOISELESS = ErrorModel()


@dataclass(frozen=True)
class ExpertConfig:
    expert_id: ExpertId
    error_model: ErrorModel = NOISELESS


@dataclass(frozen=True)
class ImagineConfig:
    fps: float = 24.0
    speed: float = 0.8        # m/s of the imagined camera
    yaw_rate: float = 0.8     # rad/s of the imagined camera
    clearance_cells: int = 1
    sensor: SensorConfig = SensorConfig()

    def reach(self, horizon_frames: int) -> float:
        return self.speed * horizon_frames / self.fps


@dataclass(frozen=True)
class VisualPlan:
    frames: tuple[Frame, ...]
    horizon_frames: int
    # construction-time metadata; absent for externally generated plans
    poses: Optional[tuple[Pose, ...]] = None
    expert: Optional[ExpertId] = None
    flipped: bool = False
    hallucinated: bool = False
    truncated: bool = False
    fallback: bool = False

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if self.horizon_frames < 1:
            raise ValueError("horizon_frames must be >= 1")
        if len(self.frames) != self.horizon_frames + 1:
            raise ValueError(f"{len(self.frames)} frames for horizon {self.horizon_frames}")
        idx = [f.frame_index for f in self.frames]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("frame indices not strictly increasing")


# --- reasoner and router -----------------------------------------------------

def decompose(instruction: str, frame: Frame, agent_pose: Pose,
              goal: tuple[float, float]) -> Subgoal:
    """Rule-based reasoner: pick a primitive from the goal bearing."""
    gx, gy = goal
    if not (math.isfinite(gx) and math.isfinite(gy)):
        raise ValueError("goal must be finite")
    beta = wrap(math.atan2(gy - agent_pose.y, gx - agent_pose.x) - agent_pose.theta)
    if beta > FORWARD_CONE:
        prim = Primitive.TURN_LEFT
    elif beta < -FORWARD_CONE:
        prim = Primitive.TURN_RIGHT
    else:
        prim = Primitive.FORWARD
    return Subgoal(_PHRASES[prim], prim, (float(gx), float(gy)))


def route(subgoal: Subgoal, mode: RouterMode = RouterMode.ACMOE) -> ExpertId:
    if RouterMode(mode) is RouterMode.SINGLE:
        return ExpertId.SINGLE
    if subgoal.primitive is Primitive.TURN_RIGHT:
        return ExpertId.RIGHT
    # left expert also takes forward-only subgoals
    return ExpertId.LEFT


@dataclass(frozen=True)
class ExpertRouter:
    mode: RouterMode
    experts: tuple[ExpertConfig, ...]

    def __post_init__(self):
        ids = [e.expert_id for e in self.experts]
        if len(set(ids)) != len(ids):
            raise ValueError("one config per expert id")
        needed = {ExpertId.SINGLE} if self.mode is RouterMode.SINGLE else {ExpertId.LEFT, ExpertId.RIGHT}
        missing = needed - set(ids)
        if missing:
            raise ValueError(f"router missing experts {sorted(m.value for m in missing)}")

    def select(self, subgoal: Subgoal) -> ExpertConfig:
        eid = route(subgoal, self.mode)
        return next(e for e in self.experts if e.expert_id is eid)


def default_router(mode: RouterMode | str = RouterMode.ACMOE, acmoe_flip: float = 0.05,
                   single_flip: float = 0.3, base: ErrorModel = NOISELESS) -> ExpertRouter:
    mode = RouterMode(mode)
    if mode is RouterMode.SINGLE:
        return ExpertRouter(mode, (ExpertConfig(ExpertId.SINGLE, replace(base, flip_prob=single_flip)),))
    em = replace(base, flip_prob=acmoe_flip)
    return ExpertRouter(mode, (ExpertConfig(ExpertId.LEFT, em), ExpertConfig(ExpertId.RIGHT, em)))


# --- oracle camera path ------------------------------------------------------

def _segment_clear(world: World, free: np.ndarray, a, b) -> bool:
    """Sampled line-of-sight test; samples on a cell face need both cells free."""
    res = world.resolution
    length = distance(a, b)
    n = max(2, int(math.ceil(length / (res / 8.0))) + 1)
    t = np.linspace(0.0, 1.0, n)
    gx = (a[0] + (b[0] - a[0]) * t - world.origin[0]) / res
    gy = (a[1] + (b[1] - a[1]) * t - world.origin[1]) / res
    fx, fy = np.floor(gx).astype(np.int64), np.floor(gy).astype(np.int64)
    nx, ny = free.shape
    for ii, jj in ((fx, fy), (np.where(gx == fx, fx - 1, fx), fy),
                   (fx, np.where(gy == fy, fy - 1, fy)),
                   (np.where(gx == fx, fx - 1, fx), np.where(gy == fy, fy - 1, fy))):
        inside = (ii >= 0) & (ii < nx) & (jj >= 0) & (jj < ny)
        if not inside.all() or not free[ii, jj].all():
            return False
    return True


def _shortcut(world: World, free: np.ndarray, pts: list) -> list:
    out = [pts[0]]
    a = 0
    while a < len(pts) - 1:
        b = len(pts) - 1
        while b > a + 1 and not _segment_clear(world, free, pts[a], pts[b]):
            b -= 1
        out.append(pts[b])
        a = b
    return out


def plan_polyline(world: World, start: tuple[float, float], target: tuple[float, float],
                  clearance_cells: int = 1) -> Optional[list[tuple[float, float]]]:
    """Collision-free polyline from start to target, or None if unreachable.

    Plans with obstacles inflated by ``clearance_cells`` first and falls back
    to the raw grid when the inflated one disconnects the endpoints.
    """
    cs, cg = world.cell_of(*start), world.cell_of(*target)
    if not (world.cell_free(*cs) and world.cell_free(*cg)):
        return None
    raw_free = ~world.grid
    grids = []
    if clearance_cells > 0:
        g = ~inflate(world.grid, clearance_cells)
        g[cs] = g[cg] = True
        grids.append(g & raw_free)
    grids.append(raw_free)
    for free in grids:
        if cs == cg:
            return [tuple(start), tuple(target)]
        field_ = distance_field(free, cg, world.resolution)
        if not math.isfinite(field_[cs]):
            continue
        cells = descend(free, field_, cs, world.resolution, target, world.cell_center)
        if not cells or cells[-1] != cg:
            continue
        pts = [tuple(start)] + [world.cell_center(*c) for c in cells[1:-1]] + [tuple(target)]
        return _shortcut(world, free, pts)
    return None


def _follow(start: Pose, polyline: Sequence, n_frames: int, cfg: ImagineConfig) -> list[Pose]:
    """Turn-then-go camera motion along ``polyline`` sampled at the frame rate."""
    dt = 1.0 / cfg.fps
    x, y, th = start.x, start.y, start.theta
    poses = [start]
    seg = 1
    for _ in range(n_frames):
        budget = dt
        while budget > 1e-15 and seg < len(polyline):
            tx, ty = polyline[seg]
            rem = math.hypot(tx - x, ty - y)
            if rem < 1e-12:
                x, y = tx, ty
                seg += 1
                continue
            err = wrap(math.atan2(ty - y, tx - x) - th)
            if abs(err) > 1e-12:
                turn = min(abs(err), cfg.yaw_rate * budget)
                th = wrap(th + math.copysign(turn, err))
                budget -= turn / cfg.yaw_rate
                continue
            move = min(rem, cfg.speed * budget)
            if move >= rem:
                x, y = tx, ty
                seg += 1
            else:
                x += move * math.cos(th)
                y += move * math.sin(th)
            budget -= move / cfg.speed
        poses.append(Pose(x, y, th))
    return poses


def _rotate(start: Pose, heading: float, n_frames: int, cfg: ImagineConfig) -> list[Pose]:
    dt = 1.0 / cfg.fps
    th = start.theta
    poses = [start]
    for _ in range(n_frames):
        err = wrap(heading - th)
        th = wrap(th + math.copysign(min(abs(err), cfg.yaw_rate * dt), err))
        poses.append(Pose(start.x, start.y, th))
    return poses


def _free_point_along(world: World, pose: Pose, heading: float, reach: float,
                      clearance_cells: int) -> tuple[float, float]:
    free = ~inflate(world.grid, clearance_cells)
    step = world.resolution / 4.0
    best = (pose.x, pose.y)
    d = step
    while d <= reach + 1e-12:
        px, py = pose.x + d * math.cos(heading), pose.y + d * math.sin(heading)
        i, j = world.cell_of(px, py)
        if not world.in_bounds(i, j) or not free[i, j]:
            break
        best = (px, py)
        d += step
    return best


_DIRECTION = {Primitive.FORWARD: 0.0, Primitive.TURN_LEFT: math.pi / 2,
              Primitive.TURN_RIGHT: -math.pi / 2}


def planned_poses(world: World, pose: Pose, subgoal: Subgoal, horizon_frames: int,
                  cfg: ImagineConfig = ImagineConfig()) -> tuple[list[Pose], bool]:
    """Noiseless imagined poses (H+1 of them) and whether the fallback fired."""
    if subgoal.target_hint is not None:
        target = subgoal.target_hint
        bearing = math.atan2(target[1] - pose.y, target[0] - pose.x)
    else:
        bearing = wrap(pose.theta + _DIRECTION[subgoal.primitive])
        target = _free_point_along(world, pose, bearing, cfg.reach(horizon_frames),
                                   cfg.clearance_cells)
        if distance(target, (pose.x, pose.y)) < 0.5 * world.resolution:
            return _rotate(pose, bearing, horizon_frames, cfg), False
    poly = plan_polyline(world, (pose.x, pose.y), target, cfg.clearance_cells)
    if poly is None:
        return _rotate(pose, bearing, horizon_frames, cfg), True
    return _follow(pose, poly, horizon_frames, cfg), False


def _steps(poses: Sequence[Pose]) -> list[RelativePose]:
    return [relative(a, b) for a, b in zip(poses, poses[1:])]


def _chain(start: Pose, steps: Sequence[RelativePose]) -> list[Pose]:
    out = [start]
    for s in steps:
        out.append(compose(out[-1], s))
    return out


def _hallucinated_world(world: World, pose: Pose, reach: float, u: float) -> Optional[World]:
    clusters = obstacle_clusters(world)
    if not clusters:
        return None
    res = world.resolution
    keyed = []
    for cells in clusters:
        centers = [world.cell_center(int(i), int(j)) for i, j in cells]
        near = min(distance(c, (pose.x, pose.y)) for c in centers)
        keyed.append((near, len(cells), cells))
    keyed.sort(key=lambda k: (k[0], k[1]))
    close = [k for k in keyed if k[0] <= reach + 2 * res] or keyed
    cells = close[min(int(u * len(close)), len(close) - 1)][2]
    grid = np.array(world.grid)
    grid[cells[:, 0], cells[:, 1]] = False
    return world.with_grid(grid)


def imagine(world: World, current: Frame, pose: Pose, subgoal: Subgoal,
            expert: ExpertConfig, horizon_frames: int = 70, rng_seed: int = 0,
            cfg: ImagineConfig = ImagineConfig()) -> VisualPlan:
    """Imagine ``horizon_frames`` future frames from ``pose`` toward the subgoal.

    Random draws happen in a fixed order regardless of the error model, so
    two error models evaluated with one seed share their noise.
    """
    if horizon_frames < 1:
        raise ValueError("horizon_frames must be >= 1")
    if not world.is_free(pose.x, pose.y):
        raise ValueError("imagining from an occupied pose")
    em = expert.error_model
    rng = np.random.default_rng(rng_seed)
    u_flip, u_hall, u_pick, u_trunc, u_cut = rng.random(5)
    noise = rng.standard_normal((horizon_frames, 3))

    hallucinated = False
    plan_world = world
    if u_hall < em.hallucination_prob:
        alt = _hallucinated_world(world, pose, cfg.reach(horizon_frames), u_pick)
        if alt is not None:
            plan_world, hallucinated = alt, True

    poses, fallback = planned_poses(plan_world, pose, subgoal, horizon_frames, cfg)
    steps = _steps(poses)
    flipped = bool(u_flip < em.flip_prob)
    if flipped:
        steps = [RelativePose(s.dx, -s.dy, -s.dtheta) for s in steps]
    if em.drift_sigma_t > 0 or em.drift_sigma_r > 0:
        steps = [RelativePose(s.dx + em.drift_sigma_t * n[0], s.dy + em.drift_sigma_t * n[1],
                              s.dtheta + em.drift_sigma_r * n[2])
                 for s, n in zip(steps, noise)]
    poses = _chain(pose, steps)
    truncated = bool(u_trunc < em.truncation_prob)
    if truncated:
        cut = 1 + min(int(u_cut * horizon_frames), horizon_frames - 1)
        poses = poses[:cut] + [poses[cut - 1]] * (len(poses) - cut)

    render_world = plan_world
    blocked = [render_world.cell_of(p.x, p.y) for p in poses[1:]
               if not render_world.is_free(p.x, p.y)]
    if blocked:
        # the imagination believes wherever it goes is open space
        grid = np.array(render_world.grid)
        for i, j in blocked:
            if render_world.in_bounds(i, j):
                grid[i, j] = False
        render_world = render_world.with_grid(grid)
    frames = [current]
    for k, p in enumerate(poses[1:], start=1):
        if not render_world.in_bounds(*render_world.cell_of(p.x, p.y)):
            frames.append(Frame((), (0.0,) * cfg.sensor.n_rays, current.frame_index + k))
            continue
        frames.append(_render(render_world, p, cfg.sensor, current.frame_index + k))
    return VisualPlan(tuple(frames), horizon_frames, tuple(poses), expert.expert_id,
                      flipped, hallucinated, truncated, fallback)


def reference_steps(poses: Sequence[Pose], stride: int) -> list[RelativePose]:
    """Ground-truth strided displacements of an imagined pose sequence."""
    idx = list(range(0, len(poses), stride))
    return [relative(poses[a], poses[b]) for a, b in zip(idx, idx[1:])]
