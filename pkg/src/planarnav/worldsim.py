"""Deterministic 2D occupancy-grid world with landmark sensing.

Grid convention: ``grid[i, j]`` is the cell whose x-extent is
``[x0 + i*res, x0 + (i+1)*res)`` and y-extent ``[y0 + j*res, y0 + (j+1)*res)``.
With the default origin ``(-res/2, -res/2)`` cell centers sit on integer
multiples of the resolution.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from scipy import ndimage

from .geometry import Pose, Trajectory, distance, wrap

WORLD_FORMAT_VERSION = 1
SQRT2 = math.sqrt(2.0)

# 8-connected moves (di, dj, is_diagonal)
_MOVES = ((1, 0, False), (-1, 0, False), (0, 1, False), (0, -1, False),
          (1, 1, True), (1, -1, True), (-1, 1, True), (-1, -1, True))


class WorldGenerationError(RuntimeError):
    pass


class FrameError(ValueError):
    """A frame violates its invariants; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class Landmark:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class WorldParams:
    nx: int = 40
    ny: int = 40
    resolution: float = 0.5
    density: float = 0.12
    n_landmarks: int = 48
    min_block: int = 1
    max_block: int = 4
    max_retries: int = 64


@dataclass(frozen=True, eq=False)
class World:
    grid: np.ndarray
    resolution: float
    landmarks: tuple[Landmark, ...]
    seed: int = 0
    origin: tuple[float, float] = None

    def __post_init__(self):
        grid = np.array(self.grid, dtype=bool)
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "landmarks", tuple(self.landmarks))
        if self.origin is None:
            h = -0.5 * self.resolution
            object.__setattr__(self, "origin", (h, h))
        else:
            object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        arr = np.array([[lm.id, lm.x, lm.y] for lm in self.landmarks], dtype=float).reshape(-1, 3)
        object.__setattr__(self, "landmark_array", arr)

    def __eq__(self, other):
        if not isinstance(other, World):
            return NotImplemented
        return (self.grid.shape == other.grid.shape
                and bool(np.array_equal(self.grid, other.grid))
                and self.resolution == other.resolution
                and self.landmarks == other.landmarks
                and self.seed == other.seed
                and self.origin == other.origin)

    __hash__ = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (math.floor((x - self.origin[0]) / self.resolution),
                math.floor((y - self.origin[1]) / self.resolution))

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return (self.origin[0] + (i + 0.5) * self.resolution,
                self.origin[1] + (j + 0.5) * self.resolution)

    def in_bounds(self, i: int, j: int) -> bool:
        return 0 <= i < self.grid.shape[0] and 0 <= j < self.grid.shape[1]

    def cell_free(self, i: int, j: int) -> bool:
        return self.in_bounds(i, j) and not self.grid[i, j]

    def is_free(self, x: float, y: float) -> bool:
        return self.cell_free(*self.cell_of(x, y))

    def with_grid(self, grid: np.ndarray) -> "World":
        return World(grid, self.resolution, self.landmarks, self.seed, self.origin)


def validate_world(world: World) -> list[str]:
    """Return a list of invariant violations (empty when the world is valid)."""
    problems = []
    g = world.grid
    if g.ndim != 2 or min(g.shape) < 3:
        return [f"grid shape {g.shape} too small"]
    if not (g[0, :].all() and g[-1, :].all() and g[:, 0].all() and g[:, -1].all()):
        problems.append("boundary cells not all occupied")
    ids = [lm.id for lm in world.landmarks]
    if len(set(ids)) != len(ids):
        problems.append("landmark ids not unique")
    for lm in world.landmarks:
        if not world.is_free(lm.x, lm.y):
            problems.append(f"landmark {lm.id} not in free space")
            continue
        # strictly inside: not on a cell face shared with an occupied cell
        i, j = world.cell_of(lm.x, lm.y)
        cx, cy = world.cell_center(i, j)
        half = 0.5 * world.resolution
        if abs(lm.x - cx) >= half or abs(lm.y - cy) >= half:
            problems.append(f"landmark {lm.id} on a cell boundary")
    free = ~g
    if free.any():
        _, n = ndimage.label(free)
        if n != 1:
            problems.append(f"free space has {n} connected components")
    else:
        problems.append("no free space")
    return problems


def _place_blocks(rng: np.random.Generator, params: WorldParams) -> np.ndarray:
    grid = np.zeros((params.nx, params.ny), dtype=bool)
    grid[0, :] = grid[-1, :] = grid[:, 0] = grid[:, -1] = True
    interior = (params.nx - 2) * (params.ny - 2)
    target = params.density * interior
    guard = 0
    while grid[1:-1, 1:-1].sum() < target and guard < 10_000:
        guard += 1
        w = int(rng.integers(params.min_block, params.max_block + 1))
        h = int(rng.integers(params.min_block, params.max_block + 1))
        i = int(rng.integers(1, params.nx - 1))
        j = int(rng.integers(1, params.ny - 1))
        grid[i:min(i + w, params.nx - 1), j:min(j + h, params.ny - 1)] = True
    return grid


def generate_world(seed: int, params: WorldParams = WorldParams()) -> World:
    if not 0.0 <= params.density <= 0.4:
        raise ValueError(f"density {params.density} outside [0, 0.4]")
    if params.n_landmarks < 8:
        raise ValueError("need at least 8 landmarks")
    if params.nx < 3 or params.ny < 3:
        raise ValueError("grid must be at least 3x3")
    rng = np.random.default_rng(seed)
    for _ in range(params.max_retries):
        grid = _place_blocks(rng, params)
        free = ~grid
        labels, n = ndimage.label(free)
        if n != 1:
            continue
        cells = np.argwhere(free)
        if len(cells) < params.n_landmarks:
            continue
        pick = rng.choice(len(cells), size=params.n_landmarks, replace=False)
        res = params.resolution
        origin = (-0.5 * res, -0.5 * res)
        landmarks = []
        for lid, k in enumerate(sorted(int(p) for p in pick)):
            i, j = cells[k]
            jx, jy = rng.uniform(-0.35, 0.35, size=2) * res
            landmarks.append(Landmark(lid, origin[0] + (i + 0.5) * res + float(jx),
                                      origin[1] + (j + 0.5) * res + float(jy)))
        return World(grid, res, tuple(landmarks), seed, origin)
    raise WorldGenerationError(
        f"no valid world after {params.max_retries} attempts (seed={seed}, params={params})")


def mirror_world(world: World) -> World:
    """Reflect the world through the x axis (y -> -y)."""
    ny = world.grid.shape[1]
    x0, y0 = world.origin
    origin = (x0, -(y0 + ny * world.resolution))
    lms = tuple(Landmark(lm.id, lm.x, -lm.y) for lm in world.landmarks)
    return World(world.grid[:, ::-1].copy(), world.resolution, lms, world.seed, origin)


def inflate(grid: np.ndarray, cells: int = 1) -> np.ndarray:
    if cells <= 0:
        return np.array(grid, dtype=bool)
    return ndimage.binary_dilation(grid, structure=np.ones((3, 3), bool), iterations=cells)


def obstacle_clusters(world: World) -> list[np.ndarray]:
    """Connected groups of interior occupied cells (boundary walls excluded)."""
    inner = np.array(world.grid, dtype=bool)
    inner[0, :] = inner[-1, :] = inner[:, 0] = inner[:, -1] = False
    labels, n = ndimage.label(inner, structure=np.ones((3, 3), bool))
    return [np.argwhere(labels == k) for k in range(1, n + 1)]


# --- serialization -----------------------------------------------------------

def _rle(flat: np.ndarray) -> list[list[int]]:
    runs = []
    if flat.size == 0:
        return runs
    cur, count = bool(flat[0]), 0
    for v in flat:
        v = bool(v)
        if v == cur:
            count += 1
        else:
            runs.append([int(cur), count])
            cur, count = v, 1
    runs.append([int(cur), count])
    return runs


def world_to_dict(world: World) -> dict:
    return {
        "version": WORLD_FORMAT_VERSION,
        "kind": "world",
        "seed": int(world.seed),
        "resolution": world.resolution,
        "origin": list(world.origin),
        "shape": list(world.grid.shape),
        "grid_rle": _rle(world.grid.ravel(order="C")),
        "landmarks": [[lm.id, lm.x, lm.y] for lm in world.landmarks],
    }


def world_from_dict(doc: dict) -> World:
    if doc.get("version") != WORLD_FORMAT_VERSION or doc.get("kind") != "world":
        raise ValueError(f"unsupported world document (version={doc.get('version')!r})")
    shape = tuple(doc["shape"])
    flat = np.zeros(shape[0] * shape[1], dtype=bool)
    pos = 0
    for value, count in doc["grid_rle"]:
        flat[pos:pos + count] = bool(value)
        pos += count
    if pos != flat.size:
        raise ValueError(f"grid_rle covers {pos} cells, expected {flat.size}")
    lms = tuple(Landmark(int(i), float(x), float(y)) for i, x, y in doc["landmarks"])
    return World(flat.reshape(shape), float(doc["resolution"]), lms, int(doc["seed"]),
                 tuple(doc["origin"]))


def save_world(world: World, path) -> None:
    Path(path).write_text(json.dumps(world_to_dict(world), separators=(",", ":")) + "\n")


def load_world(path) -> World:
    return world_from_dict(json.loads(Path(path).read_text()))


# --- sensing -----------------------------------------------------------------

@dataclass(frozen=True)
class SensorConfig:
    fov: float = 2.0 * math.pi
    max_range: float = 10.0
    n_rays: int = 32
    landmark_visibility: bool = True

    def __post_init__(self):
        if not 0.0 < self.fov <= 2.0 * math.pi:
            raise ValueError(f"fov {self.fov} outside (0, 2pi]")
        if self.n_rays < 8:
            raise ValueError("n_rays must be >= 8")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")

    def ray_bearings(self) -> np.ndarray:
        k = np.arange(self.n_rays)
        return -0.5 * self.fov + (k + 0.5) * self.fov / self.n_rays


@dataclass(frozen=True)
class Observation:
    id: int
    range: float
    bearing: float

    def body_xy(self) -> tuple[float, float]:
        return (self.range * math.cos(self.bearing), self.range * math.sin(self.bearing))


@dataclass(frozen=True)
class Frame:
    observations: tuple[Observation, ...]
    scan: tuple[float, ...]
    frame_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "observations", tuple(self.observations))
        object.__setattr__(self, "scan", tuple(float(r) for r in self.scan))

    def by_id(self) -> dict[int, Observation]:
        return {o.id: o for o in self.observations}


def validate_frame(frame: Frame, cfg: Optional[SensorConfig] = None, path: str = "") -> None:
    """Raise :class:`FrameError` naming the first offending field."""
    p = f"{path}." if path else ""
    seen = set()
    for k, o in enumerate(frame.observations):
        where = f"{p}observations[{k}]"
        if o.id in seen:
            raise FrameError(f"{where}.id", f"duplicate landmark id {o.id}")
        seen.add(o.id)
        if not (math.isfinite(o.range) and o.range > 0):
            raise FrameError(f"{where}.range", f"range {o.range!r} not positive")
        if cfg is not None and o.range > cfg.max_range:
            raise FrameError(f"{where}.range", f"range {o.range!r} beyond max_range")
        if not (math.isfinite(o.bearing) and -math.pi < o.bearing <= math.pi):
            raise FrameError(f"{where}.bearing", f"bearing {o.bearing!r} outside (-pi, pi]")
        if cfg is not None and abs(o.bearing) > 0.5 * cfg.fov + 1e-12:
            raise FrameError(f"{where}.bearing", f"bearing {o.bearing!r} outside the field of view")
    for k, r in enumerate(frame.scan):
        if not (math.isfinite(r) and r >= 0):
            raise FrameError(f"{p}scan[{k}]", f"scan reading {r!r} invalid")
        if cfg is not None and r > cfg.max_range:
            raise FrameError(f"{p}scan[{k}]", f"scan reading {r!r} beyond max_range")
    if cfg is not None and len(frame.scan) != cfg.n_rays:
        raise FrameError(f"{p}scan", f"{len(frame.scan)} readings, expected {cfg.n_rays}")


def frame_to_dict(frame: Frame) -> dict:
    return {
        "index": frame.frame_index,
        "observations": [{"id": o.id, "range": o.range, "bearing": o.bearing}
                         for o in frame.observations],
        "scan": list(frame.scan),
    }


def frame_from_dict(doc: dict, path: str = "frame") -> Frame:
    """Parse a wire/log frame; raises ``FrameError`` on structural problems."""
    if not isinstance(doc, dict):
        raise FrameError(path, "expected an object")
    for key in ("index", "observations", "scan"):
        if key not in doc:
            raise FrameError(f"{path}.{key}", "missing field")
    index = doc["index"]
    if not isinstance(index, int) or isinstance(index, bool):
        raise FrameError(f"{path}.index", "expected an integer")
    if not isinstance(doc["observations"], list):
        raise FrameError(f"{path}.observations", "expected a list")
    obs = []
    for k, o in enumerate(doc["observations"]):
        where = f"{path}.observations[{k}]"
        if not isinstance(o, dict):
            raise FrameError(where, "expected an object")
        for key in ("id", "range", "bearing"):
            if key not in o:
                raise FrameError(f"{where}.{key}", "missing field")
        if not isinstance(o["id"], int) or isinstance(o["id"], bool):
            raise FrameError(f"{where}.id", "expected an integer")
        for key in ("range", "bearing"):
            if not isinstance(o[key], (int, float)) or isinstance(o[key], bool):
                raise FrameError(f"{where}.{key}", "expected a number")
        obs.append(Observation(o["id"], float(o["range"]), float(o["bearing"])))
    if not isinstance(doc["scan"], list):
        raise FrameError(f"{path}.scan", "expected a list")
    for k, r in enumerate(doc["scan"]):
        if not isinstance(r, (int, float)) or isinstance(r, bool):
            raise FrameError(f"{path}.scan[{k}]", "expected a number")
    return Frame(tuple(obs), tuple(float(r) for r in doc["scan"]), index)


def cast_rays(world: World, x: float, y: float, angles: np.ndarray,
              max_range: float) -> np.ndarray:
    """Distance to the first occupied cell along each world-frame angle.

    Exact grid traversal: every cell-boundary crossing within range is
    enumerated, crossings are merged in order of distance, and the cell
    entered at each crossing is looked up. Cells outside the grid count as
    occupied. Rays that hit nothing return ``max_range``.
    """
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    res = world.resolution
    gx = (x - world.origin[0]) / res
    gy = (y - world.origin[1]) / res
    ci, cj = math.floor(gx), math.floor(gy)
    dx, dy = np.cos(angles), np.sin(angles)
    k = np.arange(int(math.ceil(max_range / res)) + 2)
    sx = np.where(dx > 0, 1, -1)
    sy = np.where(dy > 0, 1, -1)
    # boundary coordinates crossed along each axis, in crossing order
    bx = np.where(dx[:, None] > 0, ci + 1 + k[None, :], ci - k[None, :])
    by = np.where(dy[:, None] > 0, cj + 1 + k[None, :], cj - k[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = (bx - gx) * res / dx[:, None]
        ty = (by - gy) * res / dy[:, None]
    tx[dx == 0] = np.inf
    ty[dy == 0] = np.inf
    t = np.concatenate([tx, ty], axis=1)
    order = np.argsort(t, axis=1, kind="stable")
    t = np.take_along_axis(t, order, axis=1)
    is_x = order < k.size
    i = ci + sx[:, None] * np.cumsum(is_x, axis=1)
    j = cj + sy[:, None] * np.cumsum(~is_x, axis=1)
    nx, ny = world.grid.shape
    inside = (i >= 0) & (i < nx) & (j >= 0) & (j < ny)
    occ = np.ones(i.shape, dtype=bool)
    occ[inside] = world.grid[i[inside], j[inside]]
    hit = occ & (t <= max_range)
    first = np.argmax(hit, axis=1)
    rows = np.arange(angles.size)
    return np.where(hit[rows, first], t[rows, first], float(max_range))


def render_frame(world: World, pose: Pose, cfg: SensorConfig = SensorConfig(),
                 frame_index: int = 0) -> Frame:
    if not world.is_free(pose.x, pose.y):
        raise ValueError(f"cannot render from occupied position ({pose.x}, {pose.y})")
    return _render(world, pose, cfg, frame_index)


def _render(world: World, pose: Pose, cfg: SensorConfig, frame_index: int) -> Frame:
    bearings = cfg.ray_bearings()
    lm = world.landmark_array
    cand = []
    if len(lm):
        ex, ey = lm[:, 1] - pose.x, lm[:, 2] - pose.y
        rs = np.hypot(ex, ey)
        for k in np.flatnonzero((rs > 0.0) & (rs <= cfg.max_range)):
            b = wrap(math.atan2(ey[k], ex[k]) - pose.theta)
            if abs(b) <= 0.5 * cfg.fov:
                cand.append((int(lm[k, 0]), float(rs[k]), b))
    angles = pose.theta + bearings
    if cfg.landmark_visibility and cand:
        angles = np.concatenate([angles, [pose.theta + c[2] for c in cand]])
        reach = max(cfg.max_range, max(c[1] for c in cand))
    else:
        reach = cfg.max_range
    hits = cast_rays(world, pose.x, pose.y, angles, reach)
    scan = np.minimum(hits[:cfg.n_rays], cfg.max_range)
    if cfg.landmark_visibility and cand:
        cand = [c for c, h in zip(cand, hits[cfg.n_rays:]) if h >= c[1]]
    obs = tuple(Observation(lid, r, b) for lid, r, b in sorted(cand))
    return Frame(obs, tuple(scan.tolist()), frame_index)


# --- kinematics --------------------------------------------------------------

@dataclass(frozen=True)
class AgentState:
    pose: Pose
    collided: bool = False
    time: float = 0.0


COLLISION_SUBSTEPS = 10


def step(state: AgentState, command: tuple[float, float], dt: float, world: World,
         v_cap: float = 2.0, omega_cap: float = math.pi) -> AgentState:
    """Forward-Euler unicycle step with sub-stepped collision resolution."""
    v, w = command
    if not dt > 0:
        raise ValueError("dt must be positive")
    if abs(v) > v_cap or abs(w) > omega_cap:
        raise ValueError(f"command ({v}, {w}) exceeds caps ({v_cap}, {omega_cap})")
    p = state.pose
    ex = v * math.cos(p.theta) * dt
    ey = v * math.sin(p.theta) * dt
    x, y = p.x, p.y
    collided = False
    if ex != 0.0 or ey != 0.0:
        for k in range(1, COLLISION_SUBSTEPS + 1):
            f = k / COLLISION_SUBSTEPS
            px, py = p.x + ex * f, p.y + ey * f
            if not world.is_free(px, py):
                collided = True
                break
            x, y = px, py
    return AgentState(Pose(x, y, p.theta + w * dt), collided, state.time + dt)


# --- shortest paths ----------------------------------------------------------

def distance_field(free: np.ndarray, source: tuple[int, int], resolution: float) -> np.ndarray:
    """Dijkstra cost from ``source`` to every cell over 8-connected free cells.

    Diagonal moves may not cut an occupied corner. Unreachable cells are inf.
    """
    nx, ny = free.shape
    dist = np.full((nx, ny), np.inf)
    si, sj = source
    if not (0 <= si < nx and 0 <= sj < ny) or not free[si, sj]:
        return dist
    diag = SQRT2 * resolution
    dist[si, sj] = 0.0
    heap = [(0.0, si, sj)]
    done = np.zeros((nx, ny), dtype=bool)
    while heap:
        d, i, j = heapq.heappop(heap)
        if done[i, j]:
            continue
        done[i, j] = True
        for di, dj, is_diag in _MOVES:
            a, b = i + di, j + dj
            if not (0 <= a < nx and 0 <= b < ny) or not free[a, b] or done[a, b]:
                continue
            if is_diag:
                if not (free[i + di, j] and free[i, j + dj]):
                    continue
                nd = d + diag
            else:
                nd = d + resolution
            if nd < dist[a, b]:
                dist[a, b] = nd
                heapq.heappush(heap, (nd, a, b))
    return dist


def descend(free: np.ndarray, field_: np.ndarray, start: tuple[int, int],
            resolution: float, tie_point: tuple[float, float],
            centers) -> list[tuple[int, int]]:
    """Follow a distance field downhill from ``start`` to its zero cell.

    Ties between equally good neighbors break on Euclidean distance of the
    neighbor's center to ``tie_point``, which keeps the walk covariant under
    reflections of the grid.
    """
    nx, ny = free.shape
    path = [start]
    i, j = start
    if not np.isfinite(field_[i, j]):
        return []
    diag = SQRT2 * resolution
    guard = nx * ny
    while field_[i, j] > 0 and guard > 0:
        guard -= 1
        best = None
        for di, dj, is_diag in _MOVES:
            a, b = i + di, j + dj
            if not (0 <= a < nx and 0 <= b < ny) or not free[a, b]:
                continue
            if is_diag and not (free[i + di, j] and free[i, j + dj]):
                continue
            if not field_[a, b] < field_[i, j]:
                continue
            score = field_[a, b] + (diag if is_diag else resolution)
            cx, cy = centers(a, b)
            key = (score, math.hypot(cx - tie_point[0], cy - tie_point[1]))
            if best is None or key < best[0]:
                best = (key, (a, b))
        if best is None:
            break
        i, j = best[1]
        path.append((i, j))
    return path


def shortest_path_length(world: World, start: tuple[float, float],
                         goal: tuple[float, float]) -> float:
    """Grid geodesic from start to goal; ``math.inf`` when unreachable.

    Cost is the 8-connected cell path between the containing cells plus the
    offsets of both points from their cell centers.
    """
    if not world.is_free(*start) or not world.is_free(*goal):
        raise ValueError("start and goal must lie in free space")
    cs, cg = world.cell_of(*start), world.cell_of(*goal)
    if cs == cg:
        return distance(start, goal)
    field_ = distance_field(~world.grid, cg, world.resolution)
    d = float(field_[cs])
    if not math.isfinite(d):
        return math.inf
    return d + distance(start, world.cell_center(*cs)) + distance(goal, world.cell_center(*cg))


# --- episodes ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Episode:
    world: World
    start: Pose
    goal: tuple[float, float]
    instruction: str
    shortest_path_len: float
    index: int = 0

    def __post_init__(self):
        if not self.world.is_free(self.start.x, self.start.y):
            raise ValueError("episode start not in free space")
        if not self.world.is_free(*self.goal):
            raise ValueError("episode goal not in free space")
        if not (math.isfinite(self.shortest_path_len) and self.shortest_path_len > 0):
            raise ValueError(f"shortest_path_len {self.shortest_path_len} must be positive and finite")


def generate_episodes(world: World, n: int, seed: int, min_len: float = 5.0,
                      max_len: float = 12.0, max_tries: int = 2000) -> list[Episode]:
    """Sample ``n`` start/goal pairs whose geodesic length lies in [min_len, max_len]."""
    rng = np.random.default_rng(seed)
    roomy = np.argwhere(~inflate(world.grid, 1))
    if len(roomy) < 2:
        raise WorldGenerationError("world has no room for episodes")
    free = ~world.grid
    episodes = []
    tries = 0
    while len(episodes) < n:
        tries += 1
        if tries > max_tries:
            raise WorldGenerationError(f"could only place {len(episodes)} of {n} episodes")
        si, sj = roomy[rng.integers(len(roomy))]
        field_ = distance_field(free, (int(si), int(sj)), world.resolution)
        ok = np.argwhere((field_ >= min_len) & (field_ <= max_len) & ~inflate(world.grid, 1))
        if len(ok) == 0:
            continue
        gi, gj = ok[rng.integers(len(ok))]
        sx, sy = world.cell_center(int(si), int(sj))
        gx, gy = world.cell_center(int(gi), int(gj))
        theta = float(rng.uniform(-math.pi, math.pi))
        ell = shortest_path_length(world, (sx, sy), (gx, gy))
        text = f"Walk to the point ({gx:.2f}, {gy:.2f})."
        episodes.append(Episode(world, Pose(sx, sy, theta), (gx, gy), text, ell, len(episodes)))
    return episodes


# --- pose-stamped frame logs -------------------------------------------------

@dataclass(frozen=True)
class FrameLog:
    source_id: str
    trajectory: Trajectory
    frames: tuple[Frame, ...]

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if len(self.frames) != len(self.trajectory):
            raise ValueError(f"{len(self.frames)} frames for {len(self.trajectory)} poses")

    def __len__(self):
        return len(self.frames)


def record_log(world: World, start: Pose, commands: Iterable[tuple[float, float, int]],
               sensor: SensorConfig = SensorConfig(), fps: float = 24.0,
               source_id: str = "sim") -> FrameLog:
    """Drive (v, omega, n_frames) command segments and render every frame."""
    dt = 1.0 / fps
    state = AgentState(start)
    poses = [start]
    for v, w, count in commands:
        for _ in range(int(count)):
            state = step(state, (v, w), dt, world)
            poses.append(state.pose)
    frames = tuple(render_frame(world, p, sensor, k) for k, p in enumerate(poses))
    return FrameLog(source_id, Trajectory.from_poses(poses, period=dt), frames)


def log_to_dict(log: FrameLog) -> dict:
    return {
        "version": 1,
        "kind": "frame_log",
        "source_id": log.source_id,
        "trace": {
            "poses": [list(p.as_tuple()) for p in log.trajectory.poses],
            "timestamps": list(log.trajectory.timestamps),
            "frames": [frame_to_dict(f) for f in log.frames],
        },
    }


def log_from_dict(doc: dict, source_id: Optional[str] = None) -> FrameLog:
    """Parse a frame log or an episode record whose trace carries frames."""
    trace = doc.get("trace")
    if not isinstance(trace, dict):
        raise ValueError("record has no 'trace' object")
    if not trace.get("frames"):
        raise ValueError("trace carries no frames")
    poses = tuple(Pose(*map(float, p)) for p in trace["poses"])
    traj = Trajectory(poses, tuple(trace["timestamps"]))
    frames = tuple(frame_from_dict(f, f"trace.frames[{k}]") for k, f in enumerate(trace["frames"]))
    sid = source_id or doc.get("source_id") or f"episode_{doc.get('episode_index', 0)}"
    return FrameLog(str(sid), traj, frames)
