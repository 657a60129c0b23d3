"""Proportional waypoint tracking and the open-loop execute/replan loop."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Protocol

from .geometry import (IDENTITY, Pose, RelativePose, Trajectory, WaypointTrajectory, accumulate,
                       distance, path_length, relative, wrap)
from .idm import DecodeError, IdmConfig, decode_trajectory
from .imaginer import (ExpertRouter, ImagineConfig, Subgoal, VisualPlan, decompose, default_router,
                       imagine, planned_poses, reference_steps)
from .metrics import (DiscretizationThresholds, EpisodeResult, Termination, discretize_actions,
                      motion_fidelity, rpe_steps)
from .protocol import PlanProviderError, request_external_plan
from .seeds import derive_seed
from .worldsim import AgentState, Episode, Frame, SensorConfig, World, render_frame, step


@dataclass(frozen=True)
class ControllerGains:
    k_v: float = 1.0
    k_theta: float = 2.0
    v_max: float = 1.0
    omega_max: float = 1.0

    def __post_init__(self):
        if min(self.k_v, self.k_theta, self.v_max, self.omega_max) <= 0:
            raise ValueError("controller gains and limits must be strictly positive")


@dataclass(frozen=True)
class EpisodeConfig:
    max_steps: int = 600
    success_threshold: float = 3.0
    ticks_per_waypoint: int = 1
    dt: float = 1.0 / 6.0
    # execute only the first N waypoints of each buffer; None consumes it all
    waypoints_per_plan: Optional[int] = None
    fallback_ticks: int = 6
    max_fallbacks: int = 3
    record_frames: bool = False
    sensor: SensorConfig = SensorConfig()

    def __post_init__(self):
        if self.max_steps < 1 or self.ticks_per_waypoint < 1:
            raise ValueError("max_steps and ticks_per_waypoint must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


def _clip(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


def track(waypoint: RelativePose, gains: ControllerGains = ControllerGains()) -> tuple[float, float]:
    """Map a remaining displacement to a (v, omega) command."""
    dth = wrap(waypoint.dtheta)
    if abs(dth) <= math.pi / 4:
        v = _clip(gains.k_v * math.hypot(waypoint.dx, waypoint.dy), 0.0, gains.v_max)
    else:
        v = 0.0
    w = _clip(gains.k_theta * dth, -gains.omega_max, gains.omega_max)
    return v, w


# --- planners --------------------------------------------------------------------

@dataclass
class PlanOutcome:
    plan: VisualPlan
    subgoal: Optional[Subgoal] = None
    reference: Optional[tuple[Pose, ...]] = None


class Planner(Protocol):
    horizon_frames: int

    def plan(self, world: World, frame: Frame, pose: Pose, instruction: str,
             goal: tuple[float, float], seed: int) -> PlanOutcome: ...


@dataclass
class OraclePlanner:
    """Reasoner, router and oracle imaginer chained together."""

    router: ExpertRouter = field(default_factory=lambda: default_router("acmoe", 0.0, 0.0))
    horizon_frames: int = 70
    imagine_cfg: ImagineConfig = ImagineConfig()
    with_reference: bool = True

    def plan(self, world, frame, pose, instruction, goal, seed):
        sub = decompose(instruction, frame, pose, goal)
        expert = self.router.select(sub)
        plan = imagine(world, frame, pose, sub, expert, self.horizon_frames, seed, self.imagine_cfg)
        ref = None
        if self.with_reference:
            em = expert.error_model
            if em == type(em)():
                ref = plan.poses
            else:
                ref = tuple(planned_poses(world, pose, sub, self.horizon_frames, self.imagine_cfg)[0])
        return PlanOutcome(plan, sub, ref)


@dataclass
class ExternalPlanner:
    endpoint: object
    horizon_frames: int = 70
    timeout: float = 30.0
    sensor: Optional[SensorConfig] = None

    def plan(self, world, frame, pose, instruction, goal, seed):
        sub = decompose(instruction, frame, pose, goal)
        return PlanOutcome(request_external_plan(self.endpoint, frame, sub.text, self.horizon_frames,
                                                 self.timeout, self.sensor), sub)


# --- episode loop ----------------------------------------------------------------

def _dead_reckon(p: Pose, v: float, w: float, dt: float) -> Pose:
    return Pose(p.x + v * math.cos(p.theta) * dt, p.y + v * math.sin(p.theta) * dt, p.theta + w * dt)


def run_episode(episode: Episode, planner, idm: IdmConfig = IdmConfig(),
                gains: ControllerGains = ControllerGains(), cfg: EpisodeConfig = EpisodeConfig(),
                seed: int = 0, world_index: int = 0,
                disc: DiscretizationThresholds = DiscretizationThresholds()) -> EpisodeResult:
    world = episode.world
    state = AgentState(episode.start)
    poses = [state.pose]
    frames = [render_frame(world, state.pose, cfg.sensor, 0)] if cfg.record_frames else None
    ticks = 0
    collisions = 0
    fallbacks = 0
    plans = []
    termination = None

    def advance(v, w, dr):
        nonlocal state, ticks, collisions
        state = step(state, (v, w), cfg.dt, world)
        ticks += 1
        collisions += int(state.collided)
        poses.append(state.pose)
        if frames is not None:
            frames.append(render_frame(world, state.pose, cfg.sensor, ticks))
        return _dead_reckon(dr, v, w, cfg.dt)

    while True:
        if ticks >= cfg.max_steps:
            termination = Termination.BUDGET
            break
        if distance(state.pose, episode.goal) <= cfg.success_threshold:
            termination = Termination.STOP
            break
        frame = render_frame(world, state.pose, cfg.sensor, ticks)
        record = {"tick": ticks, "pose": list(state.pose.as_tuple())}
        plans.append(record)
        try:
            out = planner.plan(world, frame, state.pose, episode.instruction, episode.goal,
                               derive_seed(seed, len(plans)))
        except PlanProviderError as exc:
            record["planner_error"] = f"{type(exc).__name__}: {exc}"
            termination = Termination.PLANNER_ERROR
            break
        plan = out.plan
        if out.subgoal is not None:
            record["primitive"] = out.subgoal.primitive.value
        if plan.expert is not None:
            record.update(expert=plan.expert.value, flipped=plan.flipped,
                          hallucinated=plan.hallucinated, truncated=plan.truncated,
                          fallback=plan.fallback)
        try:
            steps = tuple(decode_trajectory(plan, idm))
            fallbacks = 0
        except DecodeError as exc:
            record["decode_error"] = {"step": exc.step_index, "reason": str(exc.cause)}
            fallbacks += 1
            if fallbacks >= cfg.max_fallbacks:
                termination = Termination.DECODE_FAILURE
                break
            steps = exc.partial
        if out.reference is not None and steps:
            ref = reference_steps(out.reference, idm.stride)
            w_ref, w_gen = WaypointTrajectory(tuple(ref)), WaypointTrajectory(steps)
            if len(ref) == len(steps):
                record["rpe_t"], record["rpe_r"] = rpe_steps(w_ref, w_gen)
            record["motion_fidelity"] = motion_fidelity(
                [a.value for a in discretize_actions(ref, disc)],
                [a.value for a in discretize_actions(steps, disc)])
        record["steps"] = [list(s.as_tuple()) for s in steps]

        if not steps:
            # nothing decodable: look around in place before replanning
            bearing = wrap(math.atan2(episode.goal[1] - state.pose.y,
                                      episode.goal[0] - state.pose.x) - state.pose.theta)
            w = math.copysign(gains.omega_max, bearing if bearing != 0 else 1.0)
            dr = IDENTITY
            for _ in range(cfg.fallback_ticks):
                if ticks >= cfg.max_steps:
                    break
                dr = advance(0.0, w, dr)
            continue

        if cfg.waypoints_per_plan is not None:
            steps = steps[:cfg.waypoints_per_plan]
        targets = accumulate(IDENTITY, steps).poses[1:]
        dr = IDENTITY
        for target in targets:
            for _ in range(cfg.ticks_per_waypoint):
                if ticks >= cfg.max_steps:
                    break
                v, w = track(relative(dr, target), gains)
                dr = advance(v, w, dr)

    trace = Trajectory.from_poses(poses, period=cfg.dt)
    final = poses[-1]
    ne = distance(final, episode.goal)
    return EpisodeResult(
        success=ne <= cfg.success_threshold,
        shortest_path_len=episode.shortest_path_len,
        path_len=path_length(trace),
        final_pose=final,
        goal=episode.goal,
        trace=trace,
        termination=termination,
        collisions=collisions,
        success_threshold=cfg.success_threshold,
        episode_index=episode.index,
        world_index=world_index,
        seed=seed,
        ticks=ticks,
        plans=tuple(plans),
        frames=tuple(frames) if frames is not None else None,
    )
