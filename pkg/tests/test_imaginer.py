import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from planarnav.geometry import Pose, relative, wrap
from planarnav.idm import decode_trajectory
from planarnav.imaginer import (ErrorModel, ExpertConfig, ExpertId, ExpertRouter, ImagineConfig,
                                NOISELESS, Primitive, RouterMode, Subgoal, VisualPlan, decompose,
                                default_router, imagine, plan_polyline, planned_poses,
                                reference_steps, route)
from planarnav.worldsim import Frame, WorldParams, generate_world, inflate, mirror_world, render_frame

from conftest import room

LEFT = ExpertConfig(ExpertId.LEFT, NOISELESS)


def net_yaw(poses):
    return sum(wrap(b.theta - a.theta) for a, b in zip(poses, poses[1:]))


def free_pose(world, rng, theta=None, clearance=1):
    cells = np.argwhere(~inflate(world.grid, clearance))
    i, j = cells[rng.integers(len(cells))]
    x, y = world.cell_center(int(i), int(j))
    return Pose(x, y, float(rng.uniform(-math.pi, math.pi)) if theta is None else theta)


def plan_from(world, pose, sub, expert=LEFT, h=70, seed=0):
    return imagine(world, render_frame(world, pose), pose, sub, expert, h, seed)


class TestDecompose:
    def setup_method(self):
        self.frame = Frame((), ())
        self.pose = Pose(1.0, 1.0, 0.5)

    def at_bearing(self, beta, r=3.0):
        th = self.pose.theta + beta
        return (self.pose.x + r * math.cos(th), self.pose.y + r * math.sin(th))

    def test_examples(self):
        s = decompose("go", self.frame, self.pose, self.at_bearing(0.0))
        assert s.primitive is Primitive.FORWARD and "dolly forward" in s.text
        assert decompose("go", self.frame, self.pose, self.at_bearing(math.pi / 2)).primitive is Primitive.TURN_LEFT
        assert decompose("go", self.frame, self.pose, self.at_bearing(-math.pi / 2)).primitive is Primitive.TURN_RIGHT

    def test_text_matches_primitive(self):
        for beta, word in [(1.0, "pan left"), (-1.0, "pan right")]:
            s = decompose("go", self.frame, self.pose, self.at_bearing(beta))
            assert word in s.text and s.target_hint is not None

    def test_cone_edge(self):
        inside = decompose("go", self.frame, self.pose, self.at_bearing(math.pi / 8 - 1e-9))
        outside = decompose("go", self.frame, self.pose, self.at_bearing(math.pi / 8 + 1e-9))
        assert inside.primitive is Primitive.FORWARD and outside.primitive is Primitive.TURN_LEFT

    def test_non_finite_goal(self):
        with pytest.raises(ValueError):
            decompose("go", self.frame, self.pose, (math.nan, 0.0))

    @given(st.floats(-3.1, 3.1))
    def test_mirror_swaps_primitive(self, beta):
        a = decompose("go", self.frame, Pose(0, 0, 0), (math.cos(beta), math.sin(beta)))
        b = decompose("go", self.frame, Pose(0, 0, 0), (math.cos(beta), -math.sin(beta)))
        swap = {Primitive.TURN_LEFT: Primitive.TURN_RIGHT, Primitive.TURN_RIGHT: Primitive.TURN_LEFT,
                Primitive.FORWARD: Primitive.FORWARD}
        if abs(abs(beta) - math.pi / 8) > 1e-9:
            assert b.primitive is swap[a.primitive]


class TestRouting:
    def test_examples(self):
        left, right, fwd = (Subgoal("", p) for p in (Primitive.TURN_LEFT, Primitive.TURN_RIGHT,
                                                     Primitive.FORWARD))
        assert route(left, RouterMode.ACMOE) is ExpertId.LEFT
        assert route(right, RouterMode.ACMOE) is ExpertId.RIGHT
        assert route(fwd, RouterMode.ACMOE) is ExpertId.LEFT
        for s in (left, right, fwd):
            assert route(s, RouterMode.SINGLE) is ExpertId.SINGLE

    def test_router_needs_matching_experts(self):
        with pytest.raises(ValueError):
            ExpertRouter(RouterMode.ACMOE, (LEFT,))
        with pytest.raises(ValueError):
            ExpertRouter(RouterMode.ACMOE, (LEFT, LEFT, ExpertConfig(ExpertId.RIGHT)))
        with pytest.raises(ValueError):
            ExpertRouter(RouterMode.SINGLE, (LEFT,))

    def test_default_router_flip_probs(self):
        r = default_router("acmoe", 0.05, 0.3)
        assert {e.error_model.flip_prob for e in r.experts} == {0.05}
        s = default_router("single", 0.05, 0.3)
        assert s.select(Subgoal("", Primitive.TURN_LEFT)).error_model.flip_prob == 0.3


class TestTypes:
    @pytest.mark.parametrize("kw", [dict(flip_prob=1.5), dict(hallucination_prob=-0.1),
                                    dict(truncation_prob=2.0), dict(drift_sigma_r=-1.0),
                                    dict(drift_sigma_t=-0.1)])
    def test_error_model_validation(self, kw):
        with pytest.raises(ValueError):
            ErrorModel(**kw)

    def test_visual_plan_invariants(self):
        f = [Frame((), (), k) for k in range(3)]
        VisualPlan(tuple(f), 2)
        with pytest.raises(ValueError):
            VisualPlan(tuple(f), 3)
        with pytest.raises(ValueError):
            VisualPlan((f[0], f[0], f[1]), 2)
        with pytest.raises(ValueError):
            VisualPlan((), 0)


class TestImagine:
    def test_shape_and_first_frame(self, open_room):
        pose = Pose(4.0, 4.0, 0.0)
        cur = render_frame(open_room, pose, frame_index=17)
        plan = imagine(open_room, cur, pose, Subgoal("", Primitive.FORWARD, (8, 8)), LEFT, 70, 1)
        assert len(plan.frames) == 71 and plan.frames[0] is cur
        assert [f.frame_index for f in plan.frames] == list(range(17, 88))
        assert plan.poses[0] == pose and len(plan.poses) == 71

    def test_forward_without_hint_goes_straight(self, open_room):
        pose = Pose(3.0, 5.0, 0.0)
        plan = plan_from(open_room, pose, Subgoal("", Primitive.FORWARD))
        end = plan.poses[-1]
        assert end.x > pose.x + 1.0 and abs(end.y - pose.y) < 1e-12 and end.theta == 0.0
        steps = decode_trajectory(plan)
        ref = reference_steps(plan.poses, 4)
        for s, r in zip(steps, ref):
            assert s.as_tuple() == pytest.approx(r.as_tuple(), abs=1e-9)

    def test_flip_forces_opposite_turn(self, open_room):
        pose = Pose(5.0, 5.0, 0.0)
        sub = Subgoal("", Primitive.TURN_LEFT, (5.0, 8.0))
        clean = plan_from(open_room, pose, sub)
        flipped = plan_from(open_room, pose, sub, ExpertConfig(ExpertId.LEFT, ErrorModel(flip_prob=1.0)))
        assert flipped.flipped and not clean.flipped
        assert net_yaw(clean.poses) > 0.5 and net_yaw(flipped.poses) < -0.5
        for a, b in zip(clean.poses, flipped.poses):
            r1, r2 = relative(pose, a), relative(pose, b)
            assert r2.dx == pytest.approx(r1.dx, abs=1e-9) and r2.dy == pytest.approx(-r1.dy, abs=1e-9)

    def test_deterministic_given_seed(self, world):
        rng = np.random.default_rng(0)
        pose = free_pose(world, rng)
        em = ErrorModel(0.5, 0.01, 0.02, 0.5, 0.5)
        sub = Subgoal("", Primitive.TURN_RIGHT, world.cell_center(20, 20))
        a = plan_from(world, pose, sub, ExpertConfig(ExpertId.SINGLE, em), seed=99)
        b = plan_from(world, pose, sub, ExpertConfig(ExpertId.SINGLE, em), seed=99)
        assert a == b

    def test_noiseless_plans_collision_free(self, world):
        rng = np.random.default_rng(1)
        for _ in range(30):
            pose = free_pose(world, rng)
            goal = free_pose(world, rng)
            plan = plan_from(world, pose, Subgoal("", Primitive.FORWARD, (goal.x, goal.y)))
            for a, b in zip(plan.poses, plan.poses[1:]):
                for t in np.linspace(0, 1, 9):
                    assert world.is_free(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))

    def test_drift_error_grows_with_step(self, open_room):
        pose = Pose(3.0, 3.0, 0.3)
        sub = Subgoal("", Primitive.FORWARD, (8.0, 7.0))
        frame = render_frame(open_room, pose)
        truth = reference_steps(imagine(open_room, frame, pose, sub, LEFT, 70, 0).poses, 4)
        drift = ExpertConfig(ExpertId.LEFT, ErrorModel(drift_sigma_r=0.05))
        errs = []
        for seed in range(100):
            steps = decode_trajectory(imagine(open_room, frame, pose, sub, drift, 70, seed))
            cum_true = np.cumsum([wrap(s.dtheta) for s in truth])
            cum = np.cumsum([wrap(s.dtheta) for s in steps])
            errs.append(np.abs(cum - cum_true))
        mean = np.mean(errs, axis=0)
        rho = stats.spearmanr(np.arange(len(mean)), mean).statistic
        assert rho > 0.9 and mean[-1] > 2 * mean[0]
        baseline = decode_trajectory(imagine(open_room, frame, pose, sub, LEFT, 70, 5))
        assert max(abs(wrap(a.dtheta - b.dtheta)) for a, b in zip(baseline, truth)) < 1e-9

    def test_truncation_freezes_tail(self, open_room):
        pose = Pose(3.0, 5.0, 0.0)
        plan = plan_from(open_room, pose, Subgoal("", Primitive.FORWARD, (9.0, 5.0)),
                         ExpertConfig(ExpertId.LEFT, ErrorModel(truncation_prob=1.0)), seed=4)
        assert plan.truncated
        tail = [k for k in range(1, 71) if plan.poses[k] == plan.poses[k - 1]]
        assert tail and tail[-1] == 70 and tail == list(range(tail[0], 71))

    def test_hallucination_ignores_an_obstacle(self):
        # a wall between start and goal with a gap far away
        w = room(24, 24, 0.5, landmarks=[(1.3 + 1.9 * a, 1.2 + 1.8 * b) for a in range(6) for b in range(6)],
                 blocks=[(11, 13, 1, 20)])
        pose, goal = Pose(3.0, 4.0, 0.0), (9.0, 4.0)
        sub = Subgoal("", Primitive.FORWARD, goal)
        clean = plan_from(w, pose, sub)
        hall = plan_from(w, pose, sub, ExpertConfig(ExpertId.LEFT, ErrorModel(hallucination_prob=1.0)))
        assert hall.hallucinated
        # the honest plan turns toward the wall's end, the hallucinated one cuts through
        assert all(w.is_free(p.x, p.y) for p in clean.poses)
        assert clean.poses[-1].y > pose.y + 0.5
        assert all(abs(p.y - pose.y) < 1e-12 for p in hall.poses)
        assert any(not w.is_free(p.x, p.y) for p in hall.poses)

    def test_unreachable_goal_rotates_in_place(self):
        w = room(20, 20, 0.5, landmarks=[(2.1, 2.2), (4.3, 2.1), (2.2, 6.1), (7.9, 8.2)],
                 blocks=[(8, 13, 8, 9), (8, 13, 12, 13), (8, 9, 8, 13), (12, 13, 8, 13)])
        pose = Pose(2.0, 2.0, 0.0)
        plan = plan_from(w, pose, Subgoal("", Primitive.TURN_LEFT, w.cell_center(10, 10)))
        assert plan.fallback
        assert all((p.x, p.y) == (pose.x, pose.y) for p in plan.poses)
        assert abs(plan.poses[-1].theta - math.atan2(5.0 - 2.0, 5.0 - 2.0)) < 1e-9

    def test_occupied_pose_rejected(self, world):
        i, j = np.argwhere(world.grid)[0]
        p = Pose(*world.cell_center(int(i), int(j)), 0.0)
        with pytest.raises(ValueError):
            imagine(world, Frame((), ()), p, Subgoal("", Primitive.FORWARD), LEFT, 10)

    def test_horizon_validated(self, open_room):
        with pytest.raises(ValueError):
            plan_from(open_room, Pose(4, 4, 0), Subgoal("", Primitive.FORWARD), h=0)


class TestMirrorSymmetry:
    @pytest.mark.parametrize("seed", range(8))
    def test_mirrored_world_gives_mirrored_plan(self, seed):
        w = generate_world(seed, WorldParams(density=0.15))
        m = mirror_world(w)
        rng = np.random.default_rng(seed)
        pose, goal = free_pose(w, rng), free_pose(w, rng)
        prim = decompose("", Frame((), ()), pose, (goal.x, goal.y)).primitive
        mprim = {Primitive.TURN_LEFT: Primitive.TURN_RIGHT,
                 Primitive.TURN_RIGHT: Primitive.TURN_LEFT}.get(prim, prim)
        em = ExpertConfig(ExpertId.LEFT, ErrorModel(flip_prob=0.5))
        mpose = Pose(pose.x, -pose.y, -pose.theta)
        a = plan_from(w, pose, Subgoal("", prim, (goal.x, goal.y)), em, seed=seed)
        b = plan_from(m, mpose, Subgoal("", mprim, (goal.x, -goal.y)), em, seed=seed)
        assert a.flipped == b.flipped
        for p, q in zip(a.poses, b.poses):
            assert abs(p.x - q.x) < 1e-9 and abs(p.y + q.y) < 1e-9
            assert abs(wrap(p.theta + q.theta)) < 1e-9
        for f, g in zip(a.frames, b.frames):
            assert np.allclose(f.scan, g.scan[::-1], atol=1e-9)
            fo, go = f.by_id(), g.by_id()
            assert set(fo) == set(go)
            for k in fo:
                assert abs(wrap(fo[k].bearing + go[k].bearing)) < 1e-9


class TestFlipRates:
    def turn_plans(self, router, n):
        w = room(21, 21, 0.5, landmarks=[(1.3 + 1.7 * a, 1.1 + 1.6 * b) for a in range(5) for b in range(5)])
        pose = Pose(5.0, 5.0, 0.0)
        frame = render_frame(w, pose)
        flips = []
        for k in range(n):
            left = k % 2 == 0
            sub = Subgoal("", Primitive.TURN_LEFT if left else Primitive.TURN_RIGHT,
                          (5.0, 8.0 if left else 2.0))
            plan = imagine(w, frame, pose, sub, router.select(sub), 8, rng_seed=10_000 + k)
            turned_left = net_yaw(plan.poses) > 0
            assert plan.flipped == (turned_left != left)
            flips.append(plan.flipped)
        return np.array(flips)

    def test_acmoe_rate_matches_q_and_is_below_single(self):
        n = 600
        acm = self.turn_plans(default_router("acmoe", 0.05, 0.3), n)
        one = self.turn_plans(default_router("single", 0.05, 0.3), n)
        assert stats.binomtest(int(acm.sum()), n, 0.05).pvalue > 0.01
        assert stats.binomtest(int(one.sum()), n, 0.3).pvalue > 0.01
        table = [[int(one.sum()), n - int(one.sum())], [int(acm.sum()), n - int(acm.sum())]]
        assert stats.fisher_exact(table, alternative="greater").pvalue < 0.01


def test_plan_polyline_endpoints(world):
    rng = np.random.default_rng(7)
    a, b = free_pose(world, rng), free_pose(world, rng)
    poly = plan_polyline(world, (a.x, a.y), (b.x, b.y))
    assert poly[0] == (a.x, a.y) and poly[-1] == (b.x, b.y)


def test_reference_steps_stride():
    poses = [Pose(0.1 * k, 0.0, 0.0) for k in range(9)]
    ref = reference_steps(poses, 4)
    assert len(ref) == 2 and ref[0].dx == pytest.approx(0.4)


def test_planned_poses_match_noiseless_imagine(open_room):
    pose = Pose(3.0, 3.0, 1.0)
    sub = Subgoal("", Primitive.TURN_RIGHT, (8.0, 2.0))
    poses, fb = planned_poses(open_room, pose, sub, 70, ImagineConfig())
    assert not fb and tuple(poses) == plan_from(open_room, pose, sub).poses
