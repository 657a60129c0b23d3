"""Acceptance criteria: each test records a PASS/FAIL line shown in the pytest summary."""
import math
import sys
import time

import numpy as np

from planarnav.controller import ControllerGains, track
from planarnav.datapipe import (MotionPrimitive as P, build_manifest, caption, caption_direction,
                                classify_primitive, direction_of, histogram, mirror, process_logs,
                                segment_clips, simulate_logs)
from planarnav.geometry import Pose, RelativePose, Trajectory, accumulate, compose, path_length, relative, wrap
from planarnav.harness import (BenchmarkConfig, acmoe_ablation, drift_sweep, monotone_within,
                               run_benchmark)
from planarnav.idm import estimate_relative_pose
from planarnav.imaginer import Primitive, decompose
from planarnav.metrics import (Action, EpisodeResult, Termination, aggregate, discretize_actions,
                               levenshtein, motion_fidelity, navigation_error, pairwise_levenshtein,
                               rpe, spl)
from planarnav.protocol import (PlanTimeoutError, PlanValidationError, ProtocolError, StdioEndpoint,
                                encode_response, request_external_plan)
from planarnav.worldsim import (Frame, Landmark, World, generate_world, inflate,
                                render_frame, shortest_path_length)

import conftest
from oracles import all_sequences, by_length, levenshtein_table, naive_levenshtein, random_result
from conftest import room

TOL = 1e-9


def record(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    conftest.ACCEPTANCE.append(line)
    print(line, file=sys.stderr)
    return ok


def close(a, b, tol=TOL):
    return abs(a - b) <= tol


# --- formula goldens -------------------------------------------------------------

def _golden_checks():
    F, TL, TR = Action.F, Action.TL, Action.TR
    checks = {}
    checks["wrap(-3pi/2)"] = close(wrap(-1.5 * math.pi), math.pi / 2)
    c = compose(Pose(0, 0, math.pi / 2), RelativePose(1, 0, 0))
    checks["compose"] = close(c.x, 0) and close(c.y, 1) and close(c.theta, math.pi / 2)
    r = relative(Pose(0, 0, math.pi / 2), Pose(0, 1, math.pi / 2))
    checks["relative"] = close(r.dx, 1) and close(r.dy, 0) and close(r.dtheta, 0)
    e = accumulate(Pose(0, 0, 0), [RelativePose(0, 0, math.pi / 2), RelativePose(1, 0, 0)]).poses[-1]
    checks["accumulate"] = close(e.x, 0) and close(e.y, 1) and close(e.theta, math.pi / 2)
    checks["path_length 3-4-5"] = close(path_length([Pose(0, 0, 0), Pose(3, 4, 0)]), 5.0)
    sq = [Pose(0, 0, 0), Pose(1, 0, 0), Pose(1, 1, 0), Pose(0, 1, 0), Pose(0, 0, 0)]
    checks["path_length square"] = close(path_length(sq), 4.0)
    checks["shortest path"] = abs(shortest_path_length(room(20, 20, 0.5), (1, 1), (1, 6)) - 5.0) <= 0.5
    w = World(np.zeros((10, 10), bool), 0.5, (Landmark(0, 0.0, 2.0),), 0, (-2.25, -2.25))
    o = render_frame(w, Pose(0, 0, math.pi / 2)).by_id()[0]
    checks["bearing"] = close(o.bearing, 0.0) and close(o.range, 2.0)
    w2 = World(np.zeros((10, 10), bool), 0.5, (Landmark(0, 2.0, 0.0),), 0, (-2.25, -2.25))
    checks["bearing -pi/2"] = close(render_frame(w2, Pose(0, 0, math.pi / 2)).by_id()[0].bearing, -math.pi / 2)
    f0 = Frame((), ())
    checks["decompose +pi/2"] = decompose("", f0, Pose(0, 0, 0), (0, 2)).primitive is Primitive.TURN_LEFT
    checks["decompose -pi/2"] = decompose("", f0, Pose(0, 0, 0), (0, -2)).primitive is Primitive.TURN_RIGHT
    orw = room(21, 21, 0.5, [(1.3 + 1.7 * a, 1.1 + 1.6 * b) for a in range(5) for b in range(5)])
    rel = estimate_relative_pose(render_frame(orw, Pose(4, 5, 0)), render_frame(orw, Pose(5, 5, 0))).rel
    checks["idm (1,0,0)"] = close(rel.dx, 1) and close(rel.dy, 0) and close(rel.dtheta, 0)
    checks["track"] = track(RelativePose(3, 4, 0), ControllerGains(k_v=0.5, v_max=2.0)) == (2.0, 0.0)
    checks["track zero"] = track(RelativePose(0, 0, 0)) == (0.0, 0.0)
    checks["track pi/2"] = track(RelativePose(2, 1, math.pi / 2))[0] == 0.0
    checks["classify forward"] = classify_primitive([RelativePose(0.25, 0, 0)] * 4) is P.FORWARD
    checks["classify left"] = classify_primitive([RelativePose(0.05, 0, 0.6)]) is P.TURN_LEFT
    cr = caption(P.COMPOUND_RIGHT, ["corridor"], 0)
    checks["caption"] = "dolly" in cr and "pan right" in cr and "corridor" in cr
    fwd = caption(P.FORWARD, [], 0)
    checks["caption forward"] = "dolly" in fwd and "pan" not in fwd
    checks["navigation_error"] = close(navigation_error(Pose(3, 4, 0), (0, 0)), 5.0)

    def res(success, ell, p):
        fin = Pose(0.0 if success else 9.0, 0, 0)
        return EpisodeResult(success, ell, p, fin, (0, 0), Trajectory.from_poses([fin]), Termination.STOP)
    checks["spl 0.4"] = close(spl([res(True, 4, 5), res(False, 3, 1)]), 0.4)
    checks["spl 1.0"] = close(spl([res(True, 4, 4)]), 1.0) and close(spl([res(True, 4, 3)]), 1.0)
    ref = [Pose(0, 0, 0), Pose(1, 0, 0.2), Pose(2, 1, 0.5)]
    t, rr = rpe(ref, [Pose(p.x + 0.1, p.y, p.theta) for p in ref])
    checks["rpe shift"] = close(t, 0.1) and rr == 0.0
    t, rr = rpe(ref, [Pose(p.x, p.y, p.theta + math.pi) for p in ref])
    checks["rpe pi"] = t == 0.0 and close(rr, math.pi)
    checks["discretize"] = (discretize_actions([RelativePose(0.2, 0, 0)]) == [F]
                            and discretize_actions([RelativePose(0, 0, 0.1)]) == [TL])
    checks["levenshtein"] = levenshtein([F, F, TL, F], [F, TR, TL, F]) == 1
    checks["motion_fidelity"] = close(motion_fidelity([F, F, TL, F], [F, TR, TL, F]), 0.75)
    return checks


def test_formula_goldens():
    t0 = time.perf_counter()
    checks = _golden_checks()
    dt = time.perf_counter() - t0
    bad = [k for k, v in checks.items() if not v]
    ok = not bad and dt < 1.0
    record("formula goldens", ok, f"{len(checks) - len(bad)}/{len(checks)} examples, {dt:.2f} s (< 1 s)"
           + (f"; failed: {', '.join(bad)}" if bad else ""))
    assert ok


# --- IDM exactness ---------------------------------------------------------------------

def test_idm_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worlds = [generate_world(s) for s in range(5)]
    free = [np.argwhere(~inflate(w.grid, 1)) for w in worlds]
    worst_t = worst_r = 0.0
    n = 0
    while n < 1000:
        k = n % len(worlds)
        w = worlds[k]
        i, j = free[k][rng.integers(len(free[k]))]
        a = Pose(*w.cell_center(int(i), int(j)), float(rng.uniform(-math.pi, math.pi)))
        b = compose(a, RelativePose(*rng.uniform(-0.4, 0.4, 2), float(rng.uniform(-0.5, 0.5))))
        if not w.is_free(b.x, b.y):
            continue
        fa, fb = render_frame(w, a), render_frame(w, b)
        if len(set(fa.by_id()) & set(fb.by_id())) < 3:
            continue
        est = estimate_relative_pose(fa, fb).rel
        truth = relative(a, b)
        worst_t = max(worst_t, math.hypot(est.dx - truth.dx, est.dy - truth.dy))
        worst_r = max(worst_r, abs(wrap(est.dtheta - truth.dtheta)))
        n += 1
    dt = time.perf_counter() - t0
    ok = worst_t < 1e-6 and worst_r < 1e-6 and dt < 10.0
    record("IDM exactness", ok, f"{n} pairs, max error {worst_t:.1e} m / {worst_r:.1e} rad (< 1e-6), "
           f"{dt:.1f} s (< 10 s)")
    assert ok


# --- oracle end to end --------------------------------------------------------------

def test_oracle_end_to_end():
    cfg = BenchmarkConfig(n_worlds=20, episodes_per_world=5, planner="oracle")
    t0 = time.perf_counter()
    first = run_benchmark(cfg)
    dt = time.perf_counter() - t0
    second = run_benchmark(cfg)
    agg = first.aggregate
    same = first.summary() == second.summary() and first.results == second.results
    ok = agg["SR"] >= 0.9 and agg["SPL"] >= 0.7 and same and dt < 120 and agg["n"] == 100
    record("oracle end-to-end", ok, f"n={agg['n']}, SR {agg['SR']:.3f} (>= 0.9), SPL {agg['SPL']:.3f} "
           f"(>= 0.7), deterministic={same}, {dt:.1f} s (< 120 s)")
    assert ok


# --- AC-MoE ablation ---------------------------------------------------------------------

def test_acmoe_ablation():
    res = acmoe_ablation(n_plans=500, seed=0, acmoe_flip=0.05, single_flip=0.3)
    ok = res.difference > 0 and res.p_value < 0.01 and len(res.acmoe) >= 500
    record("AC-MoE ablation", ok, f"{len(res.acmoe)} turn plans, MF {res.acmoe.mean():.3f} vs "
           f"{res.single.mean():.3f}, paired t p={res.p_value:.1e}, Wilcoxon p={res.p_wilcoxon:.1e} (< 0.01)")
    assert ok


# --- drift monotonicity ------------------------------------------------------------------

def test_drift_monotonicity():
    base = BenchmarkConfig(n_worlds=10, episodes_per_world=5)
    sweep = drift_sweep(base, (0.0, 0.02, 0.05, 0.1))
    sr = [a["SR"] for _, a in sweep]
    ok = monotone_within(sr, 0.02, 1) and all(a["n"] == 50 for _, a in sweep)
    record("drift monotonicity", ok, "SR " + ", ".join(f"{s}:{v:.2f}" for (s, _), v in zip(sweep, sr))
           + " on 50 episodes (one inversion <= 0.02 allowed)")
    assert ok


# --- Levenshtein equivalence -------------------------------------------------------------

def test_levenshtein_equivalence():
    t0 = time.perf_counter()
    seqs = all_sequences(6)
    table = levenshtein_table(seqs)
    mismatches = 0
    pairs = 0
    groups = by_length(seqs)
    for _, (ia, A) in groups.items():
        for _, (ib, B) in groups.items():
            for c in range(0, len(A), 1024):
                d = pairwise_levenshtein(A[c:c + 1024], B)
                mismatches += int((d != table[np.ix_(ia[c:c + 1024], ib)]).sum())
                pairs += d.size
    # the memo table itself against the literal recursion, and the scalar DP against both
    short = all_sequences(3)
    naive_bad = sum(table[i, j] != naive_levenshtein(a, b)
                    for i, a in enumerate(short) for j, b in enumerate(short))
    four = len(all_sequences(4))
    scalar_bad = sum(levenshtein(seqs[i], seqs[j]) != table[i, j] for i in range(four) for j in range(four))
    rng = np.random.default_rng(0)
    for i, j in rng.integers(len(seqs), size=(20_000, 2)):
        scalar_bad += levenshtein(seqs[i], seqs[j]) != table[i, j]
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and naive_bad == 0 and scalar_bad == 0 and dt < 30
    record("Levenshtein equivalence", ok, f"{pairs} pairs up to length 6, {mismatches} DP mismatches, "
           f"{naive_bad + scalar_bad} cross-check mismatches, {dt:.1f} s (< 30 s)")
    assert ok


# --- data pipeline ---------------------------------------------------------------------------

def test_datapipe_consistency(tmp_path):
    logs = simulate_logs(10, 20, seed=0)
    truth = {}
    for lg in logs:
        for raw in segment_clips(lg):
            yaw = sum(wrap(b.theta - a.theta) for a, b in zip(raw.poses, raw.poses[1:]))
            truth[raw.clip_id] = yaw
            truth[raw.clip_id + "_m"] = -yaw
    clips, dropped = process_logs(logs)
    sources = [c for c in clips if not c.mirrored]
    turning = [c for c in clips if direction_of(c.primitive) is not None]
    agree = sum(caption_direction(c.caption) == ("left" if truth[c.clip_id] > 0 else "right")
                for c in turning)
    involution = all(mirror(mirror(c)) == c for c in clips)
    h = histogram(clips)
    balanced = h["TurnLeft"] == h["TurnRight"] and h["CompoundLeft"] == h["CompoundRight"]
    build_manifest(clips, tmp_path / "manifest.jsonl")
    ok = (len(sources) == 200 and not dropped and agree == len(turning) and involution and balanced)
    record("data pipeline consistency", ok,
           f"{len(sources)} clips (+{len(clips) - len(sources)} mirrored), caption/yaw agreement "
           f"{agree}/{len(turning)}, involution={involution}, TL={h['TurnLeft']} TR={h['TurnRight']}")
    assert ok


# --- metric inequalities ----------------------------------------------------------------------

def test_metric_inequalities():
    rng = np.random.default_rng(7)
    violations = 0
    for _ in range(10_000):
        rs = [random_result(rng) for _ in range(int(rng.integers(1, 9)))]
        a = aggregate(rs)
        violations += not (0 <= a["SPL"] <= a["SR"] <= a["OS"] <= 1)
    record("metric inequalities", violations == 0, f"10000 fuzzed result sets, {violations} violations")
    assert violations == 0


# --- protocol conformance ----------------------------------------------------------------------

def test_protocol_conformance(open_room, tmp_path):
    import json
    from test_protocol import ECHO, OneShotServer, echo_reply

    frame = render_frame(open_room, Pose(5.0, 5.0, 0.2), frame_index=3)
    outcomes = {}
    servers = []

    def serve(reply):
        s = OneShotServer(reply)
        servers.append(s)
        return s.endpoint

    def expect(name, exc, fn, check=lambda e: True):
        try:
            fn()
        except exc as e:
            outcomes[name] = check(e)
        except Exception:  # wrong error type
            outcomes[name] = False
        else:
            outcomes[name] = False

    try:
        plan = request_external_plan(serve(echo_reply), frame, "go", 5, timeout=5)
        outcomes["tcp echo"] = len(plan.frames) == 6 and all(
            f.observations == frame.observations and f.scan == frame.scan for f in plan.frames)
        ep = StdioEndpoint([sys.executable, str(ECHO)])
        try:
            plan = request_external_plan(ep, frame, "go", 5, timeout=20)
            outcomes["stdio echo"] = len(plan.frames) == 6
        finally:
            ep.close()
        expect("close mid-message", ProtocolError,
               lambda: request_external_plan(serve(lambda ln: echo_reply(ln)[:30]), frame, "go", 3, timeout=5))
        expect("timeout", PlanTimeoutError,
               lambda: request_external_plan(serve(lambda ln: time.sleep(1.5)), frame, "go", 3, timeout=0.3))
        expect("malformed JSON", ProtocolError,
               lambda: request_external_plan(serve(lambda ln: b"{oops\n"), frame, "go", 3, timeout=5))

        def bad_bearing(ln):
            doc = json.loads(echo_reply(ln))
            doc["frames"][2]["observations"][1]["bearing"] = 4.0
            return (json.dumps(doc) + "\n").encode()
        expect("bearing 4.0", PlanValidationError,
               lambda: request_external_plan(serve(bad_bearing), frame, "go", 3, timeout=5),
               lambda e: e.path == "frames[2].observations[1].bearing")
        expect("frame count", PlanValidationError,
               lambda: request_external_plan(serve(lambda ln: encode_response([frame])), frame, "go", 3,
                                             timeout=5))
    finally:
        for s in servers:
            s.close()
    bad = [k for k, v in outcomes.items() if not v]
    record("protocol conformance", not bad, f"{len(outcomes) - len(bad)}/{len(outcomes)} checks"
           + (f"; failed: {', '.join(bad)}" if bad else ""))
    assert not bad
