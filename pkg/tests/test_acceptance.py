"""Acceptance suite: one test per release criterion.

Each test pins the criterion's stated tolerance and runtime budget and
prints a PASS line with the measured numbers, so a full run reads as a
checklist. Run with `pytest tests/test_acceptance.py -s`.
"""

import time

import numpy as np
import pytest

from swarmlink import fixtures, scenario
from swarmlink.qlearn import (
    LearnAction,
    LearnState,
    QTable,
    bellman_residual,
    effective_action,
    q_update,
    rate_energy_mdp,
    select_action,
    value_iteration_oracle,
)
from swarmlink.radio import (
    AccuracyRow,
    RssiInterval,
    accumulate_interval_stats,
    calibrate_params,
    sample_rssi_batch,
)
from swarmlink.slam import UNKNOWN, Pose, simulate_scan
from swarmlink.world import RngStream

from oracle_helpers import reconnect_oracle

CAL_ANCHORS = [(4.0, -5.0), (8.0, -12.5), (12.0, -17.0)]

# hardware-measured accuracy cells: distance, (low, high), then per device
# (successes, failures, printed accuracy). The 4 m / (-7,-3) device-2 cell
# is printed as 39,37% in the source but 216/544 = 39.71%; the recomputed
# value is asserted for that cell (documented misprint).
ACCURACY_TABLE = [
    (4.0, (-8, -2), (0, 513, "0,00%"), (258, 257, "50,10%")),
    (4.0, (-7, -3), (0, 513, "0,00%"), (216, 328, "39,71%")),
    (4.0, (-6, -2), (0, 513, "0,00%"), (196, 348, "36,03%")),
    (8.0, (-15, -10), (260, 258, "50,19%"), (139, 355, "28,14%")),
    (8.0, (-14, -11), (166, 352, "32,05%"), (63, 431, "12,75%")),
    (8.0, (-13, -12), (68, 450, "13,13%"), (18, 476, "3,64%")),
    (12.0, (-20, -14), (309, 198, "60,95%"), (385, 124, "75,64%")),
    (12.0, (-19, -15), (242, 265, "47,73%"), (232, 277, "45,58%")),
    (12.0, (-18, -16), (138, 369, "27,22%"), (75, 434, "14,73%")),
]


def timed():
    start = time.monotonic()
    return lambda: time.monotonic() - start


def passed(n, detail, elapsed, budget):
    assert elapsed < budget, f"criterion {n} exceeded runtime budget: {elapsed:.1f}s >= {budget}s"
    print(f"PASS criterion {n}: {detail} ({elapsed:.2f} s < {budget} s)")


def test_criterion_1_accuracy_table_arithmetic():
    elapsed = timed()
    checked = 0
    for distance, (low, high), dev1, dev2 in ACCURACY_TABLE:
        for successes, failures, printed in (dev1, dev2):
            row = AccuracyRow(distance, RssiInterval(low, high), successes, failures)
            want = float(printed.replace(",", ".").rstrip("%"))
            got = 100.0 * row.accuracy
            assert abs(got - want) <= 0.01, (distance, low, high, got, want)
            assert row.accuracy_pct() == printed
            checked += 1
    passed(1, f"all 9 rows x 2 devices ({checked} cells) reproduce "
              "successes/(successes+failures) within 0.01 pp", elapsed(), 1.0)


def test_criterion_2_interval_accuracy_qualitative():
    elapsed = timed()
    params = calibrate_params(CAL_ANCHORS, noise_sigma=3.7)
    assert params.path_loss_exponent == pytest.approx(2.5, abs=0.05)
    intervals = {
        4.0: [(-8, -2), (-7, -3), (-6, -2)],
        8.0: [(-15, -10), (-14, -11), (-13, -12)],
        12.0: [(-20, -14), (-19, -15), (-18, -16)],
    }
    n = 20_000
    widest_8m = []
    for seed in range(10):
        for distance, ivs in intervals.items():
            rng = RngStream(seed, f"accept2/d{distance:g}")
            samples = sample_rssi_batch(params, distance, n, rng)
            accs = []
            for low, high in ivs:
                row = accumulate_interval_stats(samples, RssiInterval(low, high))
                accs.append(row.accuracy)
            # one shared sample log per distance: narrowing the interval in
            # table order must never raise the accuracy
            assert accs[0] >= accs[1] >= accs[2], (seed, distance, accs)
            if distance == 8.0:
                widest_8m.append(accs[0])
    assert all(0.45 <= a <= 0.55 for a in widest_8m), widest_8m
    passed(2, f"monotone interval accuracy over 10 seeds; widest 8 m interval "
              f"in [{min(widest_8m):.1%}, {max(widest_8m):.1%}] (target 45-55%)",
           elapsed(), 10.0)


def test_criterion_3_estimator_exactness():
    elapsed = timed()
    rng = np.random.default_rng(20260808)
    count = 10_000
    rssi0 = rng.uniform(-60, 20, count)
    n = rng.uniform(1.5, 5.0, count)
    d0 = rng.uniform(0.5, 2.0, count)
    for d in (4.0, 8.0, 12.0, 16.0):
        rssi = rssi0 - 10 * n * np.log10(d / d0)
        est = d0 * 10 ** ((rssi0 - rssi) / (10 * n))
        worst = np.abs(est - d).max() / d
        assert worst < 1e-9, (d, worst)
    passed(3, "sigma=0 round trip below 1e-9 relative error for "
              "d in {4,8,12,16} m over 10^4 random channel params", elapsed(), 10.0)


def test_criterion_4_reconnect_liveness_and_oracle(tmp_path):
    elapsed = timed()
    base = scenario.parse_scenario(fixtures.RECONNECT)
    params = base.link
    dt = base.dt
    windows = {tuple(sorted(d.pair)): (int(round(d.start / dt)), int(round(d.end / dt)))
               for d in base.disruptions}
    total = 0
    for seed in range(5):
        for distance in (4.0, 8.0, 12.0):
            cfg = scenario.apply_sweep_value(base, "distance", distance)
            cfg.seed = seed
            report = scenario.run_experiment(cfg)
            runs = report.tables["runs"]
            assert report.status == "ok"
            assert all(r["recovered"] for r in runs)
            assert len(runs) == len(windows) * cfg.experiment.runs
            for r in runs:
                start, end = windows[tuple(sorted(r["pair"]))]
                disrupt, reconnect = reconnect_oracle(start, end, params)
                assert r["elapsed_s"] == (reconnect - disrupt) * dt, r
                total += 1
    # Table-1 shape: one distance per row, one column per device pair
    scenario.sweep(base, "distance", [4, 8, 12], out_dir=tmp_path)
    lines = (tmp_path / "reconnect_table.csv").read_text().splitlines()
    assert lines[0] == "distance_m,device_1_and_device_2_s,device_2_and_device_3_s"
    assert len(lines) == 4
    passed(4, f"{total} scripted disruptions over 5 seeds x 3 distances all "
              "recovered, elapsed equal to the message-schedule oracle; "
              "table shaped distance x pair columns", elapsed(), 5.0)


def test_criterion_5_separation_closed_loop():
    elapsed = timed()
    cfg = scenario.parse_scenario(fixtures.SEPARATION)
    w = scenario.build_world(cfg, collect_rssi=True)
    results = {}

    def track(world, now):
        if now == cfg.experiment.settle_ticks:
            results["distance_at_settle"] = world.distance(1, 2)

    w.metrics_hooks.append(track)
    w.run_ticks(cfg.ticks())
    d_final = w.distance(1, 2)
    assert 4.0 <= results["distance_at_settle"] <= 8.0
    assert 4.0 <= d_final <= 8.0
    late_events = [e for e in w.separation.events if e.tick >= cfg.experiment.settle_ticks]
    assert late_events == []

    # noise-free channel: the accuracy statistic is 100% >= 80% and the
    # report flags pass; with realistic noise the flag follows the
    # computed accuracy, reproducing the experiment's negative result
    clean = scenario.run_experiment(cfg)
    assert clean.metrics["meets_80pct_requirement"] == "pass"
    for rows in clean.tables["rows_by_device"].values():
        assert rows[0].accuracy == 1.0

    noisy = scenario.apply_sweep_value(cfg, "noise_sigma", 3.7)
    noisy_report = scenario.run_experiment(noisy)
    best = float(noisy_report.metrics["best_accuracy_pct"].replace(",", ".").rstrip("%"))
    want_flag = "pass" if best >= 80.0 else "fail"
    assert noisy_report.metrics["meets_80pct_requirement"] == want_flag
    passed(5, f"settled at {d_final:.2f} m within [4, 8] by tick 500 with zero "
              f"dead-band messages after; sigma=0 accuracy 100% flagged pass, "
              f"noisy accuracy {best:.2f}% flagged {want_flag}", elapsed(), 30.0)


def test_criterion_6_qlearning_matches_value_iteration():
    elapsed = timed()
    mdp = rate_energy_mdp(3, 3, gamma=0.5)
    q_star = value_iteration_oracle(mdp, tol=1e-10)
    residual = bellman_residual(mdp, q_star)
    assert residual < 1e-10
    for seed in range(10):
        q = QTable(3, 3, alpha=1.0, gamma=0.5, epsilon=0.2)
        rng = RngStream(seed, "qlearn-accept")
        s = 0
        for _ in range(50_000):
            st = LearnState(s // 3, s % 3)
            a = select_action(q, st, rng)
            s2 = int(mdp.next_state[s, a])
            visits = q.visits[st.rate_bucket, st.energy_bucket, a]
            q_update(q, st, a, float(mdp.rewards[s, a]),
                     LearnState(s2 // 3, s2 % 3), alpha=1.0 / (visits + 1))
            s = s2
        for s_i in range(mdp.n_states):
            rb, eb = divmod(s_i, 3)
            learned = effective_action(LearnAction(int(np.argmax(q.values[rb, eb]))), rb, 3)
            oracle = effective_action(LearnAction(int(np.argmax(q_star[s_i]))), rb, 3)
            assert learned == oracle, (seed, s_i, q.values[rb, eb], q_star[s_i])
    passed(6, f"greedy policy equals the value-iteration oracle on all 9 states "
              f"for 10/10 seeds after 50k steps; oracle residual {residual:.1e} < 1e-10",
           elapsed(), 30.0)


def _static_agreement(cfg, report):
    """Classification agreement inside the sensed region, excluding
    obstacles touched only by edge-band beams."""
    grid = report.tables["grid"]
    world = report.tables["world"]
    spec = cfg.laser
    u = cfg.uavs[0]
    pose = Pose(u.x, u.y, u.heading)
    scan = simulate_scan(world.env, pose, spec)
    bear = spec.bearings()
    ang = pose.theta + bear
    res = grid.resolution

    t = np.arange(0.0, spec.max_range + res / 2, res / 2)
    px = pose.x + np.outer(np.cos(ang), t)
    py = pose.y + np.outer(np.sin(ang), t)
    within = t[None, :] <= scan.ranges[:, None]
    ix, iy = grid.world_to_cell(px[within], py[within])
    ok = grid.in_bounds(ix, iy)
    sensed = np.zeros((grid.side, grid.side), bool)
    sensed[ix[ok], iy[ok]] = True

    hit = scan.hit_mask()
    end_x = pose.x + np.cos(ang) * scan.ranges
    end_y = pose.y + np.sin(ang) * scan.ranges
    edge_band = np.abs(np.abs(np.degrees(bear)) - spec.fov_deg / 2) <= 1.0
    edge_only = []
    for rect in world.env.obstacles:
        on = hit & (end_x >= rect.x0 - 1e-6) & (end_x <= rect.x1 + 1e-6) \
             & (end_y >= rect.y0 - 1e-6) & (end_y <= rect.y1 + 1e-6)
        if on.any() and bool(np.all(edge_band[on])):
            edge_only.append(rect)

    xs = (np.arange(grid.side) + 0.5) * res + grid.origin[0]
    ys = (np.arange(grid.side) + 0.5) * res + grid.origin[1]
    cx, cy = np.meshgrid(xs, ys, indexing="ij")
    truth = np.zeros((grid.side, grid.side), bool)
    for rect in world.env.obstacles:
        truth |= (cx >= rect.x0) & (cx <= rect.x1) & (cy >= rect.y0) & (cy <= rect.y1)
    excluded = np.zeros((grid.side, grid.side), bool)
    hw = cfg.experiment.slam.hole_width
    for rect in edge_only:
        excluded |= ((cx >= rect.x0 - hw) & (cx <= rect.x1 + hw)
                     & (cy >= rect.y0 - hw) & (cy <= rect.y1 + hw))

    mask = sensed & ~excluded
    agree = np.where(truth, grid.cells < UNKNOWN, grid.cells > UNKNOWN) & mask
    return agree.sum() / mask.sum(), edge_only


def test_criterion_7_slam_static(tmp_path):
    elapsed = timed()
    cfg = scenario.parse_scenario(fixtures.SLAM_STATIC)
    report = scenario.run_experiment(cfg, tmp_path)
    assert report.status == "ok"
    drift_cells = float(report.metrics["final_pose_error_cells"])
    assert drift_cells < 1.0
    agreement, edge_only = _static_agreement(cfg, report)
    assert agreement >= 0.90
    # the fixture plants one obstacle seen only by the edge beams; it may be
    # absent from the map without failing the agreement check
    assert len(edge_only) == 1
    assert (tmp_path / "map.pgm").exists()
    passed(7, f"pose drift {drift_cells:.2f} cells < 1; sensed-region agreement "
              f"{agreement:.1%} >= 90% with {len(edge_only)} edge-only obstacle excluded",
           elapsed(), 60.0)


def test_criterion_8_slam_moving_loop_closure():
    elapsed = timed()
    cfg = scenario.parse_scenario(fixtures.SLAM_MOVING)
    errors = []
    for seed in range(10):
        run_cfg = scenario.parse_scenario(fixtures.SLAM_MOVING)
        run_cfg.seed = seed
        report = scenario.run_experiment(run_cfg)
        assert report.metrics.get("laps_completed", 0) >= 1, seed
        errors.append(float(report.metrics["loop_closure_error_cells"]))
    good = sum(1 for e in errors if e < 5.0)
    assert good >= 8, errors
    passed(8, f"loop closure below 5 cells for {good}/10 seeds "
              f"(errors: {', '.join(f'{e:.1f}' for e in errors)} cells)",
           elapsed(), 120.0)


def test_criterion_9_global_determinism(tmp_path):
    elapsed = timed()
    compared = 0
    for name in ("reconnect", "rssi_accuracy", "slam_static"):
        cfg_text = fixtures.FIXTURES[name]
        paths = []
        for tag in ("a", "b"):
            out = tmp_path / name / tag
            scenario.run_experiment(scenario.parse_scenario(cfg_text), out)
            paths.append(out)
        files_a = sorted(p.name for p in paths[0].iterdir())
        files_b = sorted(p.name for p in paths[1].iterdir())
        assert files_a == files_b
        for fname in files_a:
            a = (paths[0] / fname).read_bytes()
            b = (paths[1] / fname).read_bytes()
            assert a == b, f"{name}/{fname} differs between repeats"
            compared += 1
    passed(9, f"{compared} report files byte-identical across repeated "
              "runs (CSV, PGM, PNG, summary)", elapsed(), 60.0)