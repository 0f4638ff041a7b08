"""Acceptance gate: the eight shipped behavioral criteria.

Each criterion prints one PASS/FAIL line (bypassing pytest capture so the
verdicts always appear in the run log) and asserts the same condition.
Batches are computed once per session and shared across criteria.
"""

from __future__ import annotations

import sys
import time

import pytest

import test_checker
import test_oracles
import test_planning
from pushnav.cli import main as cli_main
from pushnav.layers import Level
from pushnav.scenario import load_scenario
from pushnav.trial import run_batch, run_trial

N_TRIALS = 20
SEED0 = 0

VERDICTS: list[str] = []  # echoed at the end of the run by conftest


def report(criterion: int, ok: bool, detail: str) -> None:
    verdict = "PASS" if ok else "FAIL"
    line = f"ACCEPTANCE CRITERION {criterion}: {verdict} — {detail}"
    VERDICTS.append(line)
    print(line, file=sys.__stdout__)
    sys.__stdout__.flush()


@pytest.fixture(scope="session")
def batches():
    out = {}
    for name in ("1-a", "1-b", "1-c", "2-a", "2-b", "2-c", "3"):
        t0 = time.perf_counter()
        out[name] = run_batch(load_scenario(name), N_TRIALS, SEED0)
        out[name + "/wall"] = time.perf_counter() - t0
    return out


def test_criterion_1_light_obstacle_faster_than_baseline(batches):
    b = batches["1-a"]
    ratio = b.mean_time_adaptive / b.mean_time_baseline
    wall = batches["1-a/wall"]
    ok = (
        b.success_rate == 100.0
        and ratio < 0.9
        and b.movability_accuracy == 100.0
        and wall < 60.0
    )
    report(1, ok, f"success={b.success_rate:.0f}%, time ratio={ratio:.2f} (<0.9), "
                  f"movability={b.movability_accuracy:.0f}%, batch wall time={wall:.1f}s (<60s)")
    assert ok


def test_criterion_2_immovable_obstacle_slower_with_escalation(batches):
    b = batches["1-c"]
    ratio = b.mean_time_adaptive / b.mean_time_baseline
    escalated = all(
        any(e.level == "heavy" and e.body_id == 0 for e in t.escalation_log)
        and any(e.level == "lethal" and e.body_id == 0 for e in t.escalation_log)
        for t in b.adaptive
        if t.success
    )
    ok = b.success_rate >= 85.0 and ratio > 1.1 and escalated
    report(2, ok, f"success={b.success_rate:.0f}% (>=85%), time ratio={ratio:.2f} (>1.1), "
                  f"Heavy->Lethal on center body in every successful trial={escalated}")
    assert ok


def test_criterion_3_corridor_scenarios_blocked_for_baseline(batches):
    details = []
    ok = True
    for name in ("2-a", "2-b", "2-c", "3"):
        b = batches[name]
        baseline_successes = sum(t.success for t in b.baseline)
        ok &= baseline_successes == 0 and b.success_rate >= 95.0
        details.append(f"{name}: adaptive {b.success_rate:.0f}%, baseline {baseline_successes}/{N_TRIALS}")
    report(3, ok, "; ".join(details))
    assert ok


def test_criterion_4_light_classified_more_accurately_than_heavy(batches):
    acc_light = (batches["1-a"].movability_accuracy + batches["2-a"].movability_accuracy) / 2
    acc_heavy = (batches["1-b"].movability_accuracy + batches["2-b"].movability_accuracy) / 2
    ok = acc_light > acc_heavy
    report(4, ok, f"accuracy(light scenarios)={acc_light:.1f}% > accuracy(heavy scenarios)={acc_heavy:.1f}%")
    assert ok


def test_criterion_5_oracle_equivalence_suites():
    suites = [
        ("distance transform vs brute force", test_oracles.test_distance_transform_matches_brute_force),
        ("plan_global vs Dijkstra oracle", test_oracles.test_plan_global_matches_dijkstra_oracle),
        ("label_clusters vs flood fill", test_oracles.test_label_clusters_matches_flood_fill),
        ("inflate vs closed form", test_oracles.test_inflate_matches_closed_form),
        ("lidar vs segment oracle", test_oracles.test_lidar_matches_segment_oracle),
    ]
    failed = []
    for name, fn in suites:
        try:
            fn()
        except AssertionError:
            failed.append(name)
    ok = not failed
    report(5, ok, f"5 suites x {test_oracles.N_CASES} randomized cases"
                  + (f"; failed: {failed}" if failed else ", all matched"))
    assert ok, failed


def test_criterion_6_progress_checker_state_machine():
    checks = [
        test_checker.TestSettling().test_never_triggers_during_settling,
        test_checker.TestSettling().test_obstruction_spanning_settling_boundary_triggers_after,
        test_checker.TestFreezeWindow().test_heavy_at_freeze_window_within_one_tick,
        test_checker.TestFreezeWindow().test_intermittent_slowdown_resets_window,
        test_checker.TestCooldownAndOrdering().test_no_two_events_within_cooldown,
        test_checker.TestRotationExemption().test_in_place_turn_exempt,
        test_checker.TestRotationExemption().test_low_cmd_v_exemption_property,
        test_checker.TestCooldownAndOrdering().test_heavy_then_lethal_on_full_stall,
        test_checker.TestCooldownAndOrdering().test_lethal_never_first_in_episode,
    ]
    failed = []
    for fn in checks:
        try:
            fn()
        except AssertionError:
            failed.append(fn.__name__)
    ok = not failed
    report(6, ok, "settling, freeze-window timing, cooldown, rotation exemption, "
                  "Heavy-before-Lethal" + (f"; failed: {failed}" if failed else " — all hold"))
    assert ok, failed


def test_criterion_7_monotonicity_properties():
    # (a) cluster levels nondecreasing over full trials
    order = {Level.LIGHT: 0, Level.HEAVY: 1, Level.LETHAL: 2}
    violations = []

    def make_cb(history):
        def cb(tick, world, master, path, registry):
            for cid, cluster in registry.clusters.items():
                rank = order[cluster.level]
                if rank < history.get(cid, 0):
                    violations.append(cid)
                history[cid] = rank
        return cb

    for name, seed in (("1-c", 0), ("2-c", 0), ("3", 0)):
        run_trial(load_scenario(name), seed, frame_callback=make_cb({}))
    levels_ok = not violations

    # (b) raising any cell cost never decreases global path weight (500 cases)
    try:
        test_planning.TestPlanGlobal().test_cost_monotonicity_500_perturbations()
        weight_ok = True
    except AssertionError:
        weight_ok = False

    ok = levels_ok and weight_ok
    report(7, ok, f"cluster levels nondecreasing over 3 trials={levels_ok}; "
                  f"path weight nondecreasing over 500 perturbations={weight_ok}")
    assert ok


def test_criterion_8_byte_identical_outputs(tmp_path):
    outs = []
    for run in ("first", "second"):
        d = tmp_path / run
        frames = d / "frames"
        csv = d / "results.csv"
        d.mkdir()
        cli_main(["run", "--scenario", "1-a", "--seed", "7",
                  "--export-frames", str(frames), "--frame-every", "25"])
        cli_main(["bench", "--scenarios", "1-a,2-a", "--trials", "2",
                  "--out", str(csv)])
        frame_bytes = [p.read_bytes() for p in sorted(frames.glob("*.png"))]
        outs.append((frame_bytes, csv.read_bytes()))
    ok = outs[0] == outs[1] and len(outs[0][0]) > 2
    report(8, ok, f"{len(outs[0][0])} PNG frames and CSV byte-identical across two runs={outs[0] == outs[1]}")
    assert ok
