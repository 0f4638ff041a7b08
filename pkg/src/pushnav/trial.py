"""Seeded trial execution, the three outcome metrics, batch aggregation.

One control tick runs the full pipeline:
scan -> obstacle layer -> escalation drain -> movable layer -> inflate/compose
-> progress checker -> (re)plan -> MPPI -> world step.

Baseline mode changes exactly one thing: the movable layer emits no overrides,
so every unmapped detection stays lethal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import checker as pc
from .grid import LETHAL, CostGrid, compose_layers, distance_transform
from .layers import (
    ClusterRegistry,
    EscalationEvent,
    Level,
    MovableLayerParams,
    apply_escalation,
    inflate,
    movable_layer_update,
    obstacle_layer_update,
)
from .planning import (
    DegenerateWeights,
    NoPath,
    Path,
    StartBlocked,
    local_window,
    mppi_step,
    plan_global,
    recovery_backup,
)
from .scenario import Scenario, make_world
from .world import simulate_lidar, step, wrap_angle


@dataclass
class EscalationRecord:
    time: float
    level: str
    cluster_id: int | None
    body_id: int | None


@dataclass
class TrialMetrics:
    scenario: str
    seed: int
    baseline_mode: bool
    success: bool
    nav_time: float
    final_levels: dict[int, str]  # body id -> final classification level
    movability_correct: bool
    escalation_log: list[EscalationRecord] = field(default_factory=list)


@dataclass
class BatchSummary:
    scenario: str
    n_trials: int
    success_rate: float  # percent, adaptive mode
    mean_time_adaptive: float | None  # over successful trials; None = impossible
    mean_time_baseline: float | None
    movability_accuracy: float  # percent of adaptive trials fully correct
    adaptive: list[TrialMetrics] = field(default_factory=list)
    baseline: list[TrialMetrics] = field(default_factory=list)


_EXPECTED_LEVEL = {"light": Level.LIGHT, "heavy": Level.HEAVY, "immovable": Level.LETHAL}


def _nearest_body(world, point: tuple[float, float], max_dist: float = 1.0) -> int | None:
    best, best_d = None, max_dist
    for body in world.bodies:
        d = math.hypot(body.center[0] - point[0], body.center[1] - point[1])
        if d < best_d:
            best, best_d = body.id, d
    return best


def _final_levels(world, registry: ClusterRegistry, meta) -> dict[int, Level]:
    """Associate each body with the highest remembered cluster level in reach.

    Max (not nearest) because grazing-angle scans can shatter one body into a
    fresh Light fragment sitting closer than the escalated cluster it belongs
    to; any escalated cluster within reach is interaction evidence.
    """
    levels = {}
    for body in world.bodies:
        reach = float(np.linalg.norm(body.half_extents)) + 0.5
        level = Level.LIGHT
        for cid in sorted(registry.clusters):
            c = registry.clusters[cid]
            if c.cells:
                d = min(
                    math.hypot(meta.origin[0] + (col + 0.5) * meta.resolution - body.center[0],
                               meta.origin[1] + (row + 0.5) * meta.resolution - body.center[1])
                    for col, row in c.cells
                )
            else:
                d = math.hypot(c.centroid[0] - body.center[0], c.centroid[1] - body.center[1])
            if d < reach:
                level = max(level, c.level)
        levels[body.id] = level
    return levels


def _movability_correct(world, levels: dict[int, Level]) -> bool:
    for body in world.bodies:
        got = levels[body.id]
        if body.touched:
            if got != _EXPECTED_LEVEL[body.body_class.value]:
                return False
        else:
            if got != Level.LIGHT:
                return False
    return True


def run_trial(scenario: Scenario, seed: int, baseline_mode: bool | None = None,
              frame_callback=None) -> TrialMetrics:
    """Execute one closed-loop trial; deterministic per (scenario, seed)."""
    cfg = scenario.config
    loop = cfg.loop
    if baseline_mode is None:
        baseline_mode = scenario.baseline_mode

    rng = np.random.default_rng(seed)
    world = make_world(scenario)
    static = scenario.static_map
    dfield = distance_transform(static)
    obstacle_grid = CostGrid(static.meta)
    registry = ClusterRegistry()
    checker_state = pc.CheckerState()
    event_queue: list[EscalationEvent] = []
    escalation_log: list[EscalationRecord] = []

    path: Path | None = None
    margin = cfg.robot.footprint_radius  # relaxed to 0 while escaping a wedge
    nominal = np.zeros((cfg.mppi.horizon, 2))
    next_replan = 0.0
    recovery_cmds: list[tuple[float, float]] = []
    no_path_since: float | None = None
    replan_requested = True

    last_cmd = (0.0, 0.0)
    last_measured = 0.0
    success = False
    positions: list[np.ndarray] = []
    stuck_ticks = int(round(loop.stuck_window / loop.dt))

    n_ticks = int(round(loop.timeout / loop.dt))
    for tick in range(n_ticks):
        now = world.time
        pose = (world.robot.x, world.robot.y, world.robot.theta)
        if loop.pose_noise_sigma_xy > 0.0 or loop.pose_noise_sigma_theta > 0.0:
            pose = (
                pose[0] + rng.normal(0.0, loop.pose_noise_sigma_xy),
                pose[1] + rng.normal(0.0, loop.pose_noise_sigma_xy),
                wrap_angle(pose[2] + rng.normal(0.0, loop.pose_noise_sigma_theta)),
            )

        # --- perception and layers ---
        scan = simulate_lidar(world, cfg.lidar, rng)
        obstacle_layer_update(scan, pose, obstacle_grid)
        for event in event_queue:
            cid = apply_escalation(registry, event, cfg.robot.footprint_radius, static.meta)
            target = registry.clusters[cid].centroid if cid is not None else None
            escalation_log.append(
                EscalationRecord(
                    time=event.time,
                    level=event.level.name.lower(),
                    cluster_id=cid,
                    body_id=_nearest_body(world, target) if target else None,
                )
            )
        event_queue.clear()

        mark_rows, mark_cols = np.nonzero(obstacle_grid.cells == LETHAL)
        marks = list(zip(mark_cols.tolist(), mark_rows.tolist()))
        overrides = movable_layer_update(marks, static, dfield, registry, cfg.movable, now)
        if baseline_mode:
            overrides = {}

        sources = np.maximum(static.cells, obstacle_grid.cells).astype(np.uint8)
        for (col, row), cost in overrides.items():
            if obstacle_grid.cells[row, col] == LETHAL and static.cells[row, col] != LETHAL:
                sources[row, col] = cost
        inflated = inflate(CostGrid(static.meta, sources), cfg.movable)
        master = compose_layers(static, obstacle_grid, overrides, inflated)

        # --- progress checker ---
        checker_state, event = pc.update(
            checker_state, cfg.checker, last_measured, last_cmd[0], last_cmd[1], now, pose
        )
        if event is not None:
            event_queue.append(event)
            replan_requested = True

        # --- planning ---
        if not recovery_cmds and (replan_requested or now >= next_replan or path is None):
            replan_requested = False
            next_replan = now + loop.replan_period
            try:
                try:
                    path = plan_global(master, (pose[0], pose[1]), scenario.goal,
                                       loop.planner_w_cost, cfg.robot.footprint_radius)
                    margin = cfg.robot.footprint_radius
                except StartBlocked:
                    # robot is closer to an obstacle than its footprint margin;
                    # relax the margin (for the controller too) rather than
                    # declaring failure, so it can maneuver out of the wedge
                    path = plan_global(master, (pose[0], pose[1]), scenario.goal,
                                       loop.planner_w_cost)
                    margin = 0.0
                no_path_since = None
            except (NoPath, StartBlocked):
                path = None
                if no_path_since is None:
                    no_path_since = now
                elif now - no_path_since >= loop.no_path_patience:
                    break  # persistently unreachable goal: fail the trial early

        # --- control ---
        if recovery_cmds:
            cmd = recovery_cmds.pop(0)
            if not recovery_cmds:
                replan_requested = True
        elif path is None:
            cmd = (0.0, 0.0)
        else:
            try:
                window = local_window(path, (pose[0], pose[1]), loop.mppi_lookahead)
                cmd, nominal = mppi_step(world.robot, nominal, window, master, cfg.mppi, rng,
                                         margin)
            except DegenerateWeights:
                recovery_cmds = recovery_backup(
                    world.robot, loop.recovery_duration, loop.dt, loop.recovery_speed
                )
                nominal = np.zeros((cfg.mppi.horizon, 2))
                cmd = recovery_cmds.pop(0)

        if frame_callback is not None:
            frame_callback(tick, world, master, path, registry)

        # --- world step ---
        before = world.robot.pos
        step(world, cmd, loop.dt)
        last_measured = float(np.linalg.norm(world.robot.pos - before)) / loop.dt
        last_cmd = cmd

        if math.hypot(world.robot.x - scenario.goal[0], world.robot.y - scenario.goal[1]) <= loop.goal_tolerance:
            success = True
            break
        positions.append(world.robot.pos)
        if (
            len(positions) > stuck_ticks
            and float(np.linalg.norm(world.robot.pos - positions[-stuck_ticks - 1])) < loop.stuck_displacement
        ):
            break  # wedged with no net progress: fail early

    levels = _final_levels(world, registry, static.meta)
    return TrialMetrics(
        scenario=scenario.name,
        seed=seed,
        baseline_mode=baseline_mode,
        success=success,
        nav_time=round(world.time, 6),
        final_levels={bid: lvl.name.lower() for bid, lvl in levels.items()},
        movability_correct=_movability_correct(world, levels),
        escalation_log=escalation_log,
    )


def run_batch(scenario: Scenario, n_trials: int, seed0: int = 0) -> BatchSummary:
    """Run adaptive and baseline trials with seeds seed0 .. seed0 + n - 1."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    adaptive = [run_trial(scenario, seed0 + i, baseline_mode=False) for i in range(n_trials)]
    baseline = [run_trial(scenario, seed0 + i, baseline_mode=True) for i in range(n_trials)]

    def mean_time(trials):
        times = [t.nav_time for t in trials if t.success]
        return round(sum(times) / len(times), 6) if times else None

    successes = sum(t.success for t in adaptive)
    correct = sum(t.movability_correct for t in adaptive)
    return BatchSummary(
        scenario=scenario.name,
        n_trials=n_trials,
        success_rate=100.0 * successes / n_trials,
        mean_time_adaptive=mean_time(adaptive),
        mean_time_baseline=mean_time(baseline),
        movability_accuracy=100.0 * correct / n_trials,
        adaptive=adaptive,
        baseline=baseline,
    )


def summary_csv_row(summary: BatchSummary) -> str:
    def fmt(t):
        return "impossible" if t is None else f"{t:.2f}"

    return (
        f"{summary.scenario},{summary.n_trials},{summary.success_rate:.1f},"
        f"{fmt(summary.mean_time_adaptive)},{fmt(summary.mean_time_baseline)},"
        f"{summary.movability_accuracy:.1f}"
    )


CSV_HEADER = "scenario,n_trials,success_rate_pct,mean_time_adaptive_s,mean_time_baseline_s,movability_accuracy_pct"
