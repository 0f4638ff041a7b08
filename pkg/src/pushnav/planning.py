"""Global cost-weighted grid planner and a sampling-based MPPI local controller.

The global planner is Dijkstra over the 8-connected grid with edge weight
step_length * (1 + w_cost * cell_cost / 254); LETHAL and UNKNOWN cells are
untraversable. With the shipped w_cost the planner detours around obstacles
whenever a collision-free route is cheap enough and routes through reduced-cost
(pushable) cells only when the detour is worse.

The MPPI controller samples Gaussian-perturbed control sequences around a
nominal, rolls them out with unicycle kinematics (negative linear velocity is
allowed, enabling backward maneuvers), scores them, and softmin-averages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as csgraph_dijkstra
from scipy.spatial import cKDTree

from .grid import LETHAL, CostGrid, OutOfBounds, world_to_cell

LETHAL_ROLLOUT_PENALTY = 1e6


class PlanningError(Exception):
    pass


class NoPath(PlanningError):
    """Goal unreachable on the current master grid."""


class StartBlocked(PlanningError):
    """Start cell is LETHAL (or outside the grid)."""


class DegenerateWeights(PlanningError):
    """Every MPPI rollout hit a lethal cell; caller should run recovery."""


@dataclass
class Path:
    waypoints: np.ndarray  # (N, 2) world meters, consecutive cells are 8-neighbors
    total_cost: float
    _tree: cKDTree | None = field(default=None, repr=False, compare=False)

    @property
    def goal(self) -> np.ndarray:
        return self.waypoints[-1]

    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.waypoints)
        return self._tree


@dataclass
class MppiParams:
    horizon: int = 30
    dt: float = 0.1
    n_samples: int = 256
    sigma_v: float = 0.2
    sigma_omega: float = 0.4
    temperature: float = 0.1
    w_path: float = 2.0
    w_cost: float = 3.0
    w_goal: float = 5.0
    w_control: float = 0.1

    def __post_init__(self):
        if self.n_samples < 64:
            raise ValueError("n_samples must be at least 64")
        for name in ("horizon", "dt", "sigma_v", "sigma_omega", "temperature",
                     "w_path", "w_cost", "w_goal", "w_control"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def footprint_blocked(master: CostGrid, inscribed_radius: float) -> np.ndarray:
    """Cells untraversable by the robot center: LETHAL/UNKNOWN cells plus, when
    inscribed_radius > 0, any cell whose center lies closer than that radius to
    a LETHAL cell (the robot footprint would overlap the obstacle there)."""
    blocked = master.cells >= LETHAL
    if inscribed_radius > 0.0 and blocked.any():
        lethal = master.cells == LETHAL
        if lethal.any():
            d = distance_transform_edt(~lethal) * master.meta.resolution
            blocked = blocked | (d < inscribed_radius)
    return blocked


def _grid_graph(master: CostGrid, w_cost: float, blocked: np.ndarray) -> csr_matrix:
    h, w = master.cells.shape
    cost = master.cells.astype(np.float64)
    res = master.meta.resolution

    rows_out, cols_out, weights = [], [], []
    idx = np.arange(h * w).reshape(h, w)
    for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
        if dc >= 0:
            src = idx[: h - dr, : w - dc]
            dst = idx[dr:, dc:]
            ok = ~blocked[: h - dr, : w - dc] & ~blocked[dr:, dc:]
            c_src = cost[: h - dr, : w - dc]
            c_dst = cost[dr:, dc:]
        else:
            src = idx[: h - dr, -dc:]
            dst = idx[dr:, :dc]
            ok = ~blocked[: h - dr, -dc:] & ~blocked[dr:, :dc]
            c_src = cost[: h - dr, -dc:]
            c_dst = cost[dr:, :dc]
        step = res * math.sqrt(2.0) if dr and dc else res
        # directed both ways; the weight uses the cost of the cell being entered
        rows_out.append(src[ok])
        cols_out.append(dst[ok])
        weights.append(step * (1.0 + w_cost * c_dst[ok] / 254.0))
        rows_out.append(dst[ok])
        cols_out.append(src[ok])
        weights.append(step * (1.0 + w_cost * c_src[ok] / 254.0))

    return csr_matrix(
        (np.concatenate(weights), (np.concatenate(rows_out), np.concatenate(cols_out))),
        shape=(h * w, h * w),
    )


def plan_global(master: CostGrid, start: tuple[float, float], goal: tuple[float, float],
                w_cost: float = 8.0, inscribed_radius: float = 0.0) -> Path:
    """Minimum-weight 8-connected grid path from start to goal (world points).

    Raises StartBlocked when the start cell is untraversable, NoPath when the
    goal is unreachable. ``inscribed_radius`` > 0 additionally blocks cells the
    robot footprint could not occupy (see footprint_blocked).
    """
    meta = master.meta
    blocked = footprint_blocked(master, inscribed_radius)
    try:
        s_col, s_row = world_to_cell(start, meta)
    except OutOfBounds as e:
        raise StartBlocked(str(e)) from e
    try:
        g_col, g_row = world_to_cell(goal, meta)
    except OutOfBounds as e:
        raise NoPath(str(e)) from e
    if blocked[s_row, s_col]:
        raise StartBlocked(f"start cell ({s_col}, {s_row}) is blocked")
    if blocked[g_row, g_col]:
        raise NoPath(f"goal cell ({g_col}, {g_row}) is blocked")

    s_idx = s_row * meta.width + s_col
    g_idx = g_row * meta.width + g_col
    if s_idx == g_idx:
        return Path(np.array([meta.cell_center(s_col, s_row)]), 0.0)

    graph = _grid_graph(master, w_cost, blocked)
    dist, pred = csgraph_dijkstra(graph, directed=True, indices=s_idx, return_predecessors=True)
    if not np.isfinite(dist[g_idx]):
        raise NoPath("goal unreachable")

    chain = [g_idx]
    while chain[-1] != s_idx:
        chain.append(int(pred[chain[-1]]))
    chain.reverse()
    waypoints = np.array([meta.cell_center(i % meta.width, i // meta.width) for i in chain])
    return Path(waypoints, float(dist[g_idx]))


def local_window(path: Path, pos: tuple[float, float], lookahead: float) -> Path:
    """Truncate a path to the segment from the waypoint nearest ``pos`` up to
    ``lookahead`` meters of arc length ahead. Feeding the local window to the
    MPPI controller turns its terminal goal term into a carrot on the path,
    which keeps progress incentives sane when the final goal is Euclidean-close
    but blocked (e.g. on the far side of a wall)."""
    if lookahead <= 0.0:
        raise ValueError("lookahead must be positive")
    wp = path.waypoints
    if len(wp) < 3:
        return path
    _, start = path.tree().query(np.asarray(pos, dtype=float))
    start = min(int(start), len(wp) - 2)
    seg = np.linalg.norm(np.diff(wp[start:], axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    end = start + int(np.searchsorted(arc, lookahead)) + 1
    return Path(wp[start : max(end, start + 2)], path.total_cost)


def _unicycle_rollout(x0, y0, th0, controls: np.ndarray, dt: float) -> np.ndarray:
    """Integrate (K, H, 2) control sequences; returns poses of shape (K, H, 3)."""
    k, h, _ = controls.shape
    poses = np.empty((k, h, 3))
    x = np.full(k, x0)
    y = np.full(k, y0)
    th = np.full(k, th0)
    for t in range(h):
        th = th + controls[:, t, 1] * dt
        x = x + controls[:, t, 0] * np.cos(th) * dt
        y = y + controls[:, t, 0] * np.sin(th) * dt
        poses[:, t, 0] = x
        poses[:, t, 1] = y
        poses[:, t, 2] = th
    return poses


def _cell_costs(master: CostGrid, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Cost values at world points; out-of-grid points count as lethal."""
    meta = master.meta
    cols = np.floor((xs - meta.origin[0]) / meta.resolution).astype(np.int64)
    rows = np.floor((ys - meta.origin[1]) / meta.resolution).astype(np.int64)
    inside = (cols >= 0) & (cols < meta.width) & (rows >= 0) & (rows < meta.height)
    out = np.full(xs.shape, float(LETHAL))
    out[inside] = master.cells[rows[inside], cols[inside]]
    return out


def _batch_costs(poses: np.ndarray, controls: np.ndarray, path: Path, master: CostGrid,
                 params: MppiParams, blocked: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Rollout costs for (K, H, 3) poses; returns (costs, hit-lethal flags)."""
    k, h, _ = poses.shape
    xs = poses[:, :, 0]
    ys = poses[:, :, 1]
    d_path, _ = path.tree().query(poses[:, :, :2].reshape(-1, 2))
    d_path = d_path.reshape(k, h)
    cell = _cell_costs(master, xs, ys)
    lethal = cell >= LETHAL
    if blocked is not None:
        meta = master.meta
        cols = np.floor((xs - meta.origin[0]) / meta.resolution).astype(np.int64)
        rows = np.floor((ys - meta.origin[1]) / meta.resolution).astype(np.int64)
        inside = (cols >= 0) & (cols < meta.width) & (rows >= 0) & (rows < meta.height)
        extra = ~inside
        extra[inside] = blocked[rows[inside], cols[inside]]
        lethal = lethal | extra
    stage = (
        params.w_path * d_path**2
        + params.w_cost * cell / 254.0
        + params.w_control * (controls[:, :, 0] ** 2 + controls[:, :, 1] ** 2)
        + LETHAL_ROLLOUT_PENALTY * lethal
    )
    goal = path.goal
    d_goal2 = (xs[:, -1] - goal[0]) ** 2 + (ys[:, -1] - goal[1]) ** 2
    total = stage.sum(axis=1) + params.w_goal * d_goal2
    return total, lethal.any(axis=1)


def rollout_cost(trajectory: np.ndarray, path: Path, master: CostGrid, params: MppiParams,
                 controls: np.ndarray | None = None) -> float:
    """Stage cost of a single pose trajectory (T, >=2): squared distance to the
    nearest path point, normalized cell cost, squared control effort, plus a
    terminal squared-distance-to-goal term. Any step on a LETHAL (or unknown,
    or out-of-grid) cell adds a large finite penalty."""
    traj = np.asarray(trajectory, dtype=float)
    if controls is None:
        controls = np.zeros((len(traj), 2))
    poses = traj[None, :, :2]
    padded = np.concatenate([poses, np.zeros((1, len(traj), 1))], axis=2)
    total, _ = _batch_costs(padded, np.asarray(controls, dtype=float)[None, :, :], path, master, params)
    return float(total[0])


def mppi_step(
    robot,
    nominal: np.ndarray,
    path: Path,
    master: CostGrid,
    params: MppiParams,
    rng: np.random.Generator,
    inscribed_radius: float = 0.0,
) -> tuple[tuple[float, float], np.ndarray]:
    """One MPPI control step; returns ((v, omega), shifted nominal sequence).

    ``inscribed_radius`` > 0 treats cells too close to LETHAL for the robot
    footprint as lethal during scoring (same rule as plan_global).
    Raises DegenerateWeights when every sampled rollout touches a lethal cell.
    """
    blocked = footprint_blocked(master, inscribed_radius) if inscribed_radius > 0.0 else None
    noise = rng.normal(0.0, 1.0, (params.n_samples, params.horizon, 2))
    noise[:, :, 0] *= params.sigma_v
    noise[:, :, 1] *= params.sigma_omega
    controls = nominal[None, :, :] + noise
    controls[:, :, 0] = np.clip(controls[:, :, 0], -robot.v_max, robot.v_max)
    controls[:, :, 1] = np.clip(controls[:, :, 1], -robot.omega_max, robot.omega_max)

    poses = _unicycle_rollout(robot.x, robot.y, robot.theta, controls, params.dt)
    costs, hit_lethal = _batch_costs(poses, controls, path, master, params, blocked)
    if hit_lethal.all():
        raise DegenerateWeights("all rollouts hit lethal cells")

    costs = costs - costs.min()
    weights = np.exp(-costs / params.temperature)
    weights /= weights.sum()
    averaged = np.einsum("k,khc->hc", weights, controls)

    cmd = (float(averaged[0, 0]), float(averaged[0, 1]))
    shifted = np.vstack([averaged[1:], averaged[-1:]])
    return cmd, shifted


def recovery_backup(robot, duration: float = 1.5, dt: float = 0.1,
                    speed: float = -0.3) -> list[tuple[float, float]]:
    """Constant reverse command sequence; the caller replans after executing it."""
    n = int(round(duration / dt))
    return [(speed, 0.0)] * n
