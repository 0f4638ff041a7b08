"""Ground-truth 2D world: unicycle robot, quasi-static push contact, planar LiDAR.

Push dynamics are deliberately quasi-static: while the robot pushes a body, both
move at ``push_gain(class) * commanded_speed`` along the robot's motion
direction. Bodies translate only. A body jammed against a wall or another body
behaves as immovable for that step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .grid import LETHAL, CostGrid

PUSH_CONE_DEG = 45.0  # contact normal must be within this of the motion direction


class BodyClass(Enum):
    LIGHT = "light"
    HEAVY = "heavy"
    IMMOVABLE = "immovable"

    @property
    def push_gain(self) -> float:
        return {"light": 0.85, "heavy": 0.25, "immovable": 0.0}[self.value]


@dataclass
class MovableBody:
    """Axis-aligned rectangular body with a ground-truth movability class."""

    id: int
    center: np.ndarray  # world meters, shape (2,)
    half_extents: np.ndarray  # meters, shape (2,)
    body_class: BodyClass
    touched: bool = False

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.half_extents = np.asarray(self.half_extents, dtype=float)
        if (self.half_extents <= 0).any():
            raise ValueError(f"body {self.id}: half extents must be positive")

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.half_extents

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.half_extents


@dataclass
class RobotState:
    x: float
    y: float
    theta: float
    v: float = 0.0
    omega: float = 0.0
    footprint_radius: float = 0.3
    v_max: float = 1.0
    omega_max: float = 1.5

    @property
    def pos(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def heading(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta)])


@dataclass
class ScanParams:
    n_rays: int = 360
    fov: float = 2.0 * math.pi
    max_range: float = 5.0
    range_noise_sigma: float = 0.0


@dataclass
class Scan:
    """LiDAR ranges in the robot frame; angles are offsets from the heading."""

    angles: np.ndarray
    ranges: np.ndarray
    max_range: float


def wrap_angle(theta: float) -> float:
    """Normalize to (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


def _wall_boxes(static_map: CostGrid) -> tuple[np.ndarray, np.ndarray]:
    """AABBs (lo, hi) covering all LETHAL cells in the static map.

    Horizontal runs of adjacent lethal cells are merged into single boxes; the
    union of boxes is exactly the union of lethal cells, so raycasts against
    the merged set are identical to raycasts against per-cell boxes.
    """
    res = static_map.meta.resolution
    ox, oy = static_map.meta.origin
    wall = static_map.cells == LETHAL
    padded = np.zeros((wall.shape[0], wall.shape[1] + 2), dtype=bool)
    padded[:, 1:-1] = wall
    diff = np.diff(padded.astype(np.int8), axis=1)
    run_rows, starts = np.nonzero(diff == 1)
    _, ends = np.nonzero(diff == -1)  # same row order as starts

    # stack identical runs from consecutive rows into single rectangles
    by_row: dict[int, set[tuple[int, int]]] = {}
    for row, s, e in zip(run_rows.tolist(), starts.tolist(), ends.tolist()):
        by_row.setdefault(row, set()).add((s, e))
    open_runs: dict[tuple[int, int], int] = {}  # (start, end) -> first row
    rects = []
    prev_row: int | None = None
    for row in sorted(by_row):
        current = by_row[row]
        for key in list(open_runs):
            if key not in current or prev_row is None or row != prev_row + 1:
                rects.append((*key, open_runs.pop(key), prev_row + 1))
        for key in current:
            open_runs.setdefault(key, row)
        prev_row = row
    for key, first in open_runs.items():
        rects.append((*key, first, prev_row + 1))

    if not rects:
        return np.zeros((0, 2)), np.zeros((0, 2))
    arr = np.array(rects, dtype=float)  # columns: col_start, col_end, row_start, row_end
    lo = np.stack([ox + arr[:, 0] * res, oy + arr[:, 2] * res], axis=1)
    hi = np.stack([ox + arr[:, 1] * res, oy + arr[:, 3] * res], axis=1)
    return lo, hi


@dataclass
class WorldState:
    static_map: CostGrid
    bodies: list[MovableBody]
    robot: RobotState
    time: float = 0.0
    _wall_lo: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    _wall_hi: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        if self._wall_lo is None:
            self._wall_lo, self._wall_hi = _wall_boxes(self.static_map)

    def body_by_id(self, body_id: int) -> MovableBody:
        for b in self.bodies:
            if b.id == body_id:
                return b
        raise KeyError(body_id)


def _circle_overlaps_boxes(center: np.ndarray, radius: float, lo: np.ndarray, hi: np.ndarray) -> bool:
    if len(lo) == 0:
        return False
    closest = np.clip(center, lo, hi)
    d2 = ((closest - center) ** 2).sum(axis=1)
    return bool((d2 < radius * radius - 1e-12).any())


def _circle_box_penetration(center: np.ndarray, radius: float, body: MovableBody) -> float:
    closest = np.clip(center, body.lo, body.hi)
    return radius - float(np.linalg.norm(closest - center))


def _box_overlaps_walls(lo: np.ndarray, hi: np.ndarray, world: WorldState) -> bool:
    if len(world._wall_lo) == 0:
        return False
    eps = 1e-9  # touching is not a jam
    sep = (hi <= world._wall_lo + eps) | (lo >= world._wall_hi - eps)
    return bool((~sep.any(axis=1)).any())


def _box_overlaps_bodies(lo: np.ndarray, hi: np.ndarray, world: WorldState, skip_id: int) -> bool:
    eps = 1e-9
    for other in world.bodies:
        if other.id == skip_id:
            continue
        if (hi > other.lo + eps).all() and (lo < other.hi - eps).all():
            return True
    return False


def resolve_push(robot: RobotState, body: MovableBody, v_cmd: float) -> tuple[float, float]:
    """Quasi-static push coupling: both robot and body move at gain * v_cmd."""
    v = body.body_class.push_gain * v_cmd
    return v, v


def step(world: WorldState, cmd: tuple[float, float], dt: float) -> WorldState:
    """Advance the world by dt under a (v, omega) command.

    Unicycle kinematics; pushing engages only when the contact normal is within
    45 degrees of the motion direction, otherwise contact blocks the robot.
    Mutates ``world`` in place and returns it; the achieved linear speed is
    recorded in ``world.robot.v``.
    """
    robot = world.robot
    v_cmd = float(np.clip(cmd[0], -robot.v_max, robot.v_max))
    w_cmd = float(np.clip(cmd[1], -robot.omega_max, robot.omega_max))
    dt = float(np.clip(dt, 1e-6, 0.1))

    robot.theta = wrap_angle(robot.theta + w_cmd * dt)
    achieved = 0.0
    if abs(v_cmd) > 1e-12:
        achieved = _translate(world, v_cmd, dt)

    robot.v = achieved
    robot.omega = w_cmd
    world.time += dt
    return world


def _free_fraction(world: WorldState, pos: np.ndarray, delta: np.ndarray, body: MovableBody) -> float:
    """Largest t in [0,1] with the robot circle at pos + t*delta clear of body."""
    r = world.robot.footprint_radius
    lo_t, hi_t = 0.0, 1.0
    for _ in range(20):
        mid = 0.5 * (lo_t + hi_t)
        if _circle_box_penetration(pos + mid * delta, r, body) > 0.0:
            hi_t = mid
        else:
            lo_t = mid
    return lo_t


def _finish_slide(world: WorldState, at_contact: np.ndarray, remaining: np.ndarray,
                  normal: np.ndarray, base_speed: float, dt: float) -> float:
    """Blocked contact: drop the into-surface motion component, keep the
    tangential one if it is collision free. The body never moves here; only
    the robot may slide along the face it is touching."""
    robot = world.robot
    r = robot.footprint_radius
    into = float(np.dot(remaining, normal))
    slide = remaining - min(into, 0.0) * normal
    target = at_contact + slide
    ok = float(np.linalg.norm(slide)) > 1e-12 and not _circle_overlaps_boxes(
        target, r, world._wall_lo, world._wall_hi
    )
    if ok:
        for body in world.bodies:
            if _circle_box_penetration(target, r, body) > 1e-7:
                ok = False
                break
    if not ok:
        robot.x, robot.y = at_contact
        return base_speed
    robot.x, robot.y = target
    return base_speed + float(np.linalg.norm(slide)) / dt


def _translate(world: WorldState, v_cmd: float, dt: float) -> float:
    robot = world.robot
    r = robot.footprint_radius
    pos = robot.pos
    delta = robot.heading * v_cmd * dt
    motion_dir = robot.heading * math.copysign(1.0, v_cmd)
    target = pos + delta

    if _circle_overlaps_boxes(target, r, world._wall_lo, world._wall_hi):
        # walls are axis-aligned: try sliding along one axis of the motion
        for proj in (np.array([delta[0], 0.0]), np.array([0.0, delta[1]])):
            slid = pos + proj
            if (
                float(np.linalg.norm(proj)) > 1e-12
                and not _circle_overlaps_boxes(slid, r, world._wall_lo, world._wall_hi)
                and not any(_circle_box_penetration(slid, r, b) > 1e-7 for b in world.bodies)
            ):
                robot.x, robot.y = slid
                return float(np.linalg.norm(proj)) / dt
        return 0.0

    # deepest-penetrating body at the target position, if any
    contact = None
    worst = 0.0
    for body in world.bodies:
        pen = _circle_box_penetration(target, r, body)
        if pen > worst + 1e-12:
            worst, contact = pen, body
    if contact is None:
        robot.x, robot.y = target
        return abs(v_cmd)

    contact.touched = True
    # advance freely up to contact, then push the remainder; an already-touching
    # robot gets t_free=0 so the push coupling v_achieved = gain * v_cmd is exact
    if _circle_box_penetration(pos, r, contact) >= -1e-5:
        t_free = 0.0
    else:
        t_free = _free_fraction(world, pos, delta, contact)
    at_contact = pos + t_free * delta
    closest = np.clip(at_contact, contact.lo, contact.hi)
    normal = at_contact - closest  # from box surface toward the robot
    n_norm = float(np.linalg.norm(normal))
    if n_norm < 1e-9:
        return 0.0
    normal /= n_norm
    aligned = float(np.dot(motion_dir, -normal)) >= math.cos(math.radians(PUSH_CONE_DEG))

    if not aligned:
        # oblique contact never pushes; the into-surface motion component is
        # blocked but the robot may still slide along the face
        return _finish_slide(world, at_contact, delta * (1.0 - t_free), normal,
                             abs(v_cmd) * t_free, dt)

    gain = contact.body_class.push_gain
    if gain == 0.0:
        robot.x, robot.y = at_contact
        return abs(v_cmd) * t_free

    push_delta = delta * (1.0 - t_free) * gain
    new_lo = contact.lo + push_delta
    new_hi = contact.hi + push_delta
    if _box_overlaps_walls(new_lo, new_hi, world) or _box_overlaps_bodies(
        new_lo, new_hi, world, contact.id
    ):
        # jammed: behaves as immovable for this step
        robot.x, robot.y = at_contact
        return abs(v_cmd) * t_free

    new_robot = at_contact + push_delta
    if _circle_overlaps_boxes(new_robot, r, world._wall_lo, world._wall_hi):
        robot.x, robot.y = at_contact
        return abs(v_cmd) * t_free

    contact.center = contact.center + push_delta
    robot.x, robot.y = new_robot
    return abs(v_cmd) * (t_free + gain * (1.0 - t_free))


def simulate_lidar(world: WorldState, params: ScanParams, rng: np.random.Generator) -> Scan:
    """Exact planar raycast against wall cells and body rectangles, plus range noise.

    Rays are evenly spaced over the field of view starting at -fov/2 (the last
    ray stops short of +fov/2 so a full circle has no duplicate ray). No-hit
    rays report exactly max_range.
    """
    robot = world.robot
    angles = -params.fov / 2.0 + params.fov * np.arange(params.n_rays) / params.n_rays
    world_angles = robot.theta + angles
    dirs = np.stack([np.cos(world_angles), np.sin(world_angles)], axis=1)

    lo = world._wall_lo
    hi = world._wall_hi
    if world.bodies:
        lo = np.concatenate([lo] + [b.lo[None, :] for b in world.bodies])
        hi = np.concatenate([hi] + [b.hi[None, :] for b in world.bodies])

    ranges = np.full(params.n_rays, params.max_range)
    if len(lo) > 0:
        origin = robot.pos
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs  # (R, 2), +-inf on axis-parallel rays
            t1 = (lo[None, :, :] - origin) * inv[:, None, :]
            t2 = (hi[None, :, :] - origin) * inv[:, None, :]
        tmin = np.minimum(t1, t2).max(axis=2)
        tmax = np.maximum(t1, t2).min(axis=2)
        hit = (tmax >= np.maximum(tmin, 0.0)) & (tmin > 0.0) & (tmin <= params.max_range)
        tmin = np.where(hit, tmin, np.inf)
        best = tmin.min(axis=1)
        mask = np.isfinite(best)
        ranges[mask] = best[mask]

    if params.range_noise_sigma > 0.0:
        hit_mask = ranges < params.max_range
        noise = rng.normal(0.0, params.range_noise_sigma, params.n_rays)
        noisy = np.clip(ranges + noise, 1e-6, params.max_range)
        ranges = np.where(hit_mask, noisy, ranges)

    return Scan(angles=angles, ranges=ranges, max_range=params.max_range)
