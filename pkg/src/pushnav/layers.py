"""Costmap layers: scan mark/clear, the movable-obstacle layer, soft inflation.

The movable layer differences live LiDAR marks against the static map, keeps
persistent cluster identities through connected-component labeling, filters
detections too close to walls, and escalates cluster cost levels on interaction
feedback (Light -> Heavy -> Lethal, monotone within a trial).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy.ndimage import distance_transform_edt, label as ndi_label

from .grid import FREE, HEAVY, LETHAL, LIGHT, UNKNOWN, CostGrid, DistanceField, cells_world_to_grid
from .world import Scan

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


class Level(IntEnum):
    LIGHT = 1
    HEAVY = 2
    LETHAL = 3

    @property
    def cost(self) -> int:
        return {Level.LIGHT: LIGHT, Level.HEAVY: HEAVY, Level.LETHAL: LETHAL}[self]


@dataclass
class EscalationEvent:
    """Interaction-feedback signal: raise the nearest cluster to at least `level`."""

    level: Level
    pose: tuple[float, float, float]  # robot (x, y, theta) when emitted
    time: float


@dataclass
class ObstacleCluster:
    id: int
    cells: list[tuple[int, int]]
    centroid: tuple[float, float]
    level: Level
    last_seen: float


@dataclass
class ClusterRegistry:
    clusters: dict[int, ObstacleCluster] = field(default_factory=dict)
    next_id: int = 0

    def new_cluster(self, cells, centroid, now: float) -> ObstacleCluster:
        cluster = ObstacleCluster(self.next_id, cells, centroid, Level.LIGHT, now)
        self.clusters[self.next_id] = cluster
        self.next_id += 1
        return cluster


@dataclass
class MovableLayerParams:
    wall_distance_threshold: float = 0.3
    cluster_match_radius: float = 0.4
    occlusion_memory: float = 5.0
    inflation_radius: float = 0.6
    decay_rate: float = 5.0

    def __post_init__(self):
        for name in ("wall_distance_threshold", "cluster_match_radius", "occlusion_memory",
                     "inflation_radius", "decay_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def obstacle_layer_update(scan: Scan, robot_pose: tuple[float, float, float], grid: CostGrid) -> CostGrid:
    """Mark scan endpoints LETHAL and raytrace-clear cells crossed before them.

    Mutates and returns ``grid`` (the layer is persistent across updates, which
    is what gives the clearing behaviour when an obstacle is moved away).
    """
    meta = grid.meta
    x, y, theta = robot_pose
    world_angles = theta + scan.angles
    dirs_x = np.cos(world_angles)
    dirs_y = np.sin(world_angles)

    # clearing: sample each ray densely up to its return
    ds = meta.resolution / 3.0
    n_steps = int(math.ceil(scan.max_range / ds)) + 1
    ts = np.arange(n_steps) * ds
    tgrid = np.broadcast_to(ts, (len(scan.ranges), n_steps))
    valid = tgrid <= scan.ranges[:, None]
    px = x + dirs_x[:, None] * tgrid
    py = y + dirs_y[:, None] * tgrid
    cols, rows, ok = cells_world_to_grid(px[valid], py[valid], meta)
    grid.cells[rows[ok], cols[ok]] = FREE

    hits = scan.ranges < scan.max_range - 1e-9
    ex = x + dirs_x[hits] * scan.ranges[hits]
    ey = y + dirs_y[hits] * scan.ranges[hits]
    cols, rows, ok = cells_world_to_grid(ex, ey, meta)
    grid.cells[rows[ok], cols[ok]] = LETHAL
    return grid


def label_clusters(cells) -> list[list[tuple[int, int]]]:
    """Partition a set of (col, row) cells into maximal 8-connected components."""
    cells = list(cells)
    if not cells:
        return []
    arr = np.asarray(cells)
    cmin = arr.min(axis=0)
    shape = arr.max(axis=0) - cmin + 1
    raster = np.zeros((shape[1], shape[0]), dtype=np.uint8)
    raster[arr[:, 1] - cmin[1], arr[:, 0] - cmin[0]] = 1
    labels, n = ndi_label(raster, structure=EIGHT_CONNECTED)
    out = []
    for k in range(1, n + 1):
        rows, cols = np.nonzero(labels == k)
        out.append([(int(c + cmin[0]), int(r + cmin[1])) for c, r in zip(cols, rows)])
    return out


def apply_escalation(registry: ClusterRegistry, event: EscalationEvent,
                     footprint_radius: float = 0.3, meta=None) -> int | None:
    """Raise the level of the cluster nearest the robot's look-ahead point.

    The look-ahead point sits one footprint radius ahead of the robot; only
    clusters within two footprint radii of it are eligible. Distance is to the
    nearest cluster cell when grid metadata is supplied (large bodies put the
    centroid far from the contact point), to the centroid otherwise. Returns
    the affected cluster id, or None when no cluster is in range (no-op).
    """
    x, y, theta = event.pose
    ahead = (x + footprint_radius * math.cos(theta), y + footprint_radius * math.sin(theta))
    best_id = None
    best_d = 2.0 * footprint_radius
    for cid in sorted(registry.clusters):
        c = registry.clusters[cid]
        if meta is not None and c.cells:
            d = min(
                math.hypot(meta.origin[0] + (col + 0.5) * meta.resolution - ahead[0],
                           meta.origin[1] + (row + 0.5) * meta.resolution - ahead[1])
                for col, row in c.cells
            )
        else:
            d = math.hypot(c.centroid[0] - ahead[0], c.centroid[1] - ahead[1])
        if d < best_d:
            best_d, best_id = d, cid
    if best_id is None:
        return None
    cluster = registry.clusters[best_id]
    cluster.level = max(cluster.level, event.level)
    return best_id


def movable_layer_update(
    obstacle_marks,
    static_map: CostGrid,
    dfield: DistanceField,
    registry: ClusterRegistry,
    params: MovableLayerParams,
    now: float,
) -> dict[tuple[int, int], int]:
    """Classify unmapped lethal marks as movable and emit cost overrides.

    ``obstacle_marks`` is an iterable of (col, row) cells currently LETHAL in
    the obstacle layer. Candidate cells absent from the static map and at least
    ``wall_distance_threshold`` from any wall are clustered; clusters matched to
    a remembered centroid (greedy nearest within ``cluster_match_radius``,
    one-to-one, ties to the lower id) inherit its identity and level, new
    clusters start Light. Clusters unseen longer than ``occlusion_memory``
    are dropped. Mutates the registry; returns the cell -> cost override map.
    """
    static = static_map.cells
    candidates = [
        (c, r)
        for (c, r) in obstacle_marks
        if static[r, c] != LETHAL and dfield.dist[r, c] >= params.wall_distance_threshold
    ]
    components = label_clusters(candidates)

    meta = static_map.meta
    centroids = []
    for comp in components:
        arr = np.asarray(comp, dtype=float)
        cx = meta.origin[0] + (arr[:, 0].mean() + 0.5) * meta.resolution
        cy = meta.origin[1] + (arr[:, 1].mean() + 0.5) * meta.resolution
        centroids.append((cx, cy))

    # greedy one-to-one matching, nearest centroid first, ties to lower id
    pairs = []
    for i, (cx, cy) in enumerate(centroids):
        for cid in registry.clusters:
            old = registry.clusters[cid]
            d = math.hypot(old.centroid[0] - cx, old.centroid[1] - cy)
            if d <= params.cluster_match_radius:
                pairs.append((d, cid, i))
    pairs.sort()
    matched_cluster: dict[int, int] = {}
    matched_comp: set[int] = set()
    for d, cid, i in pairs:
        if cid in matched_cluster or i in matched_comp:
            continue
        matched_cluster[cid] = i
        matched_comp.add(i)

    for cid, i in matched_cluster.items():
        cluster = registry.clusters[cid]
        cluster.cells = components[i]
        cluster.centroid = centroids[i]
        cluster.last_seen = now

    # unmatched components bordering a just-seen cluster are fragments of it
    # (partial visibility at grazing angles splits one body into shards);
    # absorb them instead of minting spurious new identities
    fresh = [registry.clusters[cid] for cid in sorted(matched_cluster)]
    res = meta.resolution
    for i, comp in enumerate(components):
        if i in matched_comp:
            continue
        cx, cy = centroids[i]
        host = None
        best = params.cluster_match_radius
        for cluster in fresh:
            for col, row in cluster.cells:
                d = math.hypot(meta.origin[0] + (col + 0.5) * res - cx,
                               meta.origin[1] + (row + 0.5) * res - cy)
                if d < best:
                    best, host = d, cluster
        if host is None:
            fresh.append(registry.new_cluster(comp, centroids[i], now))
        else:
            host.cells = host.cells + comp
            arr = np.asarray(host.cells, dtype=float)
            host.centroid = (
                meta.origin[0] + (arr[:, 0].mean() + 0.5) * res,
                meta.origin[1] + (arr[:, 1].mean() + 0.5) * res,
            )

    # a stale cluster whose centroid now lies inside a fresh cluster lost the
    # identity competition for the same physical object; hand its level over
    # so escalations stay sticky, then drop the stale record
    for cid in sorted(registry.clusters):
        cluster = registry.clusters[cid]
        if cluster.last_seen >= now:
            continue
        for other in fresh:
            d = min(
                (math.hypot(meta.origin[0] + (col + 0.5) * res - cluster.centroid[0],
                            meta.origin[1] + (row + 0.5) * res - cluster.centroid[1])
                 for col, row in other.cells),
                default=math.inf,
            )
            if d <= params.cluster_match_radius:
                other.level = max(other.level, cluster.level)
                del registry.clusters[cid]
                break

    # drop clusters occluded for too long; retained ones keep level, not cells
    for cid in list(registry.clusters):
        cluster = registry.clusters[cid]
        if cluster.last_seen < now:
            cluster.cells = []
            if now - cluster.last_seen > params.occlusion_memory:
                del registry.clusters[cid]

    overrides: dict[tuple[int, int], int] = {}
    for cid in sorted(registry.clusters):
        cluster = registry.clusters[cid]
        for cell in cluster.cells:
            overrides[cell] = cluster.level.cost
    return overrides


def inflate(base: CostGrid, params: MovableLayerParams) -> CostGrid:
    """Weighted soft inflation: each source cell with cost c0 contributes
    round(c0 * exp(-decay_rate * d)) to every cell within inflation_radius,
    and each output cell takes the max over contributions and its own base.

    UNKNOWN cells are not sources and pass through unchanged.
    """
    cells = base.cells
    res = base.meta.resolution
    out = cells.astype(np.float64)
    out[cells == UNKNOWN] = 0.0
    result = np.rint(out)
    for value in np.unique(cells):
        if value in (FREE, UNKNOWN):
            continue
        # distance to the nearest source of this value; exponential decay is
        # monotone so the nearest source dominates all others of equal cost
        d = distance_transform_edt(cells != value) * res
        contrib = np.rint(float(value) * np.exp(-params.decay_rate * d))
        contrib[d > params.inflation_radius] = 0.0
        result = np.maximum(result, contrib)
    result[cells == UNKNOWN] = UNKNOWN
    return CostGrid(base.meta, result.astype(np.uint8))
