"""Deterministic costmap rendering with a fixed documented palette.

Palette (linear interpolation between anchor costs, fixed LUT):
    0 (free)     -> white  (255, 255, 255)
    80 (light)   -> blue   (70, 110, 255)
    180 (heavy)  -> orange (255, 150, 40)
    253          -> red    (230, 30, 30)
    254 (lethal) -> near-black (25, 25, 25)
    255 (unknown)-> gray   (128, 128, 128)
Overlays: path in green, robot disk in magenta, cluster centroids in cyan.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .grid import CostGrid, cells_world_to_grid

PATH_COLOR = (40, 200, 60)
ROBOT_COLOR = (220, 40, 220)
CLUSTER_COLOR = (0, 210, 210)

_ANCHORS = [(0, (255, 255, 255)), (80, (70, 110, 255)), (180, (255, 150, 40)), (253, (230, 30, 30))]


def _build_lut() -> np.ndarray:
    lut = np.zeros((256, 3), dtype=np.uint8)
    xs = [a[0] for a in _ANCHORS]
    for ch in range(3):
        ys = [a[1][ch] for a in _ANCHORS]
        lut[:254, ch] = np.rint(np.interp(np.arange(254), xs, ys)).astype(np.uint8)
    lut[254] = (25, 25, 25)
    lut[255] = (128, 128, 128)
    return lut


PALETTE_LUT = _build_lut()


def _paint_cells(img: np.ndarray, cols, rows, color, meta) -> None:
    cols = np.asarray(cols)
    rows = np.asarray(rows)
    ok = (cols >= 0) & (cols < meta.width) & (rows >= 0) & (rows < meta.height)
    img[rows[ok], cols[ok]] = color


def export_costmap_image(
    master: CostGrid,
    path_out,
    path=None,
    robot=None,
    clusters=None,
    scale: int = 4,
) -> None:
    """Write the master grid as PNG; byte-identical for identical inputs.

    ``path`` is a planned Path (or (N, 2) array of world points), ``robot`` a
    RobotState, ``clusters`` a ClusterRegistry. The image row order puts high y
    at the top.
    """
    meta = master.meta
    img = PALETTE_LUT[master.cells]

    if path is not None:
        pts = getattr(path, "waypoints", path)
        pts = np.asarray(pts, dtype=float)
        # dense samples along segments so diagonal paths stay connected
        if len(pts) > 1:
            seg = np.repeat(pts, 3, axis=0)
            mids1 = 0.5 * (pts[:-1] + pts[1:])
            pts = np.vstack([seg, mids1])
        cols, rows, ok = cells_world_to_grid(pts[:, 0], pts[:, 1], meta)
        img[rows[ok], cols[ok]] = PATH_COLOR

    if clusters is not None:
        for cid in sorted(clusters.clusters):
            c = clusters.clusters[cid]
            cols, rows, ok = cells_world_to_grid(
                np.array([c.centroid[0]]), np.array([c.centroid[1]]), meta
            )
            img[rows[ok], cols[ok]] = CLUSTER_COLOR

    if robot is not None:
        r_cells = max(1, int(round(robot.footprint_radius / meta.resolution)))
        cols, rows, ok = cells_world_to_grid(np.array([robot.x]), np.array([robot.y]), meta)
        if ok[0]:
            cc, rr = int(cols[0]), int(rows[0])
            yy, xx = np.mgrid[-r_cells : r_cells + 1, -r_cells : r_cells + 1]
            disk = yy**2 + xx**2 <= r_cells**2
            _paint_cells(img, cc + xx[disk], rr + yy[disk], ROBOT_COLOR, meta)

    img = np.flipud(img)  # row 0 is the bottom of the world
    if scale > 1:
        img = np.kron(img, np.ones((scale, scale, 1), dtype=np.uint8))
    Image.fromarray(img, mode="RGB").save(path_out, format="PNG")
