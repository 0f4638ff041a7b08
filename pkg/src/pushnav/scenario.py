"""Scenario files: world layout, module parameters, validation.

A scenario is a YAML document with either an inline ASCII map ('#' wall,
'.' or ' ' free, one char per ``meters_per_char`` square) or a path to a
P5 PGM static map. All module defaults can be overridden under ``params``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path as FsPath

import numpy as np
import yaml

from .checker import CheckerParams
from .grid import FREE, LETHAL, CostGrid, GridMeta, read_pgm
from .layers import MovableLayerParams
from .planning import MppiParams
from .world import BodyClass, MovableBody, RobotState, ScanParams, WorldState


class ScenarioError(Exception):
    pass


class ParseError(ScenarioError):
    pass


class ValidationError(ScenarioError):
    pass


@dataclass
class LoopConfig:
    """Closed-loop execution knobs."""

    dt: float = 0.1
    timeout: float = 180.0
    replan_period: float = 2.0
    goal_tolerance: float = 0.25
    planner_w_cost: float = 8.0
    recovery_duration: float = 1.5
    recovery_speed: float = -0.3
    no_path_patience: float = 5.0  # persistent NoPath aborts the trial early
    mppi_lookahead: float = 3.0  # carrot window of global path fed to MPPI, m
    stuck_window: float = 30.0  # abort when the robot barely moves this long
    stuck_displacement: float = 0.3
    pose_noise_sigma_xy: float = 0.0  # optional localization-drift stand-in
    pose_noise_sigma_theta: float = 0.0


@dataclass
class RobotConfig:
    footprint_radius: float = 0.3
    v_max: float = 1.0
    omega_max: float = 1.5


@dataclass
class SimConfig:
    robot: RobotConfig = field(default_factory=RobotConfig)
    lidar: ScanParams = field(default_factory=ScanParams)
    movable: MovableLayerParams = field(default_factory=MovableLayerParams)
    checker: CheckerParams = field(default_factory=CheckerParams)
    mppi: MppiParams = field(default_factory=MppiParams)
    loop: LoopConfig = field(default_factory=LoopConfig)


_SECTION_TYPES = {
    "robot": RobotConfig,
    "lidar": ScanParams,
    "movable": MovableLayerParams,
    "checker": CheckerParams,
    "mppi": MppiParams,
    "loop": LoopConfig,
}


def config_from_dict(overrides: dict | None, base: SimConfig | None = None) -> SimConfig:
    """Build a SimConfig from nested dicts of overrides on top of defaults."""
    cfg = base or SimConfig()
    if not overrides:
        return cfg
    for section, values in overrides.items():
        if section not in _SECTION_TYPES:
            raise ParseError(f"unknown config section '{section}'")
        if not isinstance(values, dict):
            raise ParseError(f"config section '{section}' must be a mapping")
        current = getattr(cfg, section)
        known = {f.name for f in fields(current)}
        merged = {f.name: getattr(current, f.name) for f in fields(current)}
        for key, val in values.items():
            if key not in known:
                raise ParseError(f"unknown option '{section}.{key}'")
            merged[key] = val
        setattr(cfg, section, _SECTION_TYPES[section](**merged))
    return cfg


@dataclass
class Scenario:
    name: str
    static_map: CostGrid
    robot_start: tuple[float, float, float]
    goal: tuple[float, float]
    bodies: list[MovableBody]
    config: SimConfig
    baseline_mode: bool = False


def _grid_from_ascii(text: str, resolution: float, meters_per_char: float) -> CostGrid:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ParseError("empty ASCII map")
    width_chars = max(len(line) for line in lines)
    k = meters_per_char / resolution
    if abs(k - round(k)) > 1e-9 or round(k) < 1:
        raise ParseError(f"meters_per_char {meters_per_char} not a multiple of resolution {resolution}")
    k = int(round(k))
    chars = np.full((len(lines), width_chars), ".", dtype="U1")
    for i, line in enumerate(lines):
        for j, ch in enumerate(line):
            if ch not in "#. ":
                raise ParseError(f"map line {i + 1}: unexpected character {ch!r}")
            chars[i, j] = ch
    wall = chars == "#"
    wall = np.flipud(wall)  # first text row is the top of the map
    cells = np.where(np.kron(wall, np.ones((k, k), dtype=bool)), LETHAL, FREE).astype(np.uint8)
    meta = GridMeta(cells.shape[1], cells.shape[0], resolution)
    return CostGrid(meta, cells)


def _check_free_point(grid: CostGrid, point: tuple[float, float], label: str) -> None:
    from .grid import OutOfBounds, world_to_cell

    try:
        col, row = world_to_cell(point, grid.meta)
    except OutOfBounds as e:
        raise ValidationError(f"{label} outside map: {e}") from e
    if grid.cells[row, col] != FREE:
        raise ValidationError(f"{label} {point} is not on a free cell")


def load_scenario(source, config_overrides: dict | None = None) -> Scenario:
    """Load and validate a scenario from a YAML file path or bundled name.

    ``source`` may be a filesystem path or the name of a bundled scenario
    (e.g. "1-a"). ``config_overrides`` (e.g. from --config) are applied on top
    of the scenario's own params.
    """
    path = FsPath(str(source))
    if not path.exists():
        bundled = resources.files("pushnav").joinpath("scenarios", f"{source}.yaml")
        if not bundled.is_file():
            raise ParseError(f"scenario '{source}' not found (no file, no bundled scenario)")
        text = bundled.read_text()
        base_dir = None
    else:
        text = path.read_text()
        base_dir = path.parent

    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ParseError(f"scenario YAML: {e}") from e
    if not isinstance(doc, dict):
        raise ParseError("scenario document must be a mapping")

    for req in ("name", "resolution", "robot_start", "goal"):
        if req not in doc:
            raise ParseError(f"missing required field '{req}'")
    resolution = float(doc["resolution"])

    if "map" in doc:
        grid = _grid_from_ascii(doc["map"], resolution, float(doc.get("meters_per_char", resolution)))
    elif "static_map" in doc:
        pgm = FsPath(doc["static_map"])
        if base_dir is not None and not pgm.is_absolute():
            pgm = base_dir / pgm
        grid = read_pgm(pgm, resolution)
    else:
        raise ParseError("scenario needs an inline 'map' or a 'static_map' PGM path")

    start = tuple(float(v) for v in doc["robot_start"])
    if len(start) != 3:
        raise ParseError("robot_start must be [x, y, theta]")
    goal = tuple(float(v) for v in doc["goal"])
    if len(goal) != 2:
        raise ParseError("goal must be [x, y]")

    bodies = []
    for i, spec in enumerate(doc.get("bodies", [])):
        try:
            body = MovableBody(
                id=i,
                center=np.array([float(v) for v in spec["center"]]),
                half_extents=np.array([float(v) for v in spec["half_extents"]]),
                body_class=BodyClass(spec["class"]),
            )
        except (KeyError, ValueError) as e:
            raise ParseError(f"bodies[{i}]: {e}") from e
        bodies.append(body)

    config = config_from_dict(doc.get("params"))
    config = config_from_dict(config_overrides, base=config)

    _check_free_point(grid, (start[0], start[1]), "robot_start")
    _check_free_point(grid, goal, "goal")
    for body in bodies:
        if not grid.meta.contains(*body.lo) or not grid.meta.contains(*(body.hi - 1e-9)):
            raise ValidationError(f"body {body.id} extends outside the map")

    return Scenario(
        name=str(doc["name"]),
        static_map=grid,
        robot_start=start,  # type: ignore[arg-type]
        goal=goal,  # type: ignore[arg-type]
        bodies=bodies,
        config=config,
        baseline_mode=bool(doc.get("baseline_mode", False)),
    )


def make_world(scenario: Scenario) -> WorldState:
    """Fresh ground-truth world for one trial (bodies copied, robot at start)."""
    rc = scenario.config.robot
    robot = RobotState(
        x=scenario.robot_start[0],
        y=scenario.robot_start[1],
        theta=scenario.robot_start[2],
        footprint_radius=rc.footprint_radius,
        v_max=rc.v_max,
        omega_max=rc.omega_max,
    )
    bodies = [
        MovableBody(b.id, b.center.copy(), b.half_extents.copy(), b.body_class)
        for b in scenario.bodies
    ]
    return WorldState(scenario.static_map, bodies, robot)


def bundled_scenarios() -> list[str]:
    names = []
    for entry in resources.files("pushnav").joinpath("scenarios").iterdir():
        if entry.name.endswith(".yaml"):
            names.append(entry.name[: -len(".yaml")])
    return sorted(names)
