"""Adaptive cost-map navigation among movable obstacles: a 2D simulator and
planning library where unmapped LiDAR returns start at a reduced "light" cost
and interaction feedback escalates them to heavy or lethal, driving replanning.
"""

from .grid import (
    FREE,
    HEAVY,
    LETHAL,
    LIGHT,
    UNKNOWN,
    CostGrid,
    DistanceField,
    GridMeta,
    MetaMismatch,
    OutOfBounds,
    compose_layers,
    distance_transform,
    world_to_cell,
)
from .layers import (
    ClusterRegistry,
    EscalationEvent,
    Level,
    MovableLayerParams,
    ObstacleCluster,
    apply_escalation,
    inflate,
    label_clusters,
    movable_layer_update,
    obstacle_layer_update,
)
from .checker import CheckerParams, CheckerState, Phase
from .planning import (
    DegenerateWeights,
    MppiParams,
    NoPath,
    Path,
    StartBlocked,
    mppi_step,
    plan_global,
    recovery_backup,
    rollout_cost,
)
from .scenario import Scenario, SimConfig, ValidationError, load_scenario, make_world
from .trial import BatchSummary, TrialMetrics, run_batch, run_trial
from .world import (
    BodyClass,
    MovableBody,
    RobotState,
    Scan,
    ScanParams,
    WorldState,
    resolve_push,
    simulate_lidar,
    step,
)

__version__ = "0.1.0"
