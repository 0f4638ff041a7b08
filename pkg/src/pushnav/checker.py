"""Velocity-ratio progress checker emitting Heavy, then Lethal, escalation events.

Trigger rule: while the robot is commanded to translate, a measured speed below
drop_ratio * |cmd_v| sustained for a freeze window means forward progress is
obstructed -> Heavy. Within the same obstruction episode, a measured speed
below stall_speed sustained for a stall window means the robot is not moving at
all despite pushing -> Lethal. In-place rotation is exempt, the first
settling_period seconds never trigger, and no two events are emitted within one
cooldown period.

An obstruction episode runs from the first Heavy trigger until the ratio
condition has stayed clear for EPISODE_CLEAR_S.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .layers import EscalationEvent, Level

EPISODE_CLEAR_S = 0.5


@dataclass
class CheckerParams:
    drop_ratio: float = 0.3
    freeze_window: float = 0.8
    settling_period: float = 2.0
    cooldown: float = 3.0
    stall_speed: float = 0.02
    stall_window: float = 1.5
    rotation_omega_threshold: float = 0.3

    def __post_init__(self):
        if not 0.0 < self.drop_ratio < 1.0:
            raise ValueError("drop_ratio must be in (0, 1)")
        for name in ("freeze_window", "settling_period", "cooldown", "stall_speed",
                     "stall_window", "rotation_omega_threshold"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class Phase(Enum):
    SETTLING = "settling"
    MONITORING = "monitoring"
    COOLDOWN = "cooldown"


@dataclass
class CheckerState:
    phase: Phase = Phase.SETTLING
    below_since: float | None = None
    stalled_since: float | None = None
    baseline_speed: float = 0.0
    last_trigger: float | None = None
    in_episode: bool = False
    episode_clear_since: float | None = None
    lethal_sent: bool = False  # at most one Lethal per obstruction episode


def update(
    state: CheckerState,
    params: CheckerParams,
    measured_speed: float,
    cmd_v: float,
    cmd_omega: float,
    now: float,
    pose: tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> tuple[CheckerState, EscalationEvent | None]:
    """Advance the checker by one control tick; pure in (state, params, inputs).

    Returns the new state and an escalation event when one fires.
    """
    measured = max(0.0, measured_speed)

    rotating_in_place = abs(cmd_v) < 0.05 and abs(cmd_omega) > params.rotation_omega_threshold
    ratio_bad = (not rotating_in_place) and abs(cmd_v) > 1e-9 and measured < params.drop_ratio * abs(cmd_v)

    below_since = state.below_since if ratio_bad else None
    if ratio_bad and below_since is None:
        below_since = now

    in_episode = state.in_episode
    clear_since = state.episode_clear_since
    lethal_sent = state.lethal_sent
    if in_episode:
        if ratio_bad:
            clear_since = None
        else:
            if clear_since is None:
                clear_since = now
            if now - clear_since >= EPISODE_CLEAR_S:
                in_episode = False
                clear_since = None
                lethal_sent = False

    stalled_since = state.stalled_since
    if in_episode and measured < params.stall_speed:
        if stalled_since is None:
            stalled_since = now
    else:
        stalled_since = None

    # a cruising-speed record, kept for logs; the trigger compares against cmd_v
    baseline = state.baseline_speed
    if not ratio_bad and measured > 1e-6:
        baseline = 0.95 * baseline + 0.05 * measured

    settled = now >= params.settling_period
    cooled = state.last_trigger is None or now - state.last_trigger >= params.cooldown
    last_trigger = state.last_trigger
    event = None
    if settled and cooled:
        if in_episode and not lethal_sent and stalled_since is not None \
                and now - stalled_since >= params.stall_window:
            event = EscalationEvent(Level.LETHAL, pose, now)
            lethal_sent = True
            last_trigger = now
        elif below_since is not None and now - below_since >= params.freeze_window:
            event = EscalationEvent(Level.HEAVY, pose, now)
            in_episode = True
            clear_since = None
            last_trigger = now

    if not settled:
        phase = Phase.SETTLING
    elif last_trigger is not None and now - last_trigger < params.cooldown:
        phase = Phase.COOLDOWN
    else:
        phase = Phase.MONITORING

    new_state = CheckerState(
        phase=phase,
        below_since=below_since,
        stalled_since=stalled_since,
        baseline_speed=baseline,
        last_trigger=last_trigger,
        in_episode=in_episode,
        episode_clear_since=clear_since,
        lethal_sent=lethal_sent,
    )
    return new_state, event
