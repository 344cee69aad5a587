"""Deterministic synthetic pedestrian-vehicle encounter generator.

Three templates produce 11-second, 10 Hz scenario pairs:

* crossing: the pedestrian heads for the vehicle's path on a collision
  course, brakes to a stop short of it, lets the vehicle pass, then
  crosses behind it.
* head_on: the pedestrian walks along the vehicle's lane toward the
  oncoming vehicle and sidesteps shortly before they meet.
* turning_arc: the vehicle sweeps a circular arc; the pedestrian
  approaches the arc radially, pauses, and crosses behind the vehicle.

Critical scenarios intersect the vehicle's path (so interaction
extraction fires) while keeping the closest simultaneous approach above
the collision threshold; subcritical scenarios keep their envelopes
clear of the path. Velocity samples are produced with an implicit
trapezoid differencing of the (optionally noised) positions, which keeps
positions and velocities exactly consistent under trapezoidal
integration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GenerationError
from .trajectories import (
    AV,
    DT,
    HDV,
    PEDESTRIAN,
    InteractionPair,
    Trajectory,
    min_pairwise_distance,
)

CROSSING = "crossing"
HEAD_ON = "head_on"
TURNING_ARC = "turning_arc"
KINDS = (CROSSING, HEAD_ON, TURNING_ARC)

HORIZON_STEPS = 110  # 11 s at 10 Hz -> 111 samples
MAX_TEMPLATE_SPEED = 4.0  # keeps initial speeds inside the conflict-grid bins
MAX_ACCEL = 7.0

_ACCEL_TIME = 0.4  # s to reach walking speed
_BRAKE_TIME = 0.5  # s to shed walking speed
_CLEAR_TIME = 0.6  # s the pedestrian waits after the vehicle passes
_STOP_SHORT = 1.9  # m between the stop point and the conflict point
# critical pedestrians never fully stop: zero recorded velocity components
# would blow up the normalized velocity rewards downstream
_CREEP_SPEED = 0.2  # m/s


@dataclass
class ScenarioTemplate:
    kind: str
    vehicle_speed: tuple[float, float] = (2.2, 3.5)
    pedestrian_speed: tuple[float, float] = (1.5, 2.0)
    approach_angle: float = math.radians(15.0)  # pedestrian heading off-axis
    arc_radius: tuple[float, float] = (6.0, 12.0)
    initial_gap: float | None = None  # m from vehicle start to conflict point
    noise_std: float = 0.0  # m of positional noise
    critical_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GenerationError(f"unknown template kind {self.kind!r}")
        for name in ("vehicle_speed", "pedestrian_speed"):
            lo, hi = getattr(self, name)
            if not (0.0 < lo <= hi <= MAX_TEMPLATE_SPEED):
                raise GenerationError(
                    f"{name} range must sit inside (0, {MAX_TEMPLATE_SPEED}] m/s"
                )
        if self.arc_radius[0] <= 2.0:
            raise GenerationError("arc radius must exceed 2 m")
        if not 0.0 <= self.critical_fraction <= 1.0:
            raise GenerationError("critical_fraction must lie in [0, 1]")
        if self.noise_std < 0.0 or self.noise_std > 0.01:
            raise GenerationError("noise_std must lie in [0, 0.01] m")


# ---------------------------------------------------------------------------
# kinematic profile construction
# ---------------------------------------------------------------------------


def _roll_out(p0, v0, accel_phases) -> tuple[np.ndarray, np.ndarray]:
    """Positions/velocities for piecewise-constant-acceleration phases.

    `accel_phases` is a list of (frames, ax, ay); frames must total
    HORIZON_STEPS. Positions integrate velocities trapezoidally, so the
    trajectory is exactly consistent with the explicit dynamics.
    """
    accel = np.zeros((HORIZON_STEPS, 2))
    cursor = 0
    for frames, ax, ay in accel_phases:
        accel[cursor : cursor + frames] = (ax, ay)
        cursor += frames
    if cursor != HORIZON_STEPS:
        raise GenerationError(f"phase frames sum to {cursor}, need {HORIZON_STEPS}")
    v = np.empty((HORIZON_STEPS + 1, 2))
    v[0] = v0
    v[1:] = v0 + np.cumsum(accel, axis=0) * DT
    p = np.empty_like(v)
    p[0] = p0
    p[1:] = p0 + np.cumsum(0.5 * (v[:-1] + v[1:]) * DT, axis=0)
    return p, v


def _frames(seconds: float) -> int:
    return int(round(seconds / DT))


def _walk_phases(direction, speed, idle_speed, stage, walk, brake, wait, resume=True):
    """Idle, accelerate, walk, brake back to idle, wait, optionally resume.

    All frame counts; `idle_speed` is the speed held outside the walking
    phases (a small creep for critical scenarios, zero for subcritical
    ones, which are never extracted and so never feed reward math).
    """
    accel = (speed - idle_speed) / (_frames(_ACCEL_TIME) * DT)
    decel = -(speed - idle_speed) / (brake * DT)
    d = np.asarray(direction)
    phases = [
        (stage, 0.0, 0.0),
        (_frames(_ACCEL_TIME), accel * d[0], accel * d[1]),
        (walk, 0.0, 0.0),
        (brake, decel * d[0], decel * d[1]),
    ]
    if resume:
        phases += [
            (wait, 0.0, 0.0),
            (_frames(_ACCEL_TIME), accel * d[0], accel * d[1]),
        ]
    used = sum(f for f, _, _ in phases)
    if used > HORIZON_STEPS:
        raise GenerationError("pedestrian schedule does not fit the 11 s horizon")
    phases.append((HORIZON_STEPS - used, 0.0, 0.0))
    return phases


def _consistent_velocities(p: np.ndarray, v0: np.ndarray) -> np.ndarray:
    """Velocities whose trapezoid exactly integrates to the positions."""
    v = np.empty_like(p)
    v[0] = v0
    for k in range(p.shape[0] - 1):
        v[k + 1] = 2.0 * (p[k + 1] - p[k]) / DT - v[k]
    return v


def _make_trajectory(agent_id, agent_class, p, v) -> Trajectory:
    heading = np.arctan2(v[:, 1], v[:, 0])
    return Trajectory(
        agent_id=agent_id,
        agent_class=agent_class,
        t=np.arange(p.shape[0]) / 10.0,
        x=p[:, 0],
        y=p[:, 1],
        vx=v[:, 0],
        vy=v[:, 1],
        heading=heading,
    )


def _apply_noise(p, v0, noise_std, rng, max_speed, max_tries=100):
    """Noise positions and re-derive consistent velocities, resampling any
    draw that violates the speed/acceleration bounds."""
    if noise_std == 0.0:
        return p, None
    for _ in range(max_tries):
        noisy = p + rng.normal(0.0, noise_std, p.shape)
        v = _consistent_velocities(noisy, v0)
        speed = np.hypot(v[:, 0], v[:, 1])
        accel = np.hypot(*(np.diff(v, axis=0) / DT).T)
        if speed.max() <= max_speed and accel.max() <= MAX_ACCEL:
            return noisy, v
    raise GenerationError("could not draw bounded noise, lower noise_std")


# ---------------------------------------------------------------------------
# templates
# ---------------------------------------------------------------------------


def _staged_approach(rng, critical, template, direction, conflict, t_cross):
    """Pedestrian profile shared by the crossing templates: approach the
    conflict point on a collision course timed at t_cross, shed speed to
    stop short of it, let the vehicle pass, then cross behind it.

    Critical variants idle at a small creep speed and cross; subcritical
    variants idle at zero, stop further out, and never cross.
    """
    v_p = rng.uniform(*template.pedestrian_speed)
    walk = rng.uniform(1.1, 1.5)
    idle = _CREEP_SPEED if critical else 0.0
    stop_short = _STOP_SHORT if critical else 0.45

    walk_f = _frames(walk)
    brake_f = _frames(_BRAKE_TIME)
    accel_f = _frames(_ACCEL_TIME)
    ramp_dist = 0.5 * (idle + v_p) * accel_f * DT
    brake_dist = 0.5 * (v_p + idle) * brake_f * DT

    # if the pedestrian never braked, it would reach the conflict point at
    # t_cross; anchoring on the cruise phase fixes the ramp start time
    t_walk = t_cross - accel_f * DT - walk_f * DT - (brake_dist + stop_short) / v_p
    stage_f = _frames(t_walk)
    if stage_f < 1:
        raise GenerationError(
            "gap too small for requested speeds: pedestrian cannot stage its approach"
        )
    wait_f = _frames(t_cross + _CLEAR_TIME) - (stage_f + accel_f + walk_f + brake_f)
    if wait_f < 1:
        raise GenerationError("gap too small for requested speeds: no clearance time")
    if critical:
        rest_f = HORIZON_STEPS - (stage_f + 2 * accel_f + walk_f + brake_f + wait_f)
        crossed = idle * wait_f * DT + ramp_dist + v_p * rest_f * DT
        if rest_f < 1 or crossed < stop_short + 0.4:
            raise GenerationError(
                "gap too small for requested speeds: pedestrian cannot clear the path"
            )

    reach = idle * stage_f * DT + ramp_dist + v_p * walk_f * DT + brake_dist + stop_short
    start = conflict - direction * reach
    phases = _walk_phases(
        direction, v_p, idle, stage_f, walk_f, brake_f, wait_f, resume=critical
    )
    return _roll_out(start, idle * direction, phases)


def _crossing(rng, critical: bool, template: ScenarioTemplate):
    v_v = rng.uniform(*template.vehicle_speed)
    phi = template.approach_angle + rng.uniform(-0.09, 0.09)
    if template.initial_gap is not None:
        t_cross = template.initial_gap / v_v
    else:
        t_cross = rng.uniform(7.4, 8.2)
    direction = np.array([math.cos(phi), math.sin(phi)])
    ped_p, ped_v = _staged_approach(
        rng, critical, template, direction, np.zeros(2), t_cross
    )
    veh_start = np.array([0.0, -v_v * t_cross])
    veh_p, veh_v = _roll_out(veh_start, np.array([0.0, v_v]), [(HORIZON_STEPS, 0.0, 0.0)])
    return ped_p, ped_v, veh_p, veh_v


def _head_on(rng, critical: bool, template: ScenarioTemplate):
    v_v = rng.uniform(*template.vehicle_speed)
    v_p = rng.uniform(*template.pedestrian_speed)
    if not critical:
        # vehicle ahead and pulling away on a laterally offset lane
        ped_p, ped_v = _roll_out(
            np.array([0.0, 0.0]),
            np.array([0.0, v_p]),
            [(HORIZON_STEPS, 0.0, 0.0)],
        )
        veh_p, veh_v = _roll_out(
            np.array([0.5, 5.0]),
            np.array([0.0, max(v_v, v_p + 0.3)]),
            [(HORIZON_STEPS, 0.0, 0.0)],
        )
        return ped_p, ped_v, veh_p, veh_v

    if template.initial_gap is not None:
        gap0 = template.initial_gap
        t_meet = gap0 / (v_v + v_p)
    else:
        t_meet = rng.uniform(7.0, 8.0)
        gap0 = (v_v + v_p) * t_meet
    if t_meet < 3.0 or t_meet > 9.5:
        raise GenerationError("gap too small for requested speeds: meet time out of range")

    side_speed = 2.1
    side_accel = side_speed / 0.4
    t_side = t_meet - 1.3
    side_f = _frames(t_side)
    if side_f < 1:
        raise GenerationError("gap too small for requested speeds: no room to sidestep")
    phases = [
        (side_f, 0.0, 0.0),
        (_frames(0.4), side_accel, 0.0),
        (_frames(0.5), 0.0, 0.0),
        (_frames(0.4), -side_accel, 0.0),
    ]
    used = sum(f for f, _, _ in phases)
    phases.append((HORIZON_STEPS - used, 0.0, 0.0))
    # a small constant lateral drift keeps both velocity components nonzero
    ped_p, ped_v = _roll_out(np.zeros(2), np.array([0.12, v_p]), phases)
    veh_p, veh_v = _roll_out(
        np.array([0.0, gap0]), np.array([0.0, -v_v]), [(HORIZON_STEPS, 0.0, 0.0)]
    )
    return ped_p, ped_v, veh_p, veh_v


def _turning_arc(rng, critical: bool, template: ScenarioTemplate):
    v_v = rng.uniform(*template.vehicle_speed)
    radius = rng.uniform(*template.arc_radius)
    omega = v_v / radius
    t_cross = rng.uniform(7.2, 8.0)
    # keep the radial walking direction away from the axes so neither
    # recorded velocity component sits near zero
    for _ in range(64):
        alpha0 = rng.uniform(0.0, 2.0 * math.pi)
        alpha_cross = alpha0 + omega * t_cross
        if min(abs(math.cos(alpha_cross)), abs(math.sin(alpha_cross))) >= 0.3:
            break
    else:
        raise GenerationError("could not place the crossing away from the axes")

    # vehicle sweeps the circle; velocities come from the consistent
    # differencing of exact circle positions
    times = np.arange(HORIZON_STEPS + 1) * DT
    angles = alpha0 + omega * times
    veh_p = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    tangent0 = np.array([-math.sin(alpha0), math.cos(alpha0)])
    veh_v = _consistent_velocities(veh_p, v_v * tangent0)

    cross_point = radius * np.array([math.cos(alpha_cross), math.sin(alpha_cross)])
    inward = -cross_point / radius
    ped_p, ped_v = _staged_approach(
        rng, critical, template, inward, cross_point, t_cross
    )
    return ped_p, ped_v, veh_p, veh_v


_BUILDERS = {CROSSING: _crossing, HEAD_ON: _head_on, TURNING_ARC: _turning_arc}

_MIN_SIMULTANEOUS = 1.35  # m, keeps recorded critical paths collision-free
_MIN_SUBCRITICAL_ENVELOPE = 0.3  # m, keeps subcritical paths out of extraction


def _align_closest_samples(ped_p: np.ndarray, veh_p: np.ndarray) -> np.ndarray:
    """Translate the pedestrian path so its closest sample to the vehicle path
    lands exactly on a vehicle sample.

    Sampled paths that cross geometrically can still miss each other at
    the 10 Hz grid; the sub-sample-spacing nudge pins the envelope
    distance to zero without meaningfully changing the encounter.
    """
    diff = ped_p[:, None, :] - veh_p[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    i, j = np.unravel_index(np.argmin(dist), dist.shape)
    return ped_p + (veh_p[j] - ped_p[i])


def generate(template: ScenarioTemplate, count: int) -> list[InteractionPair]:
    """Produce `count` scenario pairs, deterministic in the template seed.

    The first round(count * critical_fraction) scenarios are built to be
    safety-critical; vehicles alternate between the AV and HDV classes.
    """
    if count < 1:
        raise GenerationError("count must be at least 1")
    n_critical = int(round(count * template.critical_fraction))
    seeds = np.random.SeedSequence(template.seed).spawn(count)
    builder = _BUILDERS[template.kind]
    pairs = []
    for i in range(count):
        rng = np.random.default_rng(seeds[i])
        critical = i < n_critical
        ped_p, ped_v, veh_p, veh_v = builder(rng, critical, template)
        if critical:
            ped_p = _align_closest_samples(ped_p, veh_p)
            simultaneous = float(np.hypot(*(ped_p - veh_p).T).min())
            if simultaneous < _MIN_SIMULTANEOUS:
                raise GenerationError(
                    f"scenario {i}: simultaneous approach {simultaneous:.2f} m "
                    "is too close, adjust speeds or geometry"
                )
        max_speed = MAX_TEMPLATE_SPEED
        noisy_ped, ped_v_noisy = _apply_noise(ped_p, ped_v[0], template.noise_std, rng, max_speed)
        noisy_veh, veh_v_noisy = _apply_noise(veh_p, veh_v[0], template.noise_std, rng, max_speed)
        if ped_v_noisy is not None:
            ped_p, ped_v = noisy_ped, ped_v_noisy
        if veh_v_noisy is not None:
            veh_p, veh_v = noisy_veh, veh_v_noisy
        scenario = f"{template.kind}-{i:04d}"
        vehicle_class = AV if i % 2 == 0 else HDV
        ped = _make_trajectory(f"{scenario}:ped", PEDESTRIAN, ped_p, ped_v)
        veh = _make_trajectory(f"{scenario}:veh", vehicle_class, veh_p, veh_v)
        envelope = min_pairwise_distance(ped, veh)
        if not critical and envelope < _MIN_SUBCRITICAL_ENVELOPE:
            raise GenerationError(
                f"scenario {i}: subcritical envelope {envelope:.2f} m is too tight"
            )
        pairs.append(
            InteractionPair(
                pedestrian=ped,
                vehicle=veh,
                vehicle_class=vehicle_class,
                min_distance=envelope,
                overlap_window=(0.0, HORIZON_STEPS / 10.0),
            )
        )
    return pairs


def corpus_trajectories(pairs: list[InteractionPair]) -> list[Trajectory]:
    """Flatten generated pairs into a trajectory list for CSV export."""
    out = []
    for pair in pairs:
        out.append(pair.pedestrian)
        out.append(pair.vehicle)
    return out
