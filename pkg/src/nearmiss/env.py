"""Pedestrian-centered kinematic environment over a replayed vehicle track.

The six-feature state holds longitudinal/lateral relative distance, the
pedestrian's own velocity, and the relative velocity against the
recorded vehicle. Actions are pedestrian accelerations; velocities
update explicitly and relative distances integrate the pedestrian's
velocity trapezoidally, with the vehicle replayed from the recording.
Collision and goal checks use true geometry: the simulated pedestrian's
absolute position against the recorded vehicle track.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .curvttc import CriticalEvent
from .errors import ContractError, DataError, InsufficientDataError
from .trajectories import DT, TrackPoint, common_frames

ACTION_LIMIT = 7.0  # m/s^2 per axis, mirrors the trajectory outlier bound
WINDOW = 10  # sliding memory window length (1 s at 10 Hz)
STATE_DIM = 6

DISTANCE = "distance"
ABS_VELOCITY = "abs_velocity"
REL_VELOCITY = "rel_velocity"
REWARD_KINDS = (DISTANCE, ABS_VELOCITY, REL_VELOCITY)

TERMINAL_NONE = "none"
TERMINAL_COLLISION = "collision"
TERMINAL_GOAL = "goal"
TERMINAL_HORIZON = "horizon"


@dataclass(frozen=True)
class EnvState:
    """Pedestrian-centered features: y is longitudinal, x lateral."""

    dlon: float
    vlon_ped: float
    dvlon: float
    dlat: float
    vlat_ped: float
    dvlat: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.dlon, self.vlon_ped, self.dvlon,
             self.dlat, self.vlat_ped, self.dvlat]
        )


@dataclass(frozen=True)
class Action:
    """Pedestrian acceleration command, clamped to +/- ACTION_LIMIT."""

    alon: float
    alat: float


@dataclass(frozen=True)
class RewardVariant:
    kind: str
    epsilon: float = 1e-7

    def __post_init__(self):
        if self.kind not in REWARD_KINDS:
            raise ContractError(f"unknown reward kind {self.kind!r}")
        if self.epsilon <= 0:
            raise ContractError("epsilon must be positive")


@dataclass(frozen=True)
class EpisodeConfig:
    dt: float = DT
    collision_dist: float = 1.3
    goal_radius: float = 0.5
    c_collision: float = -200.0
    c_goal: float = 100.0
    reward_scale: float = 100.0


@dataclass
class Transition:
    state: np.ndarray  # (WINDOW, STATE_DIM)
    mask: np.ndarray  # (WINDOW,)
    action: np.ndarray  # (2,) [alon, alat]
    reward: float  # scaled reward as inserted into the buffer
    next_state: np.ndarray
    next_mask: np.ndarray
    terminal: str


def clamp_action(alon: float, alat: float, limit: float = ACTION_LIMIT) -> Action:
    return Action(
        alon=float(min(max(alon, -limit), limit)),
        alat=float(min(max(alat, -limit), limit)),
    )


def make_state(ped: TrackPoint, veh: TrackPoint) -> EnvState:
    return EnvState(
        dlon=ped.y - veh.y,
        vlon_ped=ped.vy,
        dvlon=ped.vy - veh.vy,
        dlat=ped.x - veh.x,
        vlat_ped=ped.vx,
        dvlat=ped.vx - veh.vx,
    )


def step_dynamics(
    state: EnvState, action: Action, veh_v: tuple[float, float], dt: float = DT
) -> EnvState:
    """One explicit update: velocities advance by a*dt, relative distances
    integrate the pedestrian velocity trapezoidally, relative velocities
    subtract the vehicle velocity recorded at the start of the step.

    `veh_v` is (vx, vy) of the replayed vehicle at time t.
    """
    if not (math.isfinite(action.alon) and math.isfinite(action.alat)):
        raise ContractError("non-finite action")
    vlon_next = state.vlon_ped + action.alon * dt
    vlat_next = state.vlat_ped + action.alat * dt
    return EnvState(
        dlon=state.dlon + 0.5 * (state.vlon_ped + vlon_next) * dt,
        vlon_ped=vlon_next,
        dvlon=vlon_next - veh_v[1],
        dlat=state.dlat + 0.5 * (state.vlat_ped + vlat_next) * dt,
        vlat_ped=vlat_next,
        dvlat=vlat_next - veh_v[0],
    )


def core_reward(predicted: EnvState, actual: EnvState, variant: RewardVariant) -> float:
    """Negative normalized deviation between prediction and recording.

    Zero is the maximum, reached when both components match exactly.
    """
    eps = variant.epsilon
    if variant.kind == DISTANCE:
        pairs = ((predicted.dlon, actual.dlon), (predicted.dlat, actual.dlat))
    elif variant.kind == ABS_VELOCITY:
        pairs = (
            (predicted.vlon_ped, actual.vlon_ped),
            (predicted.vlat_ped, actual.vlat_ped),
        )
    else:
        pairs = ((predicted.dvlon, actual.dvlon), (predicted.dvlat, actual.dvlat))
    return -sum(abs(pred - true) / (abs(true) + eps) for pred, true in pairs)


def total_reward(core: float, event: str, cfg: EpisodeConfig) -> float:
    """Step reward after event override and buffer scaling."""
    if event == TERMINAL_COLLISION:
        value = cfg.c_collision
    elif event == TERMINAL_GOAL:
        value = cfg.c_goal
    else:
        value = core
    return value / cfg.reward_scale


class StateWindow:
    """Fixed-length history of states with a leading invalid-prefix mask."""

    def __init__(self, length: int = WINDOW):
        self.length = length
        self._states: list[np.ndarray] = []

    def push(self, state: EnvState):
        self._states.append(state.as_array())
        if len(self._states) > self.length:
            self._states.pop(0)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        window = np.zeros((self.length, STATE_DIM))
        mask = np.zeros(self.length)
        k = len(self._states)
        if k:
            window[self.length - k :] = np.stack(self._states)
            mask[self.length - k :] = 1.0
        return window, mask


@dataclass
class EventFrames:
    """Recorded pedestrian/vehicle samples aligned from the critical onset."""

    t: np.ndarray  # (T,)
    ped_xy: np.ndarray  # (T, 2)
    ped_v: np.ndarray  # (T, 2) columns (vx, vy)
    veh_xy: np.ndarray
    veh_v: np.ndarray

    def __len__(self) -> int:
        return int(self.t.size)

    def ped_point(self, i: int) -> TrackPoint:
        return TrackPoint(
            t=float(self.t[i]),
            x=float(self.ped_xy[i, 0]),
            y=float(self.ped_xy[i, 1]),
            vx=float(self.ped_v[i, 0]),
            vy=float(self.ped_v[i, 1]),
            heading=0.0,
        )

    def veh_point(self, i: int) -> TrackPoint:
        return TrackPoint(
            t=float(self.t[i]),
            x=float(self.veh_xy[i, 0]),
            y=float(self.veh_xy[i, 1]),
            vx=float(self.veh_v[i, 0]),
            vy=float(self.veh_v[i, 1]),
            heading=0.0,
        )

    def recorded_actions(self) -> np.ndarray:
        """(T-1, 2) [alon, alat] forward-difference accelerations that exactly
        reproduce the recorded velocity sequence under the explicit update."""
        dv = np.diff(self.ped_v, axis=0) / DT
        return np.column_stack([dv[:, 1], dv[:, 0]])


def event_frames(event: CriticalEvent) -> EventFrames:
    """Align the event's trajectories on shared frames from the onset."""
    if event.pair is None:
        raise DataError("critical event carries no trajectory pair")
    ped = event.pair.pedestrian
    veh = event.pair.vehicle
    times, ped_idx, veh_idx = common_frames(ped, veh)
    keep = times >= event.onset_t - 1e-9
    times, ped_idx, veh_idx = times[keep], ped_idx[keep], veh_idx[keep]
    if times.size < 2:
        raise InsufficientDataError("event has fewer than 2 frames beyond onset")
    return EventFrames(
        t=times,
        ped_xy=ped.xy[ped_idx],
        ped_v=ped.v[ped_idx],
        veh_xy=veh.xy[veh_idx],
        veh_v=veh.v[veh_idx],
    )


class Episode:
    """Stepper that replays the vehicle and simulates the pedestrian."""

    def __init__(self, frames: EventFrames, variant: RewardVariant, cfg: EpisodeConfig):
        self.frames = frames
        self.variant = variant
        self.cfg = cfg
        self.reset()

    def reset(self):
        f = self.frames
        self.i = 0
        self.state = make_state(f.ped_point(0), f.veh_point(0))
        self.sim_xy = f.ped_xy[0].copy()
        self.window = StateWindow()
        self.window.push(self.state)
        self.done = False

    def observation(self) -> tuple[np.ndarray, np.ndarray]:
        return self.window.arrays()

    def step(self, alon: float, alat: float) -> Transition:
        if self.done:
            raise ContractError("episode already terminated")
        f = self.frames
        cfg = self.cfg
        action = clamp_action(alon, alat)
        window, mask = self.window.arrays()

        prev = self.state
        nxt = step_dynamics(prev, action, (f.veh_v[self.i, 0], f.veh_v[self.i, 1]), cfg.dt)
        # absolute simulated position advances by the same trapezoid
        self.sim_xy = self.sim_xy + 0.5 * cfg.dt * np.array(
            [prev.vlat_ped + nxt.vlat_ped, prev.vlon_ped + nxt.vlon_ped]
        )
        self.i += 1
        self.state = nxt
        self.window.push(nxt)

        actual = make_state(f.ped_point(self.i), f.veh_point(self.i))
        core = core_reward(nxt, actual, self.variant)

        veh_now = f.veh_xy[self.i]
        goal_xy = f.ped_xy[-1]
        if float(np.hypot(*(self.sim_xy - veh_now))) < cfg.collision_dist:
            terminal = TERMINAL_COLLISION
        elif float(np.hypot(*(self.sim_xy - goal_xy))) < cfg.goal_radius:
            terminal = TERMINAL_GOAL
        elif self.i == len(f) - 1:
            terminal = TERMINAL_HORIZON
        else:
            terminal = TERMINAL_NONE
        if terminal != TERMINAL_NONE:
            self.done = True

        reward = total_reward(core, terminal, cfg)
        next_window, next_mask = self.window.arrays()
        return Transition(
            state=window,
            mask=mask,
            action=np.array([action.alon, action.alat]),
            reward=reward,
            next_state=next_window,
            next_mask=next_mask,
            terminal=terminal,
        )


def run_episode(
    event: CriticalEvent,
    policy,
    variant: RewardVariant,
    cfg: EpisodeConfig = EpisodeConfig(),
    noise_sigma: float = 0.0,
    rng_seed: int | np.random.Generator = 0,
) -> list[Transition]:
    """Roll one episode: at each step the policy maps the 10-step window to
    an action, Gaussian exploration noise is added, and the dynamics step.

    Deterministic given `rng_seed`. `policy` is a callable
    (window (10, 6), mask (10,)) -> (alon, alat).
    """
    rng = (
        rng_seed
        if isinstance(rng_seed, np.random.Generator)
        else np.random.default_rng(rng_seed)
    )
    frames = event if isinstance(event, EventFrames) else event_frames(event)
    episode = Episode(frames, variant, cfg)
    transitions = []
    while not episode.done:
        window, mask = episode.observation()
        alon, alat = np.asarray(policy(window, mask), dtype=np.float64)
        if noise_sigma > 0.0:
            noise = rng.normal(0.0, noise_sigma, 2)
            alon += noise[0]
            alat += noise[1]
        transitions.append(episode.step(alon, alat))
    return transitions


def recorded_action_policy(frames: EventFrames):
    """Policy that replays the recorded accelerations step by step."""
    actions = frames.recorded_actions()
    counter = {"i": 0}

    def policy(window, mask):
        i = min(counter["i"], len(actions) - 1)
        counter["i"] += 1
        return actions[i]

    return policy


def write_transition_log(path: str, episodes: list[list[Transition]]):
    """CSV log: (episode, t, six state fields, alon, alat, reward, terminal)."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["episode", "t", "dlon", "vlon_ped", "dvlon", "dlat",
                 "vlat_ped", "dvlat", "alon", "alat", "reward", "terminal"]
            )
            for e, transitions in enumerate(episodes):
                for k, tr in enumerate(transitions):
                    current = tr.state[-1]
                    writer.writerow(
                        [e, repr(round(k * DT, 10))]
                        + [repr(float(v)) for v in current]
                        + [repr(float(tr.action[0])), repr(float(tr.action[1])),
                           repr(float(tr.reward)), tr.terminal]
                    )
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
