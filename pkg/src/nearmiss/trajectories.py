"""Trajectory domain types, CSV ingestion, kinematics, and interaction extraction.

Tracks are sampled at 10 Hz. The CSV schema has one row per (track,
timestep): scenario_id, track_id, object_type, timestep, position_x,
position_y, heading, velocity_x, velocity_y. Axis convention: x is the
lateral axis, y the longitudinal axis, both in the data's world frame.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InsufficientDataError, SchemaError

PEDESTRIAN = "pedestrian"
AV = "av"
HDV = "hdv"
AGENT_CLASSES = (PEDESTRIAN, AV, HDV)
VEHICLE_CLASSES = (AV, HDV)

DT = 0.1
MAX_SPEED = 90.0  # m/s, outlier bound
MAX_ACCEL = 7.0  # m/s^2, outlier bound
DEFAULT_D_THRESH = 0.1  # m, high-proximity interaction bound

CSV_COLUMNS = (
    "scenario_id",
    "track_id",
    "object_type",
    "timestep",
    "position_x",
    "position_y",
    "heading",
    "velocity_x",
    "velocity_y",
)


@dataclass(frozen=True)
class TrackPoint:
    """One 10 Hz sample of an agent's state."""

    t: float
    x: float
    y: float
    vx: float
    vy: float
    heading: float


@dataclass(frozen=True)
class Kinematics:
    """Derived speed and finite-difference acceleration at one sample."""

    speed: float
    ax: float
    ay: float


@dataclass
class Trajectory:
    """Time-ordered samples for a single agent.

    Arrays are parallel and validated to be finite with strictly
    increasing non-negative timestamps. Spacing may contain gaps; use
    :func:`split_contiguous` before finite-difference work.
    """

    agent_id: str
    agent_class: str
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    heading: np.ndarray

    def __post_init__(self):
        for name in ("t", "x", "y", "vx", "vy", "heading"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n = self.t.size
        for name in ("x", "y", "vx", "vy", "heading"):
            if getattr(self, name).size != n:
                raise DataError(f"trajectory {self.agent_id}: ragged field {name}")
        if self.agent_class not in AGENT_CLASSES:
            raise DataError(
                f"trajectory {self.agent_id}: unknown agent class {self.agent_class!r}"
            )
        values = np.concatenate([self.t, self.x, self.y, self.vx, self.vy, self.heading])
        if not np.all(np.isfinite(values)):
            raise DataError(f"trajectory {self.agent_id}: non-finite values")
        if n and self.t[0] < 0:
            raise DataError(f"trajectory {self.agent_id}: negative timestamp")
        if n > 1 and not np.all(np.diff(self.t) > 0):
            raise DataError(f"trajectory {self.agent_id}: non-monotone timestamps")

    def __len__(self) -> int:
        return int(self.t.size)

    def point(self, i: int) -> TrackPoint:
        return TrackPoint(
            t=float(self.t[i]),
            x=float(self.x[i]),
            y=float(self.y[i]),
            vx=float(self.vx[i]),
            vy=float(self.vy[i]),
            heading=float(self.heading[i]),
        )

    @property
    def points(self) -> list[TrackPoint]:
        return [self.point(i) for i in range(len(self))]

    @property
    def xy(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])

    @property
    def v(self) -> np.ndarray:
        return np.column_stack([self.vx, self.vy])

    def decisteps(self) -> np.ndarray:
        """Timestamps as integer multiples of 0.1 s (exact frame indices)."""
        return np.rint(self.t / DT).astype(np.int64)

    def slice(self, lo: int, hi: int) -> "Trajectory":
        return Trajectory(
            agent_id=self.agent_id,
            agent_class=self.agent_class,
            t=self.t[lo:hi],
            x=self.x[lo:hi],
            y=self.y[lo:hi],
            vx=self.vx[lo:hi],
            vy=self.vy[lo:hi],
            heading=self.heading[lo:hi],
        )


@dataclass
class InteractionPair:
    """A pedestrian-vehicle pair whose trajectories pass within d_thresh."""

    pedestrian: Trajectory
    vehicle: Trajectory
    vehicle_class: str
    min_distance: float
    overlap_window: tuple[float, float]

    def __post_init__(self):
        if self.vehicle_class not in VEHICLE_CLASSES:
            raise DataError(f"invalid vehicle class {self.vehicle_class!r}")
        if self.vehicle_class != self.vehicle.agent_class:
            raise DataError(
                f"vehicle class {self.vehicle_class!r} does not match "
                f"trajectory class {self.vehicle.agent_class!r}"
            )
        if self.min_distance < 0:
            raise DataError("negative minimum distance")
        if self.overlap_window[1] < self.overlap_window[0]:
            raise DataError("empty overlap window")


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------


def load_scenario(path: str, schema: dict[str, str] | None = None) -> list[Trajectory]:
    """Read a scenario CSV into one Trajectory per (scenario, track).

    `schema` optionally maps canonical column names to the file's actual
    header names. Timestep indices are converted to seconds at 10 Hz.
    Rows of one track must arrive in strictly increasing timestep order.
    """
    mapping = {name: name for name in CSV_COLUMNS}
    if schema:
        mapping.update(schema)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for canonical in CSV_COLUMNS:
            if mapping[canonical] not in header:
                raise SchemaError(
                    f"{os.path.basename(path)}: missing column {mapping[canonical]!r}"
                )
        groups: dict[tuple[str, str], dict[str, list]] = {}
        for line_no, row in enumerate(reader, start=2):
            try:
                scenario = row[mapping["scenario_id"]]
                track = row[mapping["track_id"]]
                object_type = row[mapping["object_type"]].strip().lower()
                timestep = int(row[mapping["timestep"]])
                values = [
                    float(row[mapping[c]])
                    for c in ("position_x", "position_y", "heading",
                              "velocity_x", "velocity_y")
                ]
            except (TypeError, ValueError) as exc:
                raise DataError(
                    f"{os.path.basename(path)}:{line_no}: malformed row ({exc})"
                ) from None
            if object_type not in AGENT_CLASSES:
                raise DataError(
                    f"{os.path.basename(path)}:{line_no}: "
                    f"unknown object_type {object_type!r}"
                )
            key = (scenario, track)
            group = groups.setdefault(
                key,
                {"class": object_type, "steps": [], "rows": []},
            )
            if group["class"] != object_type:
                raise DataError(f"track {track!r}: inconsistent object_type")
            if group["steps"] and timestep <= group["steps"][-1]:
                raise DataError(
                    f"track {track!r}: non-monotone timestep {timestep} "
                    f"after {group['steps'][-1]}"
                )
            group["steps"].append(timestep)
            group["rows"].append(values)

    trajectories = []
    for (scenario, track), group in groups.items():
        steps = np.asarray(group["steps"], dtype=np.int64)
        rows = np.asarray(group["rows"], dtype=np.float64)
        trajectories.append(
            Trajectory(
                agent_id=f"{scenario}:{track}",
                agent_class=group["class"],
                t=steps / 10.0,
                x=rows[:, 0],
                y=rows[:, 1],
                heading=rows[:, 2],
                vx=rows[:, 3],
                vy=rows[:, 4],
            )
        )
    return trajectories


def save_scenario(trajectories: list[Trajectory], path: str):
    """Write trajectories back to the scenario CSV schema (round-trip safe)."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for traj in trajectories:
                scenario, _, track = traj.agent_id.partition(":")
                if not track:
                    scenario, track = "scenario", traj.agent_id
                steps = traj.decisteps()
                for i in range(len(traj)):
                    writer.writerow(
                        [
                            scenario,
                            track,
                            traj.agent_class,
                            int(steps[i]),
                            repr(float(traj.x[i])),
                            repr(float(traj.y[i])),
                            repr(float(traj.heading[i])),
                            repr(float(traj.vx[i])),
                            repr(float(traj.vy[i])),
                        ]
                    )
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def split_contiguous(traj: Trajectory) -> list[Trajectory]:
    """Split a trajectory with missing timesteps into uniform 0.1 s segments."""
    if len(traj) == 0:
        return []
    steps = traj.decisteps()
    breaks = np.flatnonzero(np.diff(steps) != 1)
    bounds = [0, *(breaks + 1), len(traj)]
    segments = []
    for idx, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:])):
        segment = traj.slice(lo, hi)
        if len(bounds) > 2:
            segment.agent_id = f"{traj.agent_id}#{idx}"
        segments.append(segment)
    return segments


# ---------------------------------------------------------------------------
# kinematics and filtering
# ---------------------------------------------------------------------------


def _require_uniform(traj: Trajectory):
    if len(traj) < 2:
        raise InsufficientDataError(
            f"trajectory {traj.agent_id}: need at least 2 points"
        )
    if np.any(np.diff(traj.decisteps()) != 1):
        raise DataError(
            f"trajectory {traj.agent_id}: gapped timesteps, split segments first"
        )


def finite_difference_accels(traj: Trajectory) -> np.ndarray:
    """(n, 2) accelerations: central differences inside, one-sided at the ends."""
    _require_uniform(traj)
    v = traj.v
    a = np.empty_like(v)
    a[0] = (v[1] - v[0]) / DT
    a[-1] = (v[-1] - v[-2]) / DT
    if len(traj) > 2:
        a[1:-1] = (v[2:] - v[:-2]) / (2.0 * DT)
    return a


def derive_kinematics(traj: Trajectory) -> list[Kinematics]:
    """Per-sample speed and finite-difference acceleration."""
    accel = finite_difference_accels(traj)
    speed = np.hypot(traj.vx, traj.vy)
    return [
        Kinematics(speed=float(speed[i]), ax=float(accel[i, 0]), ay=float(accel[i, 1]))
        for i in range(len(traj))
    ]


def filter_outliers(
    trajectories: list[Trajectory],
    max_speed: float = MAX_SPEED,
    max_accel: float = MAX_ACCEL,
) -> list[Trajectory]:
    """Drop trajectories whose peak speed or acceleration exceeds the bounds.

    Comparisons are strict: a trajectory is removed only when some sample
    has speed > max_speed or acceleration magnitude > max_accel.
    """
    kept = []
    for traj in trajectories:
        speed = np.hypot(traj.vx, traj.vy)
        if speed.size and speed.max() > max_speed:
            continue
        if len(traj) >= 2:
            accel = finite_difference_accels(traj)
            if np.hypot(accel[:, 0], accel[:, 1]).max() > max_accel:
                continue
        kept.append(traj)
    return kept


# ---------------------------------------------------------------------------
# interaction extraction
# ---------------------------------------------------------------------------


def min_pairwise_distance(a: Trajectory, b: Trajectory) -> float:
    """Smallest Euclidean distance over all (not necessarily simultaneous)
    point pairs of the two trajectories."""
    diff = a.xy[:, None, :] - b.xy[None, :, :]
    return float(np.sqrt((diff * diff).sum(axis=2)).min())


def extract_interactions(
    pedestrians: list[Trajectory],
    vehicles: list[Trajectory],
    d_thresh: float = DEFAULT_D_THRESH,
) -> list[InteractionPair]:
    """Pairs whose spatial envelopes pass strictly within d_thresh.

    Pairs without any temporal overlap are skipped: downstream per-frame
    analysis has nothing to align.
    """
    if d_thresh <= 0:
        raise DataError(f"d_thresh must be positive, got {d_thresh}")
    pairs = []
    for ped in pedestrians:
        for veh in vehicles:
            if len(ped) == 0 or len(veh) == 0:
                continue
            overlap = (max(ped.t[0], veh.t[0]), min(ped.t[-1], veh.t[-1]))
            if overlap[1] < overlap[0]:
                continue
            dist = min_pairwise_distance(ped, veh)
            if dist < d_thresh:
                pairs.append(
                    InteractionPair(
                        pedestrian=ped,
                        vehicle=veh,
                        vehicle_class=veh.agent_class,
                        min_distance=dist,
                        overlap_window=overlap,
                    )
                )
    pairs.sort(key=lambda p: (p.pedestrian.agent_id, p.vehicle.agent_id))
    return pairs


# ---------------------------------------------------------------------------
# JSON round-trip for downstream modules
# ---------------------------------------------------------------------------


def trajectory_to_dict(traj: Trajectory) -> dict:
    return {
        "agent_id": traj.agent_id,
        "agent_class": traj.agent_class,
        "points": [
            [float(traj.t[i]), float(traj.x[i]), float(traj.y[i]),
             float(traj.vx[i]), float(traj.vy[i]), float(traj.heading[i])]
            for i in range(len(traj))
        ],
    }


def trajectory_from_dict(payload: dict) -> Trajectory:
    points = np.asarray(payload["points"], dtype=np.float64).reshape(-1, 6)
    return Trajectory(
        agent_id=payload["agent_id"],
        agent_class=payload["agent_class"],
        t=points[:, 0],
        x=points[:, 1],
        y=points[:, 2],
        vx=points[:, 3],
        vy=points[:, 4],
        heading=points[:, 5],
    )


def pair_to_dict(pair: InteractionPair) -> dict:
    return {
        "pedestrian": trajectory_to_dict(pair.pedestrian),
        "vehicle": trajectory_to_dict(pair.vehicle),
        "vehicle_class": pair.vehicle_class,
        "min_distance": pair.min_distance,
        "overlap_window": list(pair.overlap_window),
    }


def pair_from_dict(payload: dict) -> InteractionPair:
    return InteractionPair(
        pedestrian=trajectory_from_dict(payload["pedestrian"]),
        vehicle=trajectory_from_dict(payload["vehicle"]),
        vehicle_class=payload["vehicle_class"],
        min_distance=float(payload["min_distance"]),
        overlap_window=tuple(payload["overlap_window"]),
    )


def save_interactions(pairs: list[InteractionPair], path: str):
    from .nn import write_json_atomic

    write_json_atomic(
        {"format_version": 1, "pairs": [pair_to_dict(p) for p in pairs]}, path
    )


def load_interactions(path: str) -> list[InteractionPair]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return [pair_from_dict(entry) for entry in payload["pairs"]]


def common_frames(a: Trajectory, b: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Frame times present in both trajectories, with index maps into each."""
    steps_a = a.decisteps()
    steps_b = b.decisteps()
    shared, idx_a, idx_b = np.intersect1d(steps_a, steps_b, return_indices=True)
    return shared / 10.0, idx_a, idx_b
