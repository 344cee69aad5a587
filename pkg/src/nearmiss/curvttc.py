"""Curvilinear time-to-collision over predicted agent paths.

Per frame, the vehicle's next motion is modeled as the circumcircle arc
through its last three positions (falling back to a straight line when
they are collinear) and the pedestrian's as the interpolating quadratic
through its last three positions. Both predictions are stepped forward
in lockstep at constant speed along their paths; the first time the
predicted separation drops below the collision threshold is refined by
bisection and reported as the time-to-collision.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateStartError, InsufficientDataError
from .nn import write_json_atomic
from .trajectories import (
    DT,
    InteractionPair,
    common_frames,
    pair_from_dict,
    pair_to_dict,
)

INF = math.inf

DEFAULT_COLLISION_THRESHOLD = 1.3  # m: vehicle radius 1.0 + pedestrian radius 0.3
DEFAULT_HORIZON = 10.0  # s of forward prediction
DEFAULT_STEP = 0.1  # s between lockstep prediction samples
CRITICAL_TTC = 5.0  # s threshold for safety-critical flagging
CRITICAL_RUN = 10  # consecutive frames required below CRITICAL_TTC
FRONTAL_ANGLE = math.radians(135.0)

COINCIDENT_TOL = 1e-6  # m: all three fit points effectively identical
COLLINEAR_TOL = 1e-9  # relative circumcenter determinant cutoff


@dataclass
class ArcPath:
    """Constant-speed vehicle path: circular arc or straight line.

    The path is parameterized by tau seconds from its anchor; for a fit
    through points (p1, p2, p3) at consecutive samples, tau = 0 sits at p1
    and the path reaches p3 at tau = 2*dt.
    """

    mode: str  # "arc" | "line"
    center: np.ndarray | None = None
    radius: float = 0.0
    start_angle: float = 0.0
    angular_rate: float = 0.0
    origin: np.ndarray | None = None
    direction: np.ndarray | None = None
    line_speed: float = 0.0

    def position(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=np.float64)
        if self.mode == "arc":
            angle = self.start_angle + self.angular_rate * tau
            return self.center + self.radius * np.stack(
                [np.cos(angle), np.sin(angle)], axis=-1
            )
        return self.origin + self.line_speed * np.multiply.outer(tau, self.direction)

    def velocity(self, tau: float) -> np.ndarray:
        if self.mode == "arc":
            angle = self.start_angle + self.angular_rate * tau
            return self.radius * self.angular_rate * np.array(
                [-math.sin(angle), math.cos(angle)]
            )
        return self.line_speed * self.direction

    def speed(self) -> float:
        if self.mode == "arc":
            return abs(self.angular_rate) * self.radius
        return self.line_speed

    def advanced(self, tau0: float) -> "ArcPath":
        """Re-anchor the path so its tau = 0 sits tau0 seconds along it."""
        if self.mode == "arc":
            return ArcPath(
                mode="arc",
                center=self.center,
                radius=self.radius,
                start_angle=self.start_angle + self.angular_rate * tau0,
                angular_rate=self.angular_rate,
            )
        return ArcPath(
            mode="line",
            origin=self.origin + self.line_speed * tau0 * self.direction,
            direction=self.direction,
            line_speed=self.line_speed,
        )


@dataclass
class QuadPath:
    """Pedestrian path: per-coordinate quadratic in tau seconds from anchor."""

    coeffs_x: tuple[float, float, float]  # x(tau) = a*tau^2 + b*tau + c
    coeffs_y: tuple[float, float, float]

    def position(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=np.float64)
        ax, bx, cx = self.coeffs_x
        ay, by, cy = self.coeffs_y
        return np.stack(
            [ax * tau * tau + bx * tau + cx, ay * tau * tau + by * tau + cy], axis=-1
        )

    def velocity(self, tau: float) -> np.ndarray:
        ax, bx, _ = self.coeffs_x
        ay, by, _ = self.coeffs_y
        return np.array([2.0 * ax * tau + bx, 2.0 * ay * tau + by])

    def advanced(self, tau0: float) -> "QuadPath":
        def shift(coeffs):
            a, b, c = coeffs
            return (a, 2.0 * a * tau0 + b, a * tau0 * tau0 + b * tau0 + c)

        return QuadPath(coeffs_x=shift(self.coeffs_x), coeffs_y=shift(self.coeffs_y))


@dataclass
class CurvTTCSample:
    """Time-to-collision at one observation frame; math.inf means no breach."""

    t: float
    value: float
    conflict_type: str | None
    projected_collision_point: tuple[float, float] | None

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)


@dataclass
class CriticalEvent:
    """An interaction whose TTC stays below 5 s for >= 10 consecutive frames."""

    pair: InteractionPair | None
    onset_t: float
    frames_below_5s: int
    series: list[CurvTTCSample]


# ---------------------------------------------------------------------------
# path fitting
# ---------------------------------------------------------------------------


def fit_arc(p1, p2, p3, dt: float = DT) -> ArcPath:
    """Circumcircle arc through three consecutive positions.

    The angular rate is set so the arc sweeps p1 -> p3 in 2*dt. Collinear
    points fall back to a line at speed |p3 - p1| / (2*dt); coincident
    points yield a stationary line.
    """
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    p3 = np.asarray(p3, dtype=np.float64)
    spread = max(
        float(np.linalg.norm(p2 - p1)),
        float(np.linalg.norm(p3 - p2)),
        float(np.linalg.norm(p3 - p1)),
    )
    if spread < COINCIDENT_TOL:
        return ArcPath(
            mode="line",
            origin=p1.copy(),
            direction=np.array([1.0, 0.0]),
            line_speed=0.0,
        )
    cross = (p2[0] - p1[0]) * (p3[1] - p1[1]) - (p2[1] - p1[1]) * (p3[0] - p1[0])
    if abs(cross) < COLLINEAR_TOL * spread * spread:
        chord = p3 - p1
        length = float(np.linalg.norm(chord))
        if length < COINCIDENT_TOL:
            # p1 == p3 with p2 offset: no consistent direction, treat as stationary
            return ArcPath(
                mode="line",
                origin=p1.copy(),
                direction=np.array([1.0, 0.0]),
                line_speed=0.0,
            )
        return ArcPath(
            mode="line",
            origin=p1.copy(),
            direction=chord / length,
            line_speed=length / (2.0 * dt),
        )
    # circumcenter from the two perpendicular-bisector equations
    ax, ay = p1
    bx, by = p2
    cx, cy = p3
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    ux = (
        (ax * ax + ay * ay) * (by - cy)
        + (bx * bx + by * by) * (cy - ay)
        + (cx * cx + cy * cy) * (ay - by)
    ) / d
    uy = (
        (ax * ax + ay * ay) * (cx - bx)
        + (bx * bx + by * by) * (ax - cx)
        + (cx * cx + cy * cy) * (bx - ax)
    ) / d
    center = np.array([ux, uy])
    radius = float(np.linalg.norm(p1 - center))
    theta1 = math.atan2(p1[1] - uy, p1[0] - ux)
    theta2 = math.atan2(p2[1] - uy, p2[0] - ux)
    theta3 = math.atan2(p3[1] - uy, p3[0] - ux)
    swept = _wrap_angle(theta2 - theta1) + _wrap_angle(theta3 - theta2)
    return ArcPath(
        mode="arc",
        center=center,
        radius=radius,
        start_angle=theta1,
        angular_rate=swept / (2.0 * dt),
    )


def _wrap_angle(angle: float) -> float:
    return math.atan2(math.sin(angle), math.cos(angle))


def fit_quadratic(p1, p2, p3, dt: float = DT) -> QuadPath:
    """Unique per-coordinate quadratic through three consecutive positions."""
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    p3 = np.asarray(p3, dtype=np.float64)
    a = (p1 - 2.0 * p2 + p3) / (2.0 * dt * dt)
    b = (-3.0 * p1 + 4.0 * p2 - p3) / (2.0 * dt)
    return QuadPath(
        coeffs_x=(float(a[0]), float(b[0]), float(p1[0])),
        coeffs_y=(float(a[1]), float(b[1]), float(p1[1])),
    )


# ---------------------------------------------------------------------------
# collision projection
# ---------------------------------------------------------------------------


def curvttc_at(
    veh_path: ArcPath,
    ped_path: QuadPath,
    threshold: float = DEFAULT_COLLISION_THRESHOLD,
    horizon: float = DEFAULT_HORIZON,
    step: float = DEFAULT_STEP,
) -> CurvTTCSample:
    """First lockstep time at which the predicted separation drops below
    `threshold`, refined by bisection between prediction samples.

    Under the constant-speed-along-path model the reported value equals
    the vehicle's path length to the projected collision point divided by
    its speed. No breach within `horizon` yields math.inf.
    """
    if threshold <= 0 or horizon <= 0 or step <= 0:
        raise DataError("threshold, horizon, and step must all be positive")
    taus = np.arange(0.0, horizon + 0.5 * step, step)
    taus[-1] = min(taus[-1], horizon)
    gap = veh_path.position(taus) - ped_path.position(taus)
    dist = np.hypot(gap[:, 0], gap[:, 1])
    below = np.flatnonzero(dist < threshold)
    if below.size == 0:
        return CurvTTCSample(
            t=0.0, value=INF, conflict_type=None, projected_collision_point=None
        )
    k = int(below[0])
    if k == 0:
        if veh_path.speed() <= 0.0:
            raise DegenerateStartError(
                "prediction starts inside the collision threshold with a "
                "stationary vehicle"
            )
        tau_star = 0.0
    else:
        tau_star = _bisect_crossing(veh_path, ped_path, threshold,
                                    taus[k - 1], taus[k])
    point = veh_path.position(tau_star)
    return CurvTTCSample(
        t=0.0,
        value=float(tau_star),
        conflict_type=_classify_conflict(veh_path, ped_path, tau_star),
        projected_collision_point=(float(point[0]), float(point[1])),
    )


def _bisect_crossing(veh_path, ped_path, threshold, lo, hi, iters: int = 60):
    """Bisection for the separation-threshold crossing in (lo, hi]."""

    def excess(tau):
        d = veh_path.position(tau) - ped_path.position(tau)
        return math.hypot(d[0], d[1]) - threshold

    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0.0:
            hi = mid
        else:
            lo = mid
    return hi


def _classify_conflict(veh_path, ped_path, tau: float) -> str:
    """Frontal when the velocity directions oppose by more than 135 degrees."""
    v_veh = veh_path.velocity(tau)
    v_ped = ped_path.velocity(tau)
    n_veh = float(np.linalg.norm(v_veh))
    n_ped = float(np.linalg.norm(v_ped))
    if n_veh < 1e-12 or n_ped < 1e-12:
        return "lateral"
    cosine = float(np.dot(v_veh, v_ped)) / (n_veh * n_ped)
    angle = math.acos(min(1.0, max(-1.0, cosine)))
    return "frontal" if angle > FRONTAL_ANGLE else "lateral"


def curvttc_series(
    pair: InteractionPair,
    threshold: float = DEFAULT_COLLISION_THRESHOLD,
    horizon: float = DEFAULT_HORIZON,
    step: float = DEFAULT_STEP,
) -> list[CurvTTCSample]:
    """One TTC sample per frame where both agents have three consecutive
    observations ending at that frame; fits are redone from the latest
    three observations and re-anchored to the current position."""
    times, ped_idx, veh_idx = common_frames(pair.pedestrian, pair.vehicle)
    if times.size < 3:
        raise InsufficientDataError(
            "overlap shorter than 3 frames, cannot fit prediction paths"
        )
    steps = np.rint(times / DT).astype(np.int64)
    ped_xy = pair.pedestrian.xy[ped_idx]
    veh_xy = pair.vehicle.xy[veh_idx]
    samples = []
    for i in range(2, times.size):
        if steps[i] - steps[i - 1] != 1 or steps[i - 1] - steps[i - 2] != 1:
            continue
        veh_path = fit_arc(veh_xy[i - 2], veh_xy[i - 1], veh_xy[i]).advanced(2.0 * DT)
        ped_path = fit_quadratic(ped_xy[i - 2], ped_xy[i - 1], ped_xy[i]).advanced(2.0 * DT)
        sample = curvttc_at(veh_path, ped_path, threshold, horizon, step)
        sample.t = float(times[i])
        samples.append(sample)
    return samples


def flag_critical(
    series: list[CurvTTCSample],
    pair: InteractionPair | None = None,
    ttc_threshold: float = CRITICAL_TTC,
    min_frames: int = CRITICAL_RUN,
) -> CriticalEvent | None:
    """Emit an event for the first run of >= min_frames consecutive samples
    strictly below ttc_threshold; the run length is reported in full."""
    run_start = None
    run_length = 0
    for i, sample in enumerate(series):
        if sample.value < ttc_threshold:
            if run_start is None:
                run_start = i
            run_length += 1
        else:
            if run_length >= min_frames:
                break
            run_start = None
            run_length = 0
    if run_start is None or run_length < min_frames:
        return None
    return CriticalEvent(
        pair=pair,
        onset_t=series[run_start].t,
        frames_below_5s=run_length,
        series=list(series),
    )


def find_critical_event(
    pair: InteractionPair,
    threshold: float = DEFAULT_COLLISION_THRESHOLD,
    horizon: float = DEFAULT_HORIZON,
    step: float = DEFAULT_STEP,
) -> CriticalEvent | None:
    return flag_critical(curvttc_series(pair, threshold, horizon, step), pair=pair)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _value_to_text(value: float) -> str:
    return "inf" if math.isinf(value) else repr(float(value))


def write_series_csv(path: str, labeled_series: list[tuple[str, list[CurvTTCSample]]]):
    """Columns (pair, t, curvttc, conflict_type); infinity spelled "inf"."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["pair", "t", "curvttc", "conflict_type"])
            for label, series in labeled_series:
                for sample in series:
                    writer.writerow(
                        [
                            label,
                            repr(float(sample.t)),
                            _value_to_text(sample.value),
                            sample.conflict_type or "none",
                        ]
                    )
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def sample_to_dict(sample: CurvTTCSample) -> dict:
    return {
        "t": sample.t,
        "value": "inf" if math.isinf(sample.value) else sample.value,
        "conflict_type": sample.conflict_type,
        "projected_collision_point": (
            list(sample.projected_collision_point)
            if sample.projected_collision_point is not None
            else None
        ),
    }


def sample_from_dict(payload: dict) -> CurvTTCSample:
    raw = payload["value"]
    value = INF if raw == "inf" else float(raw)
    point = payload.get("projected_collision_point")
    return CurvTTCSample(
        t=float(payload["t"]),
        value=value,
        conflict_type=payload.get("conflict_type"),
        projected_collision_point=tuple(point) if point is not None else None,
    )


def event_to_dict(event: CriticalEvent) -> dict:
    return {
        "onset_t": event.onset_t,
        "frames_below_5s": event.frames_below_5s,
        "series": [sample_to_dict(s) for s in event.series],
        "pair": pair_to_dict(event.pair) if event.pair is not None else None,
    }


def event_from_dict(payload: dict) -> CriticalEvent:
    return CriticalEvent(
        pair=pair_from_dict(payload["pair"]) if payload.get("pair") else None,
        onset_t=float(payload["onset_t"]),
        frames_below_5s=int(payload["frames_below_5s"]),
        series=[sample_from_dict(s) for s in payload["series"]],
    )


def save_events(events: list[CriticalEvent], path: str):
    write_json_atomic(
        {"format_version": 1, "events": [event_to_dict(e) for e in events]}, path
    )


def load_events(path: str) -> list[CriticalEvent]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return [event_from_dict(entry) for entry in payload["events"]]
