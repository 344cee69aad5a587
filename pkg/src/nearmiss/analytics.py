"""Evaluation metrics and safety analytics.

Covers trajectory error metrics (RMSE/ADE/FDE), reaction-time lag
estimation, two-sample distribution tests, conflict-rate grids over
initial-speed bins, rule-based yielding classification, and 1-D k-means
thresholding of speed distributions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ContractError, DataError, InsufficientDataError
from .trajectories import DT

# published operating thresholds for the yielding quadrant analysis
VEHICLE_SPEED_THRESHOLD = 3.5  # m/s
PEDESTRIAN_SPEED_THRESHOLD = 1.9  # m/s

CONFLICT_ONSET_TTC = 10.0  # s: entry into the collision-risk region
CONFLICT_TTC = 2.0  # s: imminent-collision flag
GRID_BINS = 8
GRID_BIN_WIDTH = 0.5  # m/s, bins covering 0-4 m/s

VEHICLE_YIELD = "vehicle_yield"
PEDESTRIAN_YIELD = "pedestrian_yield"
UNCLASSIFIED = "unclassified"


# ---------------------------------------------------------------------------
# error metrics
# ---------------------------------------------------------------------------


def rmse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ContractError(f"length mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise InsufficientDataError("rmse needs at least one sample")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def ade_fde(pred_trajs, truth_trajs) -> tuple[float, float]:
    """Mean pointwise and mean final-step Euclidean errors over (T, 2) pairs."""
    if len(pred_trajs) != len(truth_trajs) or not pred_trajs:
        raise ContractError("need matching non-empty trajectory sets")
    step_errors = []
    final_errors = []
    for pred, truth in zip(pred_trajs, truth_trajs):
        pred = np.asarray(pred, dtype=np.float64)
        truth = np.asarray(truth, dtype=np.float64)
        if pred.shape != truth.shape:
            raise ContractError(
                f"horizon mismatch within a pair: {pred.shape} vs {truth.shape}"
            )
        err = np.hypot(*(pred - truth).T)
        step_errors.append(err)
        final_errors.append(err[-1])
    ade = float(np.mean(np.concatenate(step_errors)))
    fde = float(np.mean(final_errors))
    return ade, fde


@dataclass
class ErrorReport:
    rmse_vlon: float
    rmse_alon: float
    rmse_dlon: float
    rmse_vlat: float
    rmse_alat: float
    rmse_dlat: float
    ade: float
    fde: float


# ---------------------------------------------------------------------------
# reaction time
# ---------------------------------------------------------------------------


@dataclass
class ReactionEstimate:
    t_d: float | None
    onset_frame: int
    qualifying: bool


def reaction_time(
    ped_accel,
    veh_accel,
    epsilon: float = 0.05,
    max_lag: float = 3.0,
    dt: float = DT,
) -> ReactionEstimate:
    """Lag that best aligns pedestrian acceleration with the delayed vehicle
    acceleration.

    Frames qualify when the pedestrian's frame-to-frame acceleration
    change exceeds `epsilon` in L2 norm; only frames for which every
    candidate lag is in range are aggregated, so all lags compete on the
    same frame set. Ties resolve toward the smallest lag.
    """
    ped = np.asarray(ped_accel, dtype=np.float64)
    veh = np.asarray(veh_accel, dtype=np.float64)
    if ped.shape != veh.shape or ped.ndim != 2 or ped.shape[1] != 2:
        raise ContractError("acceleration series must be matching (T, 2) arrays")
    if ped.shape[0] < 2:
        raise InsufficientDataError("need at least 2 frames")
    max_lag_frames = int(round(max_lag / dt))
    change = np.hypot(*(np.diff(ped, axis=0)).T)
    qualifying = np.flatnonzero(change > epsilon) + 1
    qualifying = qualifying[qualifying >= max_lag_frames]
    if qualifying.size == 0:
        return ReactionEstimate(t_d=None, onset_frame=-1, qualifying=False)
    best_lag = 0
    best_cost = math.inf
    for lag in range(0, max_lag_frames + 1):
        diff = ped[qualifying] - veh[qualifying - lag]
        cost = float(np.hypot(diff[:, 0], diff[:, 1]).sum())
        if cost < best_cost - 1e-12:
            best_cost = cost
            best_lag = lag
    return ReactionEstimate(
        t_d=best_lag * dt,
        onset_frame=int(qualifying[0]),
        qualifying=True,
    )


# ---------------------------------------------------------------------------
# two-sample tests
# ---------------------------------------------------------------------------


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise InsufficientDataError("both samples must be non-empty")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    d_stat = float(np.max(np.abs(cdf_a - cdf_b)))
    n_eff = a.size * b.size / (a.size + b.size)
    lam = math.sqrt(n_eff) * d_stat
    return d_stat, _kolmogorov_sf(lam)


def _kolmogorov_sf(lam: float, terms: int = 100) -> float:
    """Asymptotic Kolmogorov survival function, truncated alternating series."""
    if lam < 1e-8:
        return 1.0
    k = np.arange(1, terms + 1)
    total = 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * (k * lam) ** 2))
    return float(min(1.0, max(0.0, total)))


def welch_t(a, b) -> tuple[float, float]:
    """Welch's unequal-variance t statistic with a two-sided p-value."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise InsufficientDataError("each sample needs at least 2 values")
    var_a = a.var(ddof=1)
    var_b = b.var(ddof=1)
    se_sq = var_a / a.size + var_b / b.size
    diff = a.mean() - b.mean()
    if se_sq == 0.0:
        if diff == 0.0:
            return 0.0, 1.0
        se_sq = 1e-300  # degenerate zero-variance pair with separated means
    t_stat = float(diff / math.sqrt(se_sq))
    if var_a == 0.0 and var_b == 0.0:
        df = float(a.size + b.size - 2)
    else:
        df = se_sq**2 / (
            (var_a / a.size) ** 2 / (a.size - 1)
            + (var_b / b.size) ** 2 / (b.size - 1)
        )
    p = float(2.0 * special.stdtr(df, -abs(t_stat)))
    return t_stat, p


# ---------------------------------------------------------------------------
# conflict grid
# ---------------------------------------------------------------------------


@dataclass
class SafetySequence:
    """Per-frame view of one interaction used by the safety analytics."""

    t: np.ndarray  # (T,)
    curvttc: np.ndarray  # (T,) math.inf where no collision is projected
    ped_xy: np.ndarray  # (T, 2)
    ped_v: np.ndarray  # (T, 2)
    veh_xy: np.ndarray  # (T, 2)
    veh_v: np.ndarray  # (T, 2)

    def onset_index(self, onset_ttc: float = CONFLICT_ONSET_TTC) -> int | None:
        below = np.flatnonzero(np.asarray(self.curvttc) < onset_ttc)
        return int(below[0]) if below.size else None


@dataclass
class ConflictGrid:
    """(veh_bin, ped_bin) -> counts and conflict rate over 0-4 m/s bins."""

    counts: np.ndarray  # (GRID_BINS, GRID_BINS) int
    conflicts: np.ndarray  # (GRID_BINS, GRID_BINS) int
    rates: np.ndarray  # (GRID_BINS, GRID_BINS) float, NaN where count == 0
    excluded: int  # sequences that never enter the risk region


def _speed_bin(speed: float) -> int:
    # speeds at or above 4 m/s clip into the top bin
    return min(int(speed / GRID_BIN_WIDTH), GRID_BINS - 1)


def conflict_grid(sequences: list[SafetySequence]) -> ConflictGrid:
    """Conflict rate per initial-speed bin.

    Onset is the first frame below the 10 s risk threshold; the sequence
    counts as a conflict when any frame drops below 2 s. Sequences that
    never reach the risk region are excluded and tallied.
    """
    counts = np.zeros((GRID_BINS, GRID_BINS), dtype=np.int64)
    conflicts = np.zeros((GRID_BINS, GRID_BINS), dtype=np.int64)
    excluded = 0
    for seq in sequences:
        onset = seq.onset_index()
        if onset is None:
            excluded += 1
            continue
        veh_speed = float(np.hypot(*seq.veh_v[onset]))
        ped_speed = float(np.hypot(*seq.ped_v[onset]))
        i, j = _speed_bin(veh_speed), _speed_bin(ped_speed)
        counts[i, j] += 1
        if np.any(np.asarray(seq.curvttc) < CONFLICT_TTC):
            conflicts[i, j] += 1
    with np.errstate(invalid="ignore"):
        rates = np.where(counts > 0, conflicts / np.maximum(counts, 1), np.nan)
    return ConflictGrid(counts=counts, conflicts=conflicts, rates=rates, excluded=excluded)


# ---------------------------------------------------------------------------
# yielding classification
# ---------------------------------------------------------------------------


@dataclass
class YieldEvidence:
    vehicle_decel: float  # most negative speed derivative after onset, m/s^2
    relative_speed_reduction: float  # fraction of the onset relative speed shed
    pedestrian_speed_change: float  # most negative speed change vs onset, m/s
    backward_displacement: float  # m moved against the onset walking direction
    pedestrian_path_length: float  # m walked after onset
    vehicle_path_length: float  # m driven after onset


@dataclass
class YieldLabel:
    label: str
    evidence: YieldEvidence
    both_matched: bool = False


def measure_yield_evidence(seq: SafetySequence, onset: int) -> YieldEvidence:
    ped_speed = np.hypot(*seq.ped_v[onset:].T)
    veh_speed = np.hypot(*seq.veh_v[onset:].T)
    rel_speed = np.hypot(*(seq.ped_v[onset:] - seq.veh_v[onset:]).T)

    veh_decel = float(np.diff(veh_speed).min() / DT) if veh_speed.size > 1 else 0.0
    if rel_speed[0] > 1e-9:
        rel_reduction = float((rel_speed[0] - rel_speed.min()) / rel_speed[0])
    else:
        rel_reduction = 0.0
    ped_change = float((ped_speed - ped_speed[0]).min())

    displacement = seq.ped_xy[onset:] - seq.ped_xy[onset]
    v0 = seq.ped_v[onset]
    speed0 = float(np.hypot(*v0))
    if speed0 > 1e-9:
        along = displacement @ (v0 / speed0)
        backward = float(max(0.0, -along.min()))
    else:
        backward = 0.0

    ped_path = float(np.hypot(*np.diff(seq.ped_xy[onset:], axis=0).T).sum())
    veh_path = float(np.hypot(*np.diff(seq.veh_xy[onset:], axis=0).T).sum())
    return YieldEvidence(
        vehicle_decel=veh_decel,
        relative_speed_reduction=rel_reduction,
        pedestrian_speed_change=ped_change,
        backward_displacement=backward,
        pedestrian_path_length=ped_path,
        vehicle_path_length=veh_path,
    )


def label_from_evidence(ev: YieldEvidence) -> YieldLabel:
    """Apply the yielding rules; both rule sets matching degrades to
    unclassified with a diagnostic flag."""
    vehicle_yield = (
        (ev.vehicle_decel <= -2.5 or ev.relative_speed_reduction >= 0.35)
        and ev.pedestrian_speed_change > -0.3
        and ev.pedestrian_path_length >= 3.0
    )
    pedestrian_yield = (
        (ev.pedestrian_speed_change <= -0.5 or ev.backward_displacement >= 0.3)
        and ev.vehicle_decel > -1.5
        and ev.relative_speed_reduction < 0.20
        and ev.vehicle_path_length >= 8.0
    )
    if vehicle_yield and pedestrian_yield:
        return YieldLabel(label=UNCLASSIFIED, evidence=ev, both_matched=True)
    if vehicle_yield:
        return YieldLabel(label=VEHICLE_YIELD, evidence=ev)
    if pedestrian_yield:
        return YieldLabel(label=PEDESTRIAN_YIELD, evidence=ev)
    return YieldLabel(label=UNCLASSIFIED, evidence=ev)


def classify_yield(seq: SafetySequence) -> YieldLabel:
    onset = seq.onset_index()
    if onset is None:
        raise DataError("sequence never enters the collision-risk region")
    return label_from_evidence(measure_yield_evidence(seq, onset))


# ---------------------------------------------------------------------------
# 1-D k-means
# ---------------------------------------------------------------------------


@dataclass
class KMeansResult:
    centroids: np.ndarray  # sorted ascending
    threshold: float  # midpoint of the two centroids (k == 2)
    inertia: float


def kmeans_1d(values, k: int = 2, seed: int = 0, max_iter: int = 200) -> KMeansResult:
    """Lloyd's algorithm on scalars, seeded farthest-point initialization.

    The first centroid is a seeded random draw from the data; remaining
    centroids greedily take the point farthest from the chosen set.
    Iterates to a stable assignment.
    """
    data = np.sort(np.asarray(values, dtype=np.float64))
    distinct = np.unique(data)
    if distinct.size < k:
        raise InsufficientDataError(f"need at least {k} distinct values")
    rng = np.random.default_rng(seed)
    centroids = [float(rng.choice(distinct))]
    while len(centroids) < k:
        gaps = np.min(
            np.abs(distinct[:, None] - np.asarray(centroids)[None, :]), axis=1
        )
        centroids.append(float(distinct[int(np.argmax(gaps))]))
    centroids = np.sort(np.asarray(centroids))

    assignment = None
    for _ in range(max_iter):
        labels = np.argmin(np.abs(data[:, None] - centroids[None, :]), axis=1)
        if assignment is not None and np.array_equal(labels, assignment):
            break
        assignment = labels
        for j in range(k):
            members = data[labels == j]
            if members.size:
                centroids[j] = members.mean()
        centroids = np.sort(centroids)
    inertia = float(np.sum((data - centroids[assignment]) ** 2))
    threshold = float(centroids[:2].mean()) if k == 2 else float("nan")
    return KMeansResult(centroids=centroids, threshold=threshold, inertia=inertia)
