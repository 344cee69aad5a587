"""Arc fitting, quadratic interpolation, and collision-time projection.

The independent oracle used throughout steps both predicted paths on a
dense 0.01 s grid and reports the vehicle path length to the first
sub-threshold separation divided by the vehicle speed.
"""

import math

import numpy as np
import pytest

from conftest import assert_close
from nearmiss.curvttc import (
    ArcPath,
    QuadPath,
    curvttc_at,
    curvttc_series,
    fit_arc,
    fit_quadratic,
    flag_critical,
    CurvTTCSample,
)
from nearmiss.errors import DataError, DegenerateStartError, InsufficientDataError
from nearmiss.trajectories import PEDESTRIAN, AV, InteractionPair, Trajectory


def dense_oracle(veh_path, ped_path, threshold=1.3, horizon=10.0, step=0.01):
    """Dense-grid first-breach time as vehicle arc length over speed."""
    taus = np.arange(0.0, horizon + step / 2, step)
    gap = veh_path.position(taus) - ped_path.position(taus)
    dist = np.hypot(gap[:, 0], gap[:, 1])
    below = np.flatnonzero(dist < threshold)
    if below.size == 0:
        return math.inf
    tau = taus[below[0]]
    speed = veh_path.speed()
    if speed <= 0.0:
        return float(tau)
    return float(speed * tau / speed)


def line(origin, direction, speed):
    d = np.asarray(direction, dtype=np.float64)
    return ArcPath(mode="line", origin=np.asarray(origin, dtype=np.float64),
                   direction=d / np.linalg.norm(d), line_speed=speed)


def stationary_quad(point):
    return QuadPath(coeffs_x=(0.0, 0.0, point[0]), coeffs_y=(0.0, 0.0, point[1]))


def make_traj(agent_id, agent_class, xy):
    xy = np.asarray(xy, dtype=np.float64)
    n = xy.shape[0]
    return Trajectory(
        agent_id=agent_id, agent_class=agent_class,
        t=np.arange(n) / 10.0, x=xy[:, 0], y=xy[:, 1],
        vx=np.zeros(n), vy=np.zeros(n), heading=np.zeros(n),
    )


# -- arc fitting ---------------------------------------------------------------


def test_unit_circle_by_symmetry():
    arc = fit_arc((1, 0), (0, 1), (-1, 0))
    assert arc.mode == "arc"
    assert_close(arc.center, [0.0, 0.0], atol=1e-12)
    assert_close(arc.radius, 1.0, rtol=1e-12)


def test_collinear_fallback():
    path = fit_arc((0, 0), (1, 0), (2, 0))
    assert path.mode == "line"
    assert_close(path.direction, [1.0, 0.0], rtol=1e-12)
    assert_close(path.line_speed, 10.0, rtol=1e-12)


def test_circumcenter_off_axis():
    arc = fit_arc((0, 0), (1, 1), (2, 0))
    assert arc.mode == "arc"
    assert_close(arc.center, [1.0, 0.0], atol=1e-12)
    assert_close(arc.radius, 1.0, rtol=1e-12)


def test_coincident_points_stationary():
    path = fit_arc((1, 1), (1, 1 + 1e-8), (1, 1))
    assert path.mode == "line"
    assert path.line_speed == 0.0


def test_fitted_circle_passes_through_points():
    rng = np.random.default_rng(0)
    for _ in range(200):
        center = rng.uniform(-50, 50, 2)
        radius = rng.uniform(0.5, 30.0)
        theta = rng.uniform(0, 2 * np.pi)
        omega = rng.uniform(-1.5, 1.5)
        pts = [center + radius * np.array([np.cos(theta + omega * k * 0.1),
                                           np.sin(theta + omega * k * 0.1)])
               for k in range(3)]
        arc = fit_arc(*pts)
        if arc.mode == "line":
            continue
        for p in pts:
            assert abs(np.linalg.norm(p - arc.center) - arc.radius) < 1e-9


def test_arc_reaches_third_point_at_two_steps():
    pts = [(0, 0), (1, 1), (2, 0)]
    arc = fit_arc(*pts)
    assert_close(arc.position(0.2), [2.0, 0.0], atol=1e-9)
    assert_close(arc.position(0.0), [0.0, 0.0], atol=1e-9)


# -- quadratic fitting -----------------------------------------------------------


def test_quadratic_exact_data():
    quad = fit_quadratic((0.0, 0.0), (0.1, 0.01), (0.2, 0.04))
    assert_close(quad.coeffs_x, (0.0, 1.0, 0.0), atol=1e-9)
    assert_close(quad.coeffs_y, (1.0, 0.0, 0.0), atol=1e-9)


def test_quadratic_identical_points():
    quad = fit_quadratic((2.0, 3.0), (2.0, 3.0), (2.0, 3.0))
    assert quad.coeffs_x == (0.0, 0.0, 2.0)
    assert quad.coeffs_y == (0.0, 0.0, 3.0)


def test_quadratic_collinear_zero_curvature():
    quad = fit_quadratic((0.0, 0.0), (0.1, 0.2), (0.2, 0.4))
    assert_close(quad.coeffs_x[0], 0.0, atol=1e-12)
    assert_close(quad.coeffs_y[0], 0.0, atol=1e-12)


def test_quadratic_reproduces_fit_points():
    rng = np.random.default_rng(1)
    for _ in range(100):
        pts = rng.uniform(-10, 10, (3, 2))
        quad = fit_quadratic(*pts)
        for k, p in enumerate(pts):
            assert np.linalg.norm(quad.position(0.1 * k) - p) < 1e-9


# -- collision projection ---------------------------------------------------------


def test_straight_approach_two_seconds():
    veh = line((0, 0), (0, 1), 10.0)
    ped = stationary_quad((0.0, 21.3))
    sample = curvttc_at(veh, ped, threshold=1.3)
    assert_close(sample.value, dense_oracle(veh, ped), atol=0.05)
    assert_close(sample.value, 2.0, atol=1e-6)
    assert sample.conflict_type == "lateral"  # stationary pedestrian


def test_diverging_paths_infinite():
    veh = line((0, 0), (0, -1), 10.0)
    ped = stationary_quad((0.0, 21.3))
    sample = curvttc_at(veh, ped)
    assert math.isinf(sample.value)
    assert sample.conflict_type is None
    assert sample.projected_collision_point is None


def test_head_on_closing():
    veh = line((0, 0), (0, 1), 10.0)
    ped = QuadPath(coeffs_x=(0.0, 0.0, 0.0), coeffs_y=(0.0, -1.0, 23.3))
    sample = curvttc_at(veh, ped, threshold=1.3)
    assert_close(sample.value, 2.0, atol=1e-6)
    assert_close(sample.value, dense_oracle(veh, ped), atol=0.05)
    assert sample.conflict_type == "frontal"


def test_degenerate_start_rejected():
    veh = line((0, 0), (0, 1), 0.0)
    ped = stationary_quad((0.0, 0.5))
    with pytest.raises(DegenerateStartError):
        curvttc_at(veh, ped, threshold=1.3)


def test_invalid_parameters_rejected():
    veh = line((0, 0), (0, 1), 1.0)
    with pytest.raises(DataError):
        curvttc_at(veh, stationary_quad((0, 5)), threshold=0.0)


def random_converging_case(rng):
    """Vehicle arc/line aimed at a pedestrian path through its route."""
    speed = rng.uniform(2.0, 12.0)
    if rng.random() < 0.5:
        heading = rng.uniform(0, 2 * np.pi)
        veh = line(rng.uniform(-5, 5, 2), [np.cos(heading), np.sin(heading)], speed)
    else:
        radius = rng.uniform(8.0, 40.0)
        center = rng.uniform(-5, 5, 2)
        theta = rng.uniform(0, 2 * np.pi)
        omega = speed / radius * (1 if rng.random() < 0.5 else -1)
        veh = ArcPath(mode="arc", center=center, radius=radius,
                      start_angle=theta, angular_rate=omega)
    # place the pedestrian on the vehicle's own path a few seconds ahead,
    # walking slowly, so the scenario genuinely converges
    hit_tau = rng.uniform(1.0, 8.0)
    target = veh.position(hit_tau)
    walk = rng.uniform(-1.2, 1.2, 2)
    ped = QuadPath(
        coeffs_x=(0.0, walk[0], target[0] - walk[0] * hit_tau),
        coeffs_y=(0.0, walk[1], target[1] - walk[1] * hit_tau),
    )
    return veh, ped


def test_oracle_agreement_randomized():
    rng = np.random.default_rng(42)
    checked = 0
    for _ in range(250):
        veh, ped = random_converging_case(rng)
        try:
            sample = curvttc_at(veh, ped)
        except DegenerateStartError:
            continue
        expected = dense_oracle(veh, ped)
        if math.isinf(expected):
            assert math.isinf(sample.value)
            continue
        assert abs(sample.value - expected) <= 0.05
        checked += 1
    assert checked >= 200


def test_rigid_motion_invariance():
    rng = np.random.default_rng(7)
    for _ in range(40):
        veh, ped = random_converging_case(rng)
        try:
            base = curvttc_at(veh, ped).value
        except DegenerateStartError:
            continue
        angle = rng.uniform(0, 2 * np.pi)
        shift = rng.uniform(-30, 30, 2)
        rot = np.array([[np.cos(angle), -np.sin(angle)],
                        [np.sin(angle), np.cos(angle)]])

        def transform_points(path_points):
            return [rot @ np.asarray(p) + shift for p in path_points]

        taus = [0.0, 0.1, 0.2]
        veh2 = fit_arc(*transform_points([veh.position(t) for t in taus]))
        ped2 = fit_quadratic(*transform_points([ped.position(t) for t in taus]))
        moved = curvttc_at(veh2, ped2).value
        if math.isinf(base):
            assert math.isinf(moved) or moved > 9.0
        else:
            assert_close(moved, base, atol=5e-4, rtol=1e-6)


def test_step_refinement_bound():
    rng = np.random.default_rng(9)
    for _ in range(40):
        veh, ped = random_converging_case(rng)
        try:
            coarse = curvttc_at(veh, ped, step=0.2).value
            fine = curvttc_at(veh, ped, step=0.1).value
        except DegenerateStartError:
            continue
        if math.isinf(coarse) or math.isinf(fine):
            continue
        assert abs(coarse - fine) <= 0.2


# -- per-frame series --------------------------------------------------------------


def test_series_window_arithmetic():
    ped = make_traj("p", PEDESTRIAN, [[30.0, 0.0]] * 5)
    veh = make_traj("v", AV, [[0.0, k] for k in range(5)])
    pair = InteractionPair(ped, veh, AV, 0.1, (0.0, 0.4))
    series = curvttc_series(pair)
    assert len(series) == 3
    assert_close([s.t for s in series], [0.2, 0.3, 0.4], rtol=1e-12)


def test_series_all_diverging_infinite():
    ped = make_traj("p", PEDESTRIAN, [[0.0, -5.0 - k] for k in range(6)])
    veh = make_traj("v", AV, [[0.0, 5.0 + k] for k in range(6)])
    pair = InteractionPair(ped, veh, AV, 0.1, (0.0, 0.5))
    series = curvttc_series(pair)
    assert all(math.isinf(s.value) for s in series)


def test_series_converging_values_decrease():
    ped = make_traj("p", PEDESTRIAN, [[0.0, 40.0]] * 30)
    veh = make_traj("v", AV, [[0.0, 0.6 * k] for k in range(30)])
    pair = InteractionPair(ped, veh, AV, 0.1, (0.0, 2.9))
    series = curvttc_series(pair)
    finite = [s.value for s in series if math.isfinite(s.value)]
    assert len(finite) >= 10
    assert all(b < a for a, b in zip(finite, finite[1:]))
    for sample in series[:5]:
        veh_path = fit_arc(*[(0.0, 0.6 * k) for k in
                             (int(sample.t * 10) - 2, int(sample.t * 10) - 1,
                              int(sample.t * 10))]).advanced(0.2)
        expected = dense_oracle(veh_path, stationary_quad((0.0, 40.0)))
        assert abs(sample.value - expected) <= 0.05


def test_series_requires_three_frames():
    ped = make_traj("p", PEDESTRIAN, [[0.0, 0.0]] * 2)
    veh = make_traj("v", AV, [[0.0, 0.0], [0.0, 0.1]])
    pair = InteractionPair(ped, veh, AV, 0.0, (0.0, 0.1))
    with pytest.raises(InsufficientDataError):
        curvttc_series(pair)


# -- critical flagging ---------------------------------------------------------------


def sample_at(t, value):
    return CurvTTCSample(t=t, value=value, conflict_type=None if math.isinf(value)
                         else "lateral", projected_collision_point=None)


def test_ten_frames_below_flags_event():
    series = [sample_at(k / 10.0, 4.9) for k in range(10)]
    event = flag_critical(series)
    assert event is not None
    assert event.frames_below_5s == 10
    assert event.onset_t == 0.0


def test_nine_frames_not_enough():
    series = [sample_at(k / 10.0, 1.0) for k in range(9)]
    series.append(sample_at(0.9, math.inf))
    assert flag_critical(series) is None


def test_alternating_never_flags():
    series = [sample_at(k / 10.0, 4.0 if k % 2 == 0 else 6.0) for k in range(40)]
    assert flag_critical(series) is None


def test_flag_ignores_samples_after_first_qualifying_run():
    run = [sample_at(k / 10.0, 3.0) for k in range(12)]
    tail_a = [sample_at(1.2, 9.0), sample_at(1.3, 4.0)]
    tail_b = [sample_at(1.2, 8.0)] + [sample_at(1.3 + k / 10.0, 2.0) for k in range(15)]
    event_a = flag_critical(run + tail_a)
    event_b = flag_critical(run + tail_b)
    assert event_a.onset_t == event_b.onset_t == 0.0
    assert event_a.frames_below_5s == event_b.frames_below_5s == 12
