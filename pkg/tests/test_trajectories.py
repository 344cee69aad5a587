"""Ingestion, kinematics, outlier filtering, and interaction extraction."""

import numpy as np
import pytest

from conftest import assert_close
from nearmiss.errors import DataError, InsufficientDataError, SchemaError
from nearmiss.trajectories import (
    AV,
    HDV,
    PEDESTRIAN,
    Trajectory,
    derive_kinematics,
    extract_interactions,
    filter_outliers,
    finite_difference_accels,
    load_scenario,
    min_pairwise_distance,
    save_scenario,
    split_contiguous,
)

HEADER = ("scenario_id,track_id,object_type,timestep,position_x,position_y,"
          "heading,velocity_x,velocity_y\n")


def write_csv(tmp_path, rows, name="scene.csv", header=HEADER):
    path = tmp_path / name
    path.write_text(header + "".join(rows))
    return str(path)


def make_traj(agent_id="p", agent_class=PEDESTRIAN, xy=None, v=None, t0=0):
    xy = np.asarray(xy, dtype=np.float64)
    n = xy.shape[0]
    v = np.zeros_like(xy) if v is None else np.asarray(v, dtype=np.float64)
    return Trajectory(
        agent_id=agent_id,
        agent_class=agent_class,
        t=(np.arange(n) + t0) / 10.0,
        x=xy[:, 0],
        y=xy[:, 1],
        vx=v[:, 0],
        vy=v[:, 1],
        heading=np.zeros(n),
    )


# -- loading -----------------------------------------------------------------


def test_load_converts_timesteps_to_seconds(tmp_path):
    path = write_csv(tmp_path, [
        f"s,1,pedestrian,{k},0.0,0.0,0.0,0.0,0.0\n" for k in range(3)
    ])
    (traj,) = load_scenario(path)
    assert np.array_equal(traj.t, [0.0, 0.1, 0.2])


def test_load_groups_by_track(tmp_path):
    path = write_csv(tmp_path, [
        "s,1,pedestrian,0,0,0,0,0,0\n",
        "s,2,av,0,1,1,0,0,0\n",
    ])
    trajs = load_scenario(path)
    assert len(trajs) == 2
    assert {t.agent_class for t in trajs} == {PEDESTRIAN, AV}


def test_load_rejects_non_monotone_timesteps(tmp_path):
    path = write_csv(tmp_path, [
        "s,1,pedestrian,0,0,0,0,0,0\n",
        "s,1,pedestrian,2,0,0,0,0,0\n",
        "s,1,pedestrian,1,0,0,0,0,0\n",
    ])
    with pytest.raises(DataError) as err:
        load_scenario(path)
    assert "1" in str(err.value)


def test_load_missing_column_names_it(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("scenario_id,track_id,object_type,timestep,position_x\n")
    with pytest.raises(SchemaError) as err:
        load_scenario(str(path))
    assert "position_y" in str(err.value)


def test_load_with_column_mapping(tmp_path):
    header = ("scene,tid,kind,step,px,py,yaw,vx,vy\n")
    path = write_csv(tmp_path, ["s,1,hdv,0,1,2,0,3,4\n"], header=header)
    (traj,) = load_scenario(path, schema={
        "scenario_id": "scene", "track_id": "tid", "object_type": "kind",
        "timestep": "step", "position_x": "px", "position_y": "py",
        "heading": "yaw", "velocity_x": "vx", "velocity_y": "vy",
    })
    assert traj.agent_class == HDV
    assert traj.x[0] == 1.0 and traj.vy[0] == 4.0


def test_load_rejects_unknown_object_type(tmp_path):
    path = write_csv(tmp_path, ["s,1,bicycle,0,0,0,0,0,0\n"])
    with pytest.raises(DataError):
        load_scenario(path)


def test_roundtrip_bit_identical(tmp_path):
    rng = np.random.default_rng(0)
    trajs = [
        make_traj("s:1", PEDESTRIAN, rng.standard_normal((5, 2)),
                  rng.standard_normal((5, 2))),
        make_traj("s:2", AV, rng.standard_normal((4, 2)) * 1e-7,
                  rng.standard_normal((4, 2)) * 1e3),
    ]
    first = tmp_path / "a.csv"
    second = tmp_path / "b.csv"
    save_scenario(trajs, str(first))
    reloaded = load_scenario(str(first))
    save_scenario(reloaded, str(second))
    assert first.read_bytes() == second.read_bytes()
    for original, back in zip(trajs, reloaded):
        for field in ("t", "x", "y", "vx", "vy", "heading"):
            assert np.array_equal(getattr(original, field), getattr(back, field))


def test_split_contiguous_on_gap():
    traj = make_traj(xy=np.zeros((6, 2)))
    traj.t = np.array([0.0, 0.1, 0.2, 0.5, 0.6, 0.7])
    segments = split_contiguous(traj)
    assert [len(s) for s in segments] == [3, 3]
    assert segments[0].agent_id != segments[1].agent_id


# -- kinematics ----------------------------------------------------------------


def test_constant_velocity_zero_acceleration():
    traj = make_traj(xy=np.zeros((3, 2)), v=[[1.0, 0.0]] * 3)
    kin = derive_kinematics(traj)
    assert all(k.ax == 0.0 and k.ay == 0.0 for k in kin)
    assert all(k.speed == 1.0 for k in kin)


def test_central_difference_interior():
    traj = make_traj(xy=np.zeros((3, 2)), v=[[0.0, 0.0], [0.1, 0.0], [0.2, 0.0]])
    kin = derive_kinematics(traj)
    assert_close(kin[1].ax, (0.2 - 0.0) / 0.2, rtol=1e-12)


def test_one_sided_difference_at_ends():
    traj = make_traj(xy=np.zeros((2, 2)), v=[[0.0, 0.0], [0.3, 0.0]])
    kin = derive_kinematics(traj)
    assert_close([kin[0].ax, kin[1].ax], [3.0, 3.0], rtol=1e-12)


def test_kinematics_requires_two_points():
    with pytest.raises(InsufficientDataError):
        derive_kinematics(make_traj(xy=[[0.0, 0.0]]))


def test_kinematics_exact_for_linear_velocity():
    # central differences are exact for polynomial velocity up to degree 2
    t = np.arange(8) / 10.0
    v = np.column_stack([2.0 * t + 0.5, -1.0 * t])
    traj = make_traj(xy=np.zeros((8, 2)), v=v)
    accel = finite_difference_accels(traj)
    assert_close(accel[1:-1, 0], np.full(6, 2.0), rtol=1e-12)
    assert_close(accel[1:-1, 1], np.full(6, -1.0), rtol=1e-12)


# -- outlier filtering ---------------------------------------------------------


def test_overspeed_removed():
    traj = make_traj(v=[[91.0, 0.0]] * 3, xy=np.zeros((3, 2)))
    assert filter_outliers([traj]) == []


def test_below_both_thresholds_retained():
    v = np.full((3, 2), 0.0)
    v[:, 0] = [89.9, 89.9, 89.9]
    keep = make_traj(v=v, xy=np.zeros((3, 2)))
    # one-sided accel 6.9 at the ends
    v2 = np.array([[0.0, 0.0], [0.69, 0.0], [1.38, 0.0]])
    keep2 = make_traj("q", PEDESTRIAN, np.zeros((3, 2)), v2)
    assert filter_outliers([keep, keep2]) == [keep, keep2]


def test_overacceleration_removed():
    v = np.array([[0.0, 0.0], [0.75, 0.0], [1.5, 0.0]])  # 7.5 m/s^2
    traj = make_traj(v=v, xy=np.zeros((3, 2)))
    assert filter_outliers([traj]) == []


def test_filter_idempotent():
    rng = np.random.default_rng(1)
    trajs = [
        make_traj(f"t{i}", PEDESTRIAN, rng.standard_normal((4, 2)),
                  rng.uniform(-2, 2, (4, 2)))
        for i in range(5)
    ]
    once = filter_outliers(trajs)
    assert filter_outliers(once) == once


# -- interaction extraction ----------------------------------------------------


def test_close_pass_emits_pair():
    ped = make_traj("p", PEDESTRIAN, [[0.0, 0.0]] * 5)
    veh = make_traj("v", AV, [[-1.0 + 0.35 * k, 0.0] for k in range(5)])
    veh.x[3] = 0.05  # closest sampled point
    pairs = extract_interactions([ped], [veh])
    assert len(pairs) == 1
    assert_close(pairs[0].min_distance, 0.05, rtol=1e-12)
    assert pairs[0].vehicle_class == AV


def test_distant_pass_no_pair():
    ped = make_traj("p", PEDESTRIAN, [[0.0, 0.0]] * 5)
    veh = make_traj("v", AV, [[0.5, -1.0 + 0.5 * k] for k in range(5)])
    assert extract_interactions([ped], [veh]) == []


def test_exact_threshold_excluded():
    ped = make_traj("p", PEDESTRIAN, [[0.0, 0.0]] * 3)
    veh = make_traj("v", HDV, [[0.1, 0.0]] * 3)
    assert extract_interactions([ped], [veh], d_thresh=0.1) == []


def test_min_distance_order_free():
    rng = np.random.default_rng(2)
    a = make_traj("a", PEDESTRIAN, rng.standard_normal((6, 2)))
    b = make_traj("b", AV, rng.standard_normal((7, 2)))
    reversed_a = make_traj("a", PEDESTRIAN, a.xy[::-1])
    reversed_b = make_traj("b", AV, b.xy[::-1])
    assert min_pairwise_distance(a, b) == min_pairwise_distance(reversed_a, reversed_b)


def test_no_temporal_overlap_skipped():
    ped = make_traj("p", PEDESTRIAN, [[0.0, 0.0]] * 3, t0=0)
    veh = make_traj("v", AV, [[0.0, 0.0]] * 3, t0=10)
    assert extract_interactions([ped], [veh]) == []
