"""Command-line pipeline: synth, extract, train, reconstruct,
counterfactual, analyze.

Every command stages its outputs in a temporary directory and renames
them into place only after all of them were produced, writes a manifest
describing the run, and derives all randomness from --seed. Exit codes:
0 success, 1 usage/configuration error, 2 data error, 3 numeric or
training error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import shutil
import sys
import tempfile
from datetime import datetime, timezone

import numpy as np

from . import __version__, analytics
from .curvttc import (
    CriticalEvent,
    curvttc_series,
    find_critical_event,
    load_events,
    save_events,
    write_series_csv,
)
from .ddpg import PolicyCheckpoint, TrainConfig, VEHICLE_TYPES, reconstruct, train
from .env import ABS_VELOCITY, DISTANCE, REL_VELOCITY, EpisodeConfig, RewardVariant, event_frames
from .errors import ConfigError, DataError, NearMissError, NumericError
from .synth import KINDS, ScenarioTemplate, corpus_trajectories, generate
from .trajectories import (
    AV,
    HDV,
    PEDESTRIAN,
    Trajectory,
    extract_interactions,
    filter_outliers,
    finite_difference_accels,
    load_scenario,
    save_interactions,
    save_scenario,
    split_contiguous,
)

REWARD_FLAGS = {"distance": DISTANCE, "velocity": ABS_VELOCITY, "relative": REL_VELOCITY}

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _Staging:
    """Collects output files in a scratch dir, commits them atomically."""

    def __init__(self, out_dir: str):
        self.out_dir = os.path.abspath(out_dir)
        os.makedirs(self.out_dir, exist_ok=True)
        self.tmp = tempfile.mkdtemp(prefix=".stage-", dir=self.out_dir)

    def path(self, name: str) -> str:
        return os.path.join(self.tmp, name)

    def commit(self):
        for name in sorted(os.listdir(self.tmp)):
            os.replace(os.path.join(self.tmp, name), os.path.join(self.out_dir, name))
        os.rmdir(self.tmp)

    def abort(self):
        shutil.rmtree(self.tmp, ignore_errors=True)


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(staging: _Staging, command: str, config: dict, seed, inputs: list[str]):
    manifest = {
        "command": command,
        "tool_version": __version__,
        "seed": seed,
        "config": config,
        "input_digests": {os.path.basename(p): _sha256(p) for p in inputs},
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    with open(staging.path("manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)


def _write_csv(path: str, header: list[str], rows: list[list]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    template = ScenarioTemplate(
        kind=args.kind,
        critical_fraction=args.critical_fraction,
        noise_std=args.noise,
        seed=args.seed,
    )
    pairs = generate(template, args.count)
    staging = _Staging(args.out)
    try:
        save_scenario(corpus_trajectories(pairs), staging.path("corpus.csv"))
        _write_manifest(
            staging,
            "synth",
            {
                "kind": args.kind,
                "count": args.count,
                "critical_fraction": args.critical_fraction,
                "noise": args.noise,
            },
            args.seed,
            [],
        )
        staging.commit()
    except BaseException:
        staging.abort()
        raise
    print(f"wrote {args.count} scenarios to {os.path.join(args.out, 'corpus.csv')}")
    return 0


# ---------------------------------------------------------------------------
# extract
# ---------------------------------------------------------------------------


def _input_csvs(path: str) -> list[str]:
    if os.path.isdir(path):
        return sorted(
            os.path.join(path, name)
            for name in os.listdir(path)
            if name.endswith(".csv")
        )
    return [path]


def cmd_extract(args) -> int:
    files = _input_csvs(args.input)
    trajectories: list[Trajectory] = []
    for path in files:
        trajectories.extend(load_scenario(path))
    segments: list[Trajectory] = []
    for traj in trajectories:
        segments.extend(split_contiguous(traj))
    kept = filter_outliers(segments)
    pedestrians = [t for t in kept if t.agent_class == PEDESTRIAN]
    vehicles = [t for t in kept if t.agent_class in (AV, HDV)]
    pairs = extract_interactions(pedestrians, vehicles, args.d_thresh)

    events: list[CriticalEvent] = []
    labeled_series = []
    for pair in pairs:
        series = curvttc_series(
            pair, threshold=args.collision_threshold, horizon=args.horizon, step=args.step
        )
        label = f"{pair.pedestrian.agent_id}|{pair.vehicle.agent_id}"
        labeled_series.append((label, series))
        event = find_critical_event(
            pair, threshold=args.collision_threshold, horizon=args.horizon, step=args.step
        )
        if event is not None:
            events.append(event)

    summary = {
        "files": len(files),
        "trajectories": len(trajectories),
        "kept_after_outlier_filter": len(kept),
        "pairs": len(pairs),
        "critical_events": len(events),
        "pairs_by_vehicle_class": {
            AV: sum(1 for p in pairs if p.vehicle_class == AV),
            HDV: sum(1 for p in pairs if p.vehicle_class == HDV),
        },
        "events_by_vehicle_class": {
            AV: sum(1 for e in events if e.pair.vehicle_class == AV),
            HDV: sum(1 for e in events if e.pair.vehicle_class == HDV),
        },
    }
    staging = _Staging(args.out)
    try:
        save_interactions(pairs, staging.path("interactions.json"))
        write_series_csv(staging.path("curvttc_series.csv"), labeled_series)
        save_events(events, staging.path("critical_events.json"))
        with open(staging.path("summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
        _write_manifest(
            staging,
            "extract",
            {
                "d_thresh": args.d_thresh,
                "collision_threshold": args.collision_threshold,
                "horizon": args.horizon,
                "step": args.step,
            },
            None,
            files,
        )
        staging.commit()
    except BaseException:
        staging.abort()
        raise
    print(
        f"{summary['pairs']} interactions, {summary['critical_events']} critical events"
    )
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _select_events(path: str, vehicle_type: str) -> list[CriticalEvent]:
    events = load_events(path)
    return [e for e in events if e.pair is not None and e.pair.vehicle_class == vehicle_type.lower()]


def cmd_train(args) -> int:
    vehicle_type = args.vehicle_type.upper()
    events = _select_events(args.events, vehicle_type)
    if not events:
        raise ConfigError(f"no critical events with vehicle class {vehicle_type}")
    cfg = TrainConfig(
        episodes=args.episodes,
        batch=args.batch,
        lr_actor=args.lr_actor,
        lr_critic=args.lr_critic,
        gamma=args.gamma,
        tau=args.tau,
        noise_sigma=args.noise_sigma,
        buffer_capacity=args.buffer,
        seed=args.seed,
    )
    variant = RewardVariant(kind=REWARD_FLAGS[args.reward])
    checkpoint, curve = train(events, variant, cfg, vehicle_type)
    staging = _Staging(args.out)
    try:
        checkpoint.save(staging.path("checkpoint.json"))
        _write_csv(
            staging.path("reward_curve.csv"),
            ["episode", "raw_reward", "rolling_mean_50"],
            [[p.episode, _fmt(p.raw_reward), _fmt(p.rolling_mean)] for p in curve],
        )
        _write_manifest(
            staging,
            "train",
            {
                "vehicle_type": vehicle_type,
                "reward": args.reward,
                "episodes": cfg.episodes,
                "batch": cfg.batch,
                "lr_actor": cfg.lr_actor,
                "lr_critic": cfg.lr_critic,
                "gamma": cfg.gamma,
                "tau": cfg.tau,
                "noise_sigma": cfg.noise_sigma,
                "buffer": cfg.buffer_capacity,
            },
            args.seed,
            [args.events],
        )
        staging.commit()
    except BaseException:
        staging.abort()
        raise
    print(f"trained {vehicle_type} policy over {len(events)} events, "
          f"final rolling reward {curve[-1].rolling_mean:.4f}")
    return 0


# ---------------------------------------------------------------------------
# reconstruct / counterfactual
# ---------------------------------------------------------------------------


def _reconstruction_rows(event, rec) -> list[list]:
    rows = []
    frames = event_frames(event)
    label = f"{event.pair.pedestrian.agent_id}|{event.pair.vehicle.agent_id}"
    for i in range(rec.sim_xy.shape[0]):
        alon, alat = (rec.actions[i - 1] if i > 0 else (0.0, 0.0))
        rows.append(
            [
                label,
                _fmt(float(rec.t[i])),
                _fmt(float(rec.sim_xy[i, 0])),
                _fmt(float(rec.sim_xy[i, 1])),
                _fmt(float(rec.sim_v[i, 0])),
                _fmt(float(rec.sim_v[i, 1])),
                _fmt(float(alon)),
                _fmt(float(alat)),
                _fmt(float(frames.ped_xy[i, 0])),
                _fmt(float(frames.ped_xy[i, 1])),
                rec.terminal if i == rec.sim_xy.shape[0] - 1 else "",
            ]
        )
    return rows


def _error_report_rows(events, recs) -> tuple[list[list], analytics.ErrorReport]:
    per_event = []
    pools = {k: ([], []) for k in ("vlon", "alon", "dlon", "vlat", "alat", "dlat")}
    pred_trajs, truth_trajs = [], []
    for event, rec in zip(events, recs):
        frames = event_frames(event)
        n = rec.sim_xy.shape[0]
        rec_v = frames.ped_v[:n]
        rec_xy = frames.ped_xy[:n]
        rel_true = rec_xy - frames.veh_xy[:n]
        rel_sim = rec.sim_xy - frames.veh_xy[:n]
        sim_a = rec.actions
        true_a = np.diff(rec_v, axis=0) / 0.1
        true_a = np.column_stack([true_a[:, 1], true_a[:, 0]])  # (alon, alat)
        series = {
            "vlon": (rec.sim_v[:, 1], rec_v[:, 1]),
            "alon": (sim_a[:, 0], true_a[:, 0]),
            "dlon": (rel_sim[:, 1], rel_true[:, 1]),
            "vlat": (rec.sim_v[:, 0], rec_v[:, 0]),
            "alat": (sim_a[:, 1], true_a[:, 1]),
            "dlat": (rel_sim[:, 0], rel_true[:, 0]),
        }
        label = f"{event.pair.pedestrian.agent_id}|{event.pair.vehicle.agent_id}"
        metrics = {k: analytics.rmse(p, t) for k, (p, t) in series.items()}
        ade, fde = analytics.ade_fde([rec.sim_xy], [rec_xy])
        per_event.append([label] + [_fmt(metrics[k]) for k in pools] + [_fmt(ade), _fmt(fde)])
        for k, (p, t) in series.items():
            pools[k][0].append(np.asarray(p))
            pools[k][1].append(np.asarray(t))
        pred_trajs.append(rec.sim_xy)
        truth_trajs.append(rec_xy)
    pooled = {
        k: analytics.rmse(np.concatenate(p), np.concatenate(t))
        for k, (p, t) in pools.items()
    }
    ade, fde = analytics.ade_fde(pred_trajs, truth_trajs)
    report = analytics.ErrorReport(
        rmse_vlon=pooled["vlon"],
        rmse_alon=pooled["alon"],
        rmse_dlon=pooled["dlon"],
        rmse_vlat=pooled["vlat"],
        rmse_alat=pooled["alat"],
        rmse_dlat=pooled["dlat"],
        ade=ade,
        fde=fde,
    )
    per_event.append(
        ["ALL"]
        + [_fmt(pooled[k]) for k in pools]
        + [_fmt(ade), _fmt(fde)]
    )
    return per_event, report


def _rollouts(checkpoint, events):
    recs = []
    usable = []
    for event in events:
        try:
            recs.append(reconstruct(checkpoint, event))
            usable.append(event)
        except NearMissError:
            continue
    if not recs:
        raise DataError("no usable events for reconstruction")
    return usable, recs


def cmd_reconstruct(args) -> int:
    checkpoint = PolicyCheckpoint.load(args.checkpoint)
    events = load_events(args.events)
    classes = {e.pair.vehicle_class for e in events if e.pair is not None}
    expected = checkpoint.vehicle_type.lower()
    if not args.counterfactual and classes - {expected}:
        raise ConfigError(
            f"checkpoint is for {checkpoint.vehicle_type} but events contain "
            f"{sorted(classes)}; pass --counterfactual to apply it anyway "
            "or use the counterfactual command"
        )
    events = [e for e in events if args.counterfactual or e.pair.vehicle_class == expected]
    events, recs = _rollouts(checkpoint, events)
    rows = []
    for event, rec in zip(events, recs):
        rows.extend(_reconstruction_rows(event, rec))
    report_rows, _ = _error_report_rows(events, recs)
    staging = _Staging(args.out)
    try:
        _write_csv(
            staging.path("trajectories.csv"),
            ["pair", "t", "x", "y", "vx", "vy", "alon", "alat",
             "recorded_x", "recorded_y", "terminal"],
            rows,
        )
        _write_csv(
            staging.path("error_report.csv"),
            ["pair", "rmse_vlon", "rmse_alon", "rmse_dlon",
             "rmse_vlat", "rmse_alat", "rmse_dlat", "ade", "fde"],
            report_rows,
        )
        _write_manifest(
            staging,
            "reconstruct",
            {"counterfactual": args.counterfactual},
            None,
            [args.checkpoint, args.events],
        )
        staging.commit()
    except BaseException:
        staging.abort()
        raise
    print(f"reconstructed {len(recs)} events")
    return 0


def _speed_accel_samples(events, recs=None):
    """Pooled per-frame speed and acceleration-magnitude samples."""
    speeds, accels = [], []
    if recs is None:
        for event in events:
            frames = event_frames(event)
            speeds.append(np.hypot(frames.ped_v[:, 0], frames.ped_v[:, 1]))
            acc = np.diff(frames.ped_v, axis=0) / 0.1
            accels.append(np.hypot(acc[:, 0], acc[:, 1]))
    else:
        for rec in recs:
            speeds.append(np.hypot(rec.sim_v[:, 0], rec.sim_v[:, 1]))
            accels.append(np.hypot(rec.actions[:, 0], rec.actions[:, 1]))
    return np.concatenate(speeds), np.concatenate(accels)


def cmd_counterfactual(args) -> int:
    checkpoint = PolicyCheckpoint.load(args.checkpoint)
    events = load_events(args.events)
    classes = {e.pair.vehicle_class for e in events if e.pair is not None}
    expected = checkpoint.vehicle_type.lower()
    if classes == {expected}:
        raise ConfigError(
            "events match the checkpoint's vehicle type; use the reconstruct command"
        )
    events = [e for e in events if e.pair.vehicle_class != expected]
    events, recs = _rollouts(checkpoint, events)
    obs_speed, obs_accel = _speed_accel_samples(events)
    cf_speed, cf_accel = _speed_accel_samples(events, recs)

    rows = []
    for metric, obs, cf in (
        ("pedestrian_speed_mps", obs_speed, cf_speed),
        ("pedestrian_accel_mps2", obs_accel, cf_accel),
    ):
        ks, p = analytics.ks_two_sample(obs, cf)
        rows.append(
            [metric, "observation", _fmt(ks), _fmt(p),
             _fmt(float(np.mean(obs))), _fmt(float(np.std(obs, ddof=1)))]
        )
        rows.append(
            [metric, "counterfactual", "", "",
             _fmt(float(np.mean(cf))), _fmt(float(np.std(cf, ddof=1)))]
        )
    staging = _Staging(args.out)
    try:
        _write_csv(
            staging.path("counterfactual_stats.csv"),
            ["metric", "scenario", "KS", "p", "mean", "std"],
            rows,
        )
        _write_manifest(
            staging, "counterfactual", {}, None, [args.checkpoint, args.events]
        )
        staging.commit()
    except BaseException:
        staging.abort()
        raise
    print(f"compared {len(recs)} counterfactual rollouts")
    return 0


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def _event_sequence(event: CriticalEvent) -> analytics.SafetySequence:
    frames = event_frames(event)
    by_time = {round(s.t, 6): s.value for s in event.series}
    ttc = np.array([by_time.get(round(float(t), 6), math.inf) for t in frames.t])
    return analytics.SafetySequence(
        t=frames.t,
        curvttc=ttc,
        ped_xy=frames.ped_xy,
        ped_v=frames.ped_v,
        veh_xy=frames.veh_xy,
        veh_v=frames.veh_v,
    )


def cmd_analyze(args) -> int:
    events = load_events(args.events)
    if not events:
        raise DataError("no events to analyze")

    reaction_rows = []
    sequences = []
    labels = []
    for event in events:
        label = f"{event.pair.pedestrian.agent_id}|{event.pair.vehicle.agent_id}"
        ped_seg = split_contiguous(event.pair.pedestrian)[0]
        veh_seg = split_contiguous(event.pair.vehicle)[0]
        ped_acc = finite_difference_accels(ped_seg)
        veh_acc = finite_difference_accels(veh_seg)
        n = min(len(ped_acc), len(veh_acc))
        estimate = analytics.reaction_time(ped_acc[:n], veh_acc[:n])
        reaction_rows.append(
            [label, _fmt(estimate.t_d), estimate.onset_frame, estimate.qualifying]
        )
        sequences.append(_event_sequence(event))
        labels.append(label)

    grid = analytics.conflict_grid(sequences)
    grid_rows = []
    for i in range(analytics.GRID_BINS):
        for j in range(analytics.GRID_BINS):
            rate = grid.rates[i, j]
            grid_rows.append(
                [
                    _fmt(0.5 * i), _fmt(0.5 * (i + 1)),
                    _fmt(0.5 * j), _fmt(0.5 * (j + 1)),
                    int(grid.counts[i, j]),
                    int(grid.conflicts[i, j]),
                    "" if math.isnan(rate) else _fmt(float(rate)),
                ]
            )

    yield_rows = []
    yield_counts = {analytics.VEHICLE_YIELD: 0, analytics.PEDESTRIAN_YIELD: 0,
                    analytics.UNCLASSIFIED: 0}
    onset_veh_speeds, onset_ped_speeds = [], []
    for label, seq in zip(labels, sequences):
        onset = seq.onset_index()
        if onset is None:
            continue
        onset_veh_speeds.append(float(np.hypot(*seq.veh_v[onset])))
        onset_ped_speeds.append(float(np.hypot(*seq.ped_v[onset])))
        result = analytics.classify_yield(seq)
        yield_counts[result.label] += 1
        ev = result.evidence
        yield_rows.append(
            [
                label, result.label, result.both_matched,
                _fmt(ev.vehicle_decel), _fmt(ev.relative_speed_reduction),
                _fmt(ev.pedestrian_speed_change), _fmt(ev.backward_displacement),
                _fmt(ev.pedestrian_path_length), _fmt(ev.vehicle_path_length),
            ]
        )

    total_labeled = sum(yield_counts.values())
    summary = {
        "events": len(events),
        "grid_excluded": grid.excluded,
        "yield_counts": yield_counts,
        "yield_rates_pct": {
            k: (100.0 * v / total_labeled if total_labeled else 0.0)
            for k, v in yield_counts.items()
        },
        "reference_speed_thresholds": {
            "vehicle": analytics.VEHICLE_SPEED_THRESHOLD,
            "pedestrian": analytics.PEDESTRIAN_SPEED_THRESHOLD,
        },
    }
    for name, speeds in (("vehicle", onset_veh_speeds), ("pedestrian", onset_ped_speeds)):
        try:
            result = analytics.kmeans_1d(speeds, k=2, seed=args.seed)
            summary[f"kmeans_{name}_threshold"] = result.threshold
        except NearMissError:
            summary[f"kmeans_{name}_threshold"] = None

    staging = _Staging(args.out)
    try:
        _write_csv(
            staging.path("reaction_times.csv"),
            ["pair", "t_d", "onset_frame", "qualifying"],
            reaction_rows,
        )
        _write_csv(
            staging.path("conflict_grid.csv"),
            ["veh_speed_lo", "veh_speed_hi", "ped_speed_lo", "ped_speed_hi",
             "count", "conflicts", "rate"],
            grid_rows,
        )
        _write_csv(
            staging.path("yield_labels.csv"),
            ["pair", "label", "both_matched", "vehicle_decel",
             "relative_speed_reduction", "pedestrian_speed_change",
             "backward_displacement", "pedestrian_path_length",
             "vehicle_path_length"],
            yield_rows,
        )
        with open(staging.path("summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
        _write_manifest(staging, "analyze", {}, args.seed, [args.events])
        staging.commit()
    except BaseException:
        staging.abort()
        raise
    print(f"analyzed {len(events)} events")
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nearmiss", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scenario corpus")
    p.add_argument("--kind", choices=KINDS, default="crossing")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--critical-fraction", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="extract interactions and critical events")
    p.add_argument("--input", required=True, help="scenario CSV file or directory")
    p.add_argument("--d-thresh", type=float, default=0.1)
    p.add_argument("--collision-threshold", type=float, default=1.3)
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train an avoidance policy on critical events")
    p.add_argument("--events", required=True)
    p.add_argument("--vehicle-type", choices=[v.lower() for v in VEHICLE_TYPES] + list(VEHICLE_TYPES), required=True)
    p.add_argument("--reward", choices=sorted(REWARD_FLAGS), default="velocity")
    p.add_argument("--episodes", type=int, default=3000)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--lr-actor", type=float, default=0.0005)
    p.add_argument("--lr-critic", type=float, default=0.001)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--tau", type=float, default=0.01)
    p.add_argument("--noise-sigma", type=float, default=0.01)
    p.add_argument("--buffer", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", help="roll a trained policy over events")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--counterfactual", action="store_true",
                   help="allow a vehicle-type mismatch")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser(
        "counterfactual",
        help="apply a policy to the other vehicle type and compare distributions",
    )
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_counterfactual)

    p = sub.add_parser("analyze", help="reaction times, conflict grid, yielding")
    p.add_argument("--events", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
