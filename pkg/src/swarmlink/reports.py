"""CSV and summary emitters shared by the experiment runners.

All output is deterministic: fixed column orders, fixed float formats, and
locale-independent rendering (accuracy percentages keep the decimal comma of
the table format they reproduce).
"""

from __future__ import annotations

import csv
from pathlib import Path

from .link import pair_label
from .radio import AccuracyRow


def ensure_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def fmt(value, decimals=4) -> str:
    if value is None:
        return ""
    return f"{value:.{decimals}f}"


def write_accuracy_csv(path, rows_by_device: dict[int, list[AccuracyRow]]) -> Path:
    """`meters,interval_low,interval_high,device,successes,failures,accuracy_pct`"""
    out = []
    for device in sorted(rows_by_device):
        for row in rows_by_device[device]:
            out.append([
                fmt(row.distance, 1), fmt(row.interval.low, 1), fmt(row.interval.high, 1),
                device, row.successes, row.failures, row.accuracy_pct(),
            ])
    return write_csv(path, ["meters", "interval_low", "interval_high", "device",
                            "successes", "failures", "accuracy_pct"], out)


def write_reconnect_runs_csv(path, rows) -> Path:
    """`distance_m,pair,run_index,elapsed_s`; unrecovered rows carry an empty
    elapsed cell."""
    out = [[fmt(r["distance_m"], 1), pair_label(r["pair"]), r["run_index"],
            fmt(r["elapsed_s"])] for r in rows]
    return write_csv(path, ["distance_m", "pair", "run_index", "elapsed_s"], out)


def write_reconnect_mean_csv(path, mean_rows) -> Path:
    """`distance_m,pair,mean_elapsed_s` aggregated over runs."""
    out = [[fmt(r["distance_m"], 1), pair_label(r["pair"]), fmt(r["mean_elapsed_s"])]
           for r in mean_rows]
    return write_csv(path, ["distance_m", "pair", "mean_elapsed_s"], out)


def write_reconnect_table(path, mean_rows) -> Path:
    """Reestablishment-time table: one row per distance, one column per pair."""
    pairs = sorted({r["pair"] for r in mean_rows})
    by_distance: dict[float, dict] = {}
    for r in mean_rows:
        by_distance.setdefault(r["distance_m"], {})[r["pair"]] = r["mean_elapsed_s"]
    header = ["distance_m"] + [
        pair_label(p).lower().replace(" ", "_") + "_s" for p in pairs]
    rows = []
    for d in sorted(by_distance):
        rows.append([fmt(d, 1)] + [fmt(by_distance[d].get(p)) for p in pairs])
    return write_csv(path, header, rows)


def write_separation_events_csv(path, events) -> Path:
    """`tick,sender,receiver,kind,estimated_m,true_m`"""
    out = [[e.tick, e.sender, e.receiver, e.kind, fmt(e.estimated_m), fmt(e.true_m)]
           for e in events]
    return write_csv(path, ["tick", "sender", "receiver", "kind",
                            "estimated_m", "true_m"], out)


def write_assignment_csv(path, areas) -> Path:
    """`area_id,priority,uav_id`"""
    out = [[a.id, a.priority.value, a.assigned_uav if a.assigned_uav is not None else ""]
           for a in sorted(areas, key=lambda a: a.id)]
    return write_csv(path, ["area_id", "priority", "uav_id"], out)


def write_pose_trace_csv(path, trace) -> Path:
    """`tick,x_m,y_m,theta_rad,score`"""
    out = [[r.tick, fmt(r.x, 6), fmt(r.y, 6), fmt(r.theta, 6), r.score] for r in trace]
    return write_csv(path, ["tick", "x_m", "y_m", "theta_rad", "score"], out)


def write_true_pose_csv(path, trace) -> Path:
    out = [[r.tick, fmt(r.true_x, 6), fmt(r.true_y, 6), fmt(r.true_theta, 6)]
           for r in trace]
    return write_csv(path, ["tick", "x_m", "y_m", "theta_rad"], out)


def write_learning_trace_csv(path, rows) -> Path:
    """`tick,uav_id,rate_bucket,energy_bucket,action,reward,q_value`"""
    out = [[r.tick, r.uav_id, r.rate_bucket, r.energy_bucket, r.action,
            fmt(r.reward), fmt(r.q_value)] for r in rows]
    return write_csv(path, ["tick", "uav_id", "rate_bucket", "energy_bucket",
                            "action", "reward", "q_value"], out)


def write_summary(path, entries: dict) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        for key, value in entries.items():
            fh.write(f"{key} = {value}\n")
    return path
