"""Output bundle writers: trajectory/events/theta CSVs plus a JSON summary."""

from __future__ import annotations

import json
import math
import os
from pathlib import Path

import numpy as np

TRAJECTORY_CSV = "trajectory.csv"
EVENTS_CSV = "events.csv"
THETA_CSV = "theta.csv"
SUMMARY_JSON = "summary.json"


def fmt(v):
    """17 significant digits: enough to reproduce every double exactly."""
    return "%.17g" % v


def clean_json(obj):
    """Replace non-finite floats with ``None`` so the output stays valid JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean_json(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean_json(obj.tolist())
    if isinstance(obj, np.generic):
        return clean_json(obj.item())
    return obj


def dump_json(obj, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(clean_json(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_trajectory(result, path):
    n = result.x.shape[1]
    m = result.u.shape[1]
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)] + ["Hd"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for t, x, u, hd in zip(result.t, result.x, result.u, result.hd):
            fh.write(",".join([fmt(t)] + [fmt(v) for v in x] + [fmt(v) for v in u] + [fmt(hd)]) + "\n")


def write_events(result, path):
    ev = result.events
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("k,t_k,dt,node_ids,gap_at_fire\n")
        for k in range(len(ev)):
            nodes = ev.nodes[k]
            node_ids = ";".join(str(v) for v in nodes) if nodes else ("init" if k == 0 else "")
            gaps = ";".join(fmt(g) for g in ev.gaps[k])
            fh.write(f"{k},{fmt(ev.t[k])},{fmt(ev.dt[k])},{node_ids},{gaps}\n")


def write_theta(result, path):
    thetas = result.events.thetas()
    n_nodes = thetas.shape[1]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(["k"] + [f"theta_{i + 1}" for i in range(n_nodes)]) + "\n")
        for k, row in enumerate(thetas):
            fh.write(",".join([str(k)] + [fmt(v) for v in row]) + "\n")


def write_bundle(result, out_dir):
    """Write the four bundle files into ``out_dir`` (created if needed); return their paths."""
    out = Path(out_dir)
    os.makedirs(out, exist_ok=True)
    paths = {
        "trajectory": out / TRAJECTORY_CSV,
        "events": out / EVENTS_CSV,
        "theta": out / THETA_CSV,
        "summary": out / SUMMARY_JSON,
    }
    write_trajectory(result, paths["trajectory"])
    write_events(result, paths["events"])
    write_theta(result, paths["theta"])
    summary = result.summary()
    summary["files"] = {k: p.name for k, p in paths.items()}
    summary["warning_messages"] = result.warnings[:20]
    dump_json(summary, paths["summary"])
    return paths


def read_csv(path):
    """Read one of the bundle CSVs back as ``(header, rows)`` with string cells."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]
