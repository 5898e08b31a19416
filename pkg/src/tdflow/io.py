"""Trajectory storage: a columnar CSV, a state array and a JSON manifest."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .catalog import build_functional, resolution, space_name
from .errors import InvalidStateError
from .scheme import Partition, StepRecord, Trajectory

MANIFEST_VERSION = 1
COLUMNS = ["step", "time", "state_ref", "distance", "energy", "energy_before", "iterations",
           "converged", "residual"]


def _coords(F, u) -> np.ndarray:
    return np.asarray(F.space.coords(u), dtype=float)


def save_trajectory(traj: Trajectory, directory, functional_config: dict | None = None) -> Path:
    """Write ``trajectory.csv``, ``states.npy`` and ``manifest.json``; floats keep full precision."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    F = traj.functional
    states = np.stack([_coords(F, u) for u in traj.states])
    with open(out / "states.npy", "wb") as fh:
        np.save(fh, states, allow_pickle=False)
    e0 = float(F.energy(0.0, traj.states[0]))
    with open(out / "trajectory.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        w.writerow([0, repr(float(traj.marks[0])), "states.npy#0", repr(0.0), repr(e0), repr(e0), 0, 1,
                    repr(0.0)])
        for n, r in enumerate(traj.records, start=1):
            w.writerow([n, repr(float(traj.marks[n])), f"states.npy#{n}", repr(float(r.distance)),
                        repr(float(r.energy)), repr(float(r.energy_before)), int(r.iterations),
                        int(bool(r.converged)), repr(float(r.residual))])
    cfg = functional_config if functional_config is not None else getattr(F, "config", {})
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "space": space_name(F),
        "resolution": resolution(F),
        "functional": cfg,
        "steps": len(traj.records),
        "partition_steps": len(traj.partition),
        "final_mark": repr(float(traj.partition.T)),
        "marks": [repr(float(m)) for m in traj.partition.marks],
        "states_file": "states.npy",
        "table_file": "trajectory.csv",
        "columns": COLUMNS,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def load_trajectory(directory, functional=None) -> Trajectory:
    src = Path(directory)
    manifest = json.loads((src / "manifest.json").read_text())
    if manifest.get("manifest_version") != MANIFEST_VERSION:
        raise InvalidStateError("unsupported manifest version")
    F = functional
    if F is None:
        F = build_functional(manifest["space"], manifest["functional"], manifest["resolution"])
    marks = np.array([float(m) for m in manifest["marks"]])
    with open(src / manifest["states_file"], "rb") as fh:
        states = np.load(fh, allow_pickle=False)
    rows = list(csv.reader((src / manifest["table_file"]).open()))
    if rows[0] != COLUMNS:
        raise InvalidStateError("trajectory CSV header mismatch")
    records = []
    for row in rows[2:]:
        records.append(StepRecord(float(row[3]), float(row[4]), float(row[5]), int(row[6]),
                                  bool(int(row[7])), float(row[8])))
    pts = [F.space.point(states[k]) for k in range(states.shape[0])]
    return Trajectory(Partition(marks), pts, records, F)
