"""Trajectory CSV and sweep-report serialization."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .integrator import Trajectory

COLUMNS = ("r", "psi", "dpsi", "ddpsi", "F", "Fprime", "R", "rbar_residual")


def trajectory_columns(traj: Trajectory, stride: int = 1) -> dict[str, np.ndarray]:
    if stride < 1:
        raise ValueError("stride must be >= 1")
    idx = np.arange(0, len(traj.r), stride)
    if idx[-1] != len(traj.r) - 1:
        idx = np.append(idx, len(traj.r) - 1)
    full = {
        "r": traj.r,
        "psi": traj.psi,
        "dpsi": traj.dpsi,
        "ddpsi": traj.ddpsi,
        "F": traj.F,
        "Fprime": traj.Fprime,
        "R": traj.R,
        "rbar_residual": traj.rbar_residual,
    }
    return {k: np.asarray(v)[idx] for k, v in full.items()}


def export_trajectory(traj: Trajectory, path, fmt: str = "csv", stride: int = 1) -> Path:
    """Write knots (every ``stride``-th, last always kept) with shortest round-trip floats."""
    if fmt != "csv":
        raise ValueError(f"unsupported format {fmt!r}")
    path = Path(path)
    cols = trajectory_columns(traj, stride)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(COLUMNS)
            for row in zip(*(cols[c] for c in COLUMNS)):
                writer.writerow([repr(float(v)) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write trajectory to {path}: {exc.strerror or exc}") from exc
    return path


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = [[float(v) for v in row] for row in reader]
    data = np.array(rows, dtype=float).reshape(len(rows), len(COLUMNS))
    return {name: data[:, i] for i, name in enumerate(COLUMNS)}
