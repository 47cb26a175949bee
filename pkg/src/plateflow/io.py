"""Run artifacts: history CSV, legacy-VTK surfaces, reports, checkpoints.

Every writer is plain text so runs stay diffable and inspectable without
tooling.  Values carry at least nine significant digits.
"""

from __future__ import annotations

import os

import numpy as np

from .constraints import nodal_isometry_defects
from .dkt import DeformationField
from .flow import HistoryRecord, RunReport
from .mesh import TriangleMesh

HISTORY_HEADER = "iter,energy,penalty_energy,delta_iso,delta_pen,update_norm"


def _fmt(x: float) -> str:
    return f"{x:.12g}"


class HistoryCsvWriter:
    """Appends history records and flushes every `flush_every` rows, so long
    runs can be inspected while still iterating."""

    def __init__(self, path, flush_every: int = 100):
        self.path = path
        self.flush_every = flush_every
        self._file = open(path, "w")
        self._file.write(HISTORY_HEADER + "\n")
        self._file.flush()
        self._since_flush = 0

    def write(self, rec: HistoryRecord) -> None:
        self._file.write(",".join([
            str(rec.k), _fmt(rec.energy), _fmt(rec.penalty_energy),
            _fmt(rec.delta_iso), _fmt(rec.delta_pen), _fmt(rec.update_norm)]) + "\n")
        self._since_flush += 1
        if self._since_flush >= self.flush_every:
            self._file.flush()
            self._since_flush = 0

    def close(self) -> None:
        self._file.flush()
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_history_csv(history, path) -> None:
    """One-shot dump of a finished run's history."""
    with HistoryCsvWriter(path, flush_every=1_000_000) as w:
        for rec in history:
            w.write(rec)


def read_history_csv(path) -> dict:
    """Columns of a history file as arrays keyed by header name."""
    with open(path) as f:
        header = f.readline().strip().split(",")
        rows = [line.strip().split(",") for line in f if line.strip()]
    cols = np.array(rows, dtype=np.float64).T if rows else np.empty((len(header), 0))
    return {name: cols[i] for i, name in enumerate(header)}


def write_vtk_surface(field: DeformationField, mesh: TriangleMesh, path,
                      obstacle_height: float = 1.0, title: str = "deformed plate") -> None:
    """Legacy ASCII VTK unstructured grid of the deformed surface.

    Points are the nodal positions; point data carry the nodal isometry-defect
    magnitude and the obstacle penetration (y3 - height)_+.
    """
    pos = field.positions()
    defect = nodal_isometry_defects(field)
    pen = np.maximum(pos[:, 2] - obstacle_height, 0.0)
    nv = mesh.num_vertices
    nt = mesh.num_triangles
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 2.0\n")
        f.write(title + "\n")
        f.write("ASCII\n")
        f.write("DATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {nv} double\n")
        for x, y, z in pos:
            f.write(f"{x:.12g} {y:.12g} {z:.12g}\n")
        f.write(f"CELLS {nt} {4 * nt}\n")
        for a, b, c in mesh.triangles:
            f.write(f"3 {a} {b} {c}\n")
        f.write(f"CELL_TYPES {nt}\n")
        f.write("5\n" * nt)
        f.write(f"POINT_DATA {nv}\n")
        f.write("SCALARS isometry_defect double\nLOOKUP_TABLE default\n")
        for v in defect:
            f.write(f"{v:.12g}\n")
        f.write("SCALARS obstacle_penetration double\nLOOKUP_TABLE default\n")
        for v in pen:
            f.write(f"{v:.12g}\n")


def write_report(report: RunReport, path, config_echo: dict | None = None) -> None:
    """Key-value run summary mirroring the benchmark tables."""
    lines = [
        ("iterations", report.iterations),
        ("termination_reason", report.termination_reason),
        ("energy", _fmt(report.energy)),
        ("energy_with_mismatch_constant", _fmt(report.energy_with_mismatch_constant)),
        ("mismatch_constant", _fmt(report.mismatch_constant)),
        ("penalty_energy", _fmt(report.penalty_energy)),
        ("total_energy", _fmt(report.total_energy)),
        ("delta_iso", _fmt(report.delta_iso)),
        ("delta_pen", _fmt(report.delta_pen)),
        ("last_update_norm", _fmt(report.last_update_norm)),
        ("initial_energy", _fmt(report.initial_energy)),
        ("wall_time_s", _fmt(report.wall_time)),
    ]
    with open(path, "w") as f:
        for key, value in lines:
            f.write(f"{key}: {value}\n")
        for key, value in (config_echo or {}).items():
            f.write(f"config.{key}: {value}\n")


def read_report(path) -> dict:
    out = {}
    with open(path) as f:
        for line in f:
            if ":" in line:
                key, value = line.split(":", 1)
                out[key.strip()] = value.strip()
    return out


def save_field(field: DeformationField, path) -> None:
    """Checkpoint: one vertex per line, 9 dof values at full precision."""
    nod = field.nodal()
    with open(path, "w") as f:
        f.write(f"dkt-field vertices {field.num_vertices}\n")
        for row in nod.reshape(field.num_vertices, 9):
            f.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_field(path) -> DeformationField:
    with open(path) as f:
        head = f.readline().split()
        if len(head) != 3 or head[0] != "dkt-field":
            raise ValueError(f"{path}: not a field checkpoint")
        nv = int(head[2])
        rows = [[float(w) for w in f.readline().split()] for _ in range(nv)]
    return DeformationField(np.asarray(rows, dtype=np.float64).reshape(-1))


def write_rear_edge_trace(mesh: TriangleMesh, field: DeformationField, path,
                          x2: float = 2.0) -> None:
    """Deformed positions along the boundary line x2 = const (the rear edge),
    sorted by reference x1: columns x_ref, y_1, y_3."""
    on_line = np.isclose(mesh.vertices[:, 1], x2)
    idx = np.flatnonzero(on_line)
    idx = idx[np.argsort(mesh.vertices[idx, 0])]
    pos = field.positions()
    with open(path, "w") as f:
        f.write("x_ref,y_1,y_3\n")
        for v in idx:
            f.write(f"{mesh.vertices[v, 0]:.12g},{pos[v, 0]:.12g},{pos[v, 2]:.12g}\n")


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path
