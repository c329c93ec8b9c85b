"""Output records, CSV time series, and VTK legacy field dumps.

Monitor-point concentrations are reported in the current configuration
(c0/J); reference quantities never appear in user-facing files.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

CSV_COLUMNS = ("t", "u_x", "u_y", "u_z", "Jg", "theta", "c_P", "c_T", "c_E", "rho_S",
               "newton_iters", "wall_time")


@dataclass
class OutputRecord:
    t: float
    u_monitor: np.ndarray
    Jg: float
    theta: float
    c_P: float
    c_T: float
    c_E: float
    rho_S: float
    diagnostics: object = None
    line_u: np.ndarray | None = None
    state: object = None

    def row(self):
        it = self.diagnostics.newton_iters if self.diagnostics else 0
        wt = self.diagnostics.wall_time if self.diagnostics else 0.0
        return (self.t, *self.u_monitor, self.Jg, self.theta, self.c_P, self.c_T,
                self.c_E, self.rho_S, it, wt)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_timeseries(records, path) -> str:
    """One CSV row per record, 17 significant digits (round-trips bit-exactly)."""
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for rec in records:
            fh.write(",".join(_fmt(v) for v in rec.row()) + "\n")
    return path


def read_timeseries(path) -> dict:
    """Columns of a written time series keyed by header name."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = [line.strip().split(",") for line in fh if line.strip()]
    cols = {name: np.array([float(row[i]) for row in data]) for i, name in enumerate(header)}
    return cols


def write_fields(mesh, state, path, point_data=None, cell_data=None) -> str:
    """VTK legacy ASCII unstructured grid with nodal and per-cell fields.

    Default point data: displacement, spatial concentrations c0/J and
    rho0_S/J; default cell data: quadrature-averaged theta and Jg must be
    passed by the caller (they depend on the growth model).
    """
    nodes, elems = mesh.nodes, mesh.elements
    point_data = dict(point_data or {})
    cell_data = dict(cell_data or {})
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("arterial wall fields\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(nodes)} double\n")
        for p in nodes:
            fh.write(f"{p[0]:.12g} {p[1]:.12g} {p[2]:.12g}\n")
        fh.write(f"CELLS {len(elems)} {9 * len(elems)}\n")
        for e in elems:
            fh.write("8 " + " ".join(str(n) for n in e) + "\n")
        fh.write(f"CELL_TYPES {len(elems)}\n")
        fh.write("\n".join(["12"] * len(elems)) + "\n")

        fh.write(f"POINT_DATA {len(nodes)}\n")
        fh.write("VECTORS displacement double\n")
        for v in state.u:
            fh.write(f"{v[0]:.12g} {v[1]:.12g} {v[2]:.12g}\n")
        for name, arr in point_data.items():
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            fh.write("\n".join(f"{x:.12g}" for x in arr) + "\n")
        if cell_data:
            fh.write(f"CELL_DATA {len(elems)}\n")
            for name, arr in cell_data.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                fh.write("\n".join(f"{x:.12g}" for x in arr) + "\n")
    return path


def write_mesh(mesh, path) -> str:
    """Bare mesh dump for visual inspection."""

    class _Empty:
        u = np.zeros((mesh.n_nodes, 3))

    return write_fields(mesh, _Empty(), path)


def state_point_data(model, state) -> dict:
    """Spatial concentrations and density from a solver state."""
    Jnod = model.project_nodal_J(state.u)
    return {
        "c_P": state.c0_P / Jnod,
        "c_T": state.c0_T / Jnod,
        "c_E": state.c0_E / Jnod,
        "rho_S": state.rho0_S / Jnod,
        "J": Jnod,
    }


def state_cell_data(model, state) -> dict:
    theta, Jg = model.hex.growth_qp(state.rho0_S)
    return {"theta": theta.mean(axis=1), "Jg": Jg.mean(axis=1)}


def dump_state(model, state, path) -> str:
    return write_fields(model.mesh, state, path,
                        point_data=state_point_data(model, state),
                        cell_data=state_cell_data(model, state))


def neointimal_thickness(mesh, line_nodes, records):
    """Thickness history along a lumen line from recorded line displacements.

    The inward radial displacement of each lumen node is read as local
    neointimal thickness. Returns (times, thickness[time, node]).
    """
    xy = mesh.nodes[line_nodes][:, :2]
    e_r = xy / np.linalg.norm(xy, axis=1, keepdims=True)
    times, profiles = [], []
    for rec in records:
        if rec.line_u is None:
            continue
        u_r = np.einsum("ni,ni->n", rec.line_u[:, :2], e_r)
        times.append(rec.t)
        profiles.append(-u_r)
    return np.array(times), np.array(profiles)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
