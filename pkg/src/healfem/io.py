"""Result files: time-series CSV and legacy ASCII VTK snapshots."""

import csv
import os

import numpy as np

from .healing import healing_parameter


def _fmt(v):
    # 17 significant digits round-trip every double
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def write_timeseries(path, records):
    """Comma-separated table with a header row; columns follow the first record."""
    if not records:
        raise ValueError("no records to write")
    names = list(records[0])
    times = [r["time"] for r in records]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("time series must be strictly increasing in time")
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in records:
            w.writerow([_fmt(r[n]) for n in names])


def read_timeseries(path):
    with open(path, newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    names = rows[0]
    data = np.array([[float(x) for x in row] for row in rows[1:]])
    return {n: data[:, i] for i, n in enumerate(names)}


def write_vtk(path, sim, title="healfem snapshot"):
    """
    Legacy ASCII unstructured grid of the reference mesh.

    CELL_DATA holds element averages of the internal variables and the
    region index; POINT_DATA holds displacement and the nonlocal field.
    """
    mesh = sim.mesh
    s = sim.state
    cells = {
        "region": mesh.region.astype(float),
        "H": healing_parameter(s).mean(axis=1),
        "lambda": np.asarray(s.lam).mean(axis=1),
        "Jg1": np.asarray(s.Jg1).mean(axis=1),
        "Jg2": np.asarray(s.Jg2).mean(axis=1),
        "d": np.asarray(s.d).mean(axis=1),
        "phi": np.asarray(s.phi).mean(axis=1),
    }
    u = sim.displacement
    n = mesh.n_nodes
    m = mesh.n_elements
    lines = ["# vtk DataFile Version 3.0", f"{title} t={_fmt(sim.t)}", "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {n} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.nodes]
    lines.append(f"CELLS {m} {5 * m}")
    lines += ["4 " + " ".join(str(i) for i in e) for e in mesh.elements]
    lines.append(f"CELL_TYPES {m}")
    lines += ["9"] * m
    lines.append(f"CELL_DATA {m}")
    for name, vals in cells.items():
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + [_fmt(v) for v in vals]
    lines.append(f"POINT_DATA {n}")
    lines.append("VECTORS displacement double")
    lines += [f"{_fmt(a)} {_fmt(b)} 0" for a, b in u]
    lines += ["SCALARS phi double 1", "LOOKUP_TABLE default"] + [_fmt(v) for v in sim.phi]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk_cell_data(path):
    """Cell scalars of a file written by ``write_vtk`` (for tests and quick checks)."""
    with open(path, encoding="ascii") as fh:
        tokens = fh.read().split("\n")
    out = {}
    i = tokens.index(next(t for t in tokens if t.startswith("CELL_DATA")))
    m = int(tokens[i].split()[1])
    i += 1
    while i < len(tokens) and tokens[i].startswith("SCALARS"):
        name = tokens[i].split()[1]
        out[name] = np.array([float(x) for x in tokens[i + 2:i + 2 + m]])
        i += 2 + m
    return out


def snapshot_name(t):
    return f"snapshot_{t:.6g}.vtk"


def write_sparse(path, K):
    """Coordinate text dump, one 'row col value' triple per line, 0-based."""
    K = K.tocoo()
    with open(path, "w", encoding="ascii") as fh:
        for r, c, v in zip(K.row, K.col, K.data):
            fh.write(f"{r} {c} {_fmt(v)}\n")


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
