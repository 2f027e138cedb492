"""Minimal legacy-ASCII VTK unstructured-grid writer for triangle meshes."""

from __future__ import annotations

from pathlib import Path

import numpy as np

VTK_TRIANGLE = 5


def write_vtk(path, mesh, point_data=None, cell_data=None, title="membrane_opt solution"):
    """Write ``mesh`` with scalar fields; ``point_data``/``cell_data`` map names to arrays."""
    point_data = point_data or {}
    cell_data = cell_data or {}
    n_v, n_t = mesh.n_vertices, mesh.n_triangles
    out = ["# vtk DataFile Version 2.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    out.append(f"POINTS {n_v} double")
    out += [f"{x!r} {y!r} 0.0" for x, y in mesh.vertices.tolist()]
    out.append(f"CELLS {n_t} {4 * n_t}")
    out += [f"3 {i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    out.append(f"CELL_TYPES {n_t}")
    out += [str(VTK_TRIANGLE)] * n_t
    for header, n, fields in (("POINT_DATA", n_v, point_data), ("CELL_DATA", n_t, cell_data)):
        if not fields:
            continue
        out.append(f"{header} {n}")
        for name, values in fields.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (n,):
                raise ValueError(f"field {name!r} has shape {values.shape}, expected ({n},)")
            out.append(f"SCALARS {name} double 1")
            out.append("LOOKUP_TABLE default")
            out += [repr(v) for v in values.tolist()]
    Path(path).write_text("\n".join(out) + "\n")


def read_vtk_scalars(path) -> dict:
    """Parse the scalar blocks of a file written by :func:`write_vtk` (used in tests)."""
    lines = Path(path).read_text().splitlines()
    fields = {}
    i = 0
    section = None
    n = 0
    while i < len(lines):
        tok = lines[i].split()
        if tok and tok[0] in ("POINT_DATA", "CELL_DATA"):
            section, n = tok[0], int(tok[1])
        elif tok and tok[0] == "SCALARS":
            vals = np.array([float(v) for v in lines[i + 2:i + 2 + n]])
            fields[(section, tok[1])] = vals
            i += 2 + n
            continue
        i += 1
    return fields
