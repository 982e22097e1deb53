"""Legacy ASCII VTK (version 2.0) output of meshes and cellwise solution data."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .polybasis import triangle_rule

VTK_TRIANGLE = 5


def _header(mesh, title):
    lines = ["# vtk DataFile Version 2.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.n_vertices} double")
    lines += [f"{x:.16e} {y:.16e} 0.0" for x, y in mesh.vertices]
    lines.append(f"CELLS {mesh.n_cells} {4 * mesh.n_cells}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.cells]
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines += [str(VTK_TRIANGLE)] * mesh.n_cells
    return lines


def write_mesh(path, mesh, title="dfstokes mesh"):
    Path(path).write_text("\n".join(_header(mesh, title)) + "\n")


def cell_fields(solution, degree: int = 4):
    """Cell averages of ``u_h`` and ``p_h`` and the max of ``|div u_h|`` per cell."""
    disc = solution.disc
    mesh = disc.mesh
    pts, wts = triangle_rule(degree).on_cells(mesh)
    uh, div, _ = disc.velocity.evaluate(solution.u, pts)
    ph = disc.pressure.evaluate(solution.p, pts)
    area = mesh.areas[:, None]
    u_avg = np.einsum("cp,cpd->cd", wts, uh) / area
    p_avg = np.einsum("cp,cp->c", wts, ph) / mesh.areas
    return u_avg, p_avg, np.max(np.abs(div), axis=1)


def write_solution(path, solution, title="dfstokes solution"):
    mesh = solution.disc.mesh
    u_avg, p_avg, div_max = cell_fields(solution)
    lines = _header(mesh, title)
    lines.append(f"CELL_DATA {mesh.n_cells}")
    lines.append("VECTORS velocity double")
    lines += [f"{a:.16e} {b:.16e} 0.0" for a, b in u_avg]
    lines += ["SCALARS pressure double 1", "LOOKUP_TABLE default"]
    lines += [f"{v:.16e}" for v in p_avg]
    lines += ["SCALARS div_max double 1", "LOOKUP_TABLE default"]
    lines += [f"{v:.16e}" for v in div_max]
    Path(path).write_text("\n".join(lines) + "\n")
