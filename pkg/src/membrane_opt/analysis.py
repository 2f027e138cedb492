"""Energies, free-boundary extraction and theory-backed checks on discrete solutions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import FemSystem, assemble, element_gradients
from .mesh import Mesh, distance_to_boundary


def energy_report(system: FemSystem, lam, theta, m: float) -> dict:
    """Three discrete energies of the state ``lam`` with reinforcement ``theta``.

    ``E_f`` is the compliance form ``-1/2 int f u``; ``J_value`` the energy of
    the reinforced membrane; ``F1_value`` the sup-norm penalized functional.
    At a discrete optimum all three coincide.
    """
    lam = np.asarray(lam, dtype=float)
    theta = np.asarray(theta, dtype=float)
    gx, gy = element_gradients(system, lam)
    g = gx * gx + gy * gy
    fu = system.integral_fu(lam)
    kappa2 = float(g.max()) if g.size else 0.0
    return {
        "E_f": -0.5 * fu,
        "J_value": float(0.5 * np.sum(system.areas * (1.0 + theta) * g) - fu),
        "F1_value": float(0.5 * lam @ (system.stiffness @ lam) + 0.5 * m * kappa2 - fu),
    }


@dataclass
class FreeBoundaryReport:
    kappa_hat: float
    plastic: np.ndarray
    polylines: list
    plastic_area_fraction: float
    interface_edges: np.ndarray

    @property
    def n_plastic(self) -> int:
        return int(self.plastic.sum())

    @property
    def n_elastic(self) -> int:
        return int((~self.plastic).sum())


def triangle_neighbors(mesh: Mesh):
    """Interior edges ``(n, 2)`` and the two triangles sharing each, ``(n, 2)``."""
    t = mesh.triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e.sort(axis=1)
    owner = np.tile(np.arange(len(t)), 3)
    order = np.lexsort((e[:, 1], e[:, 0]))
    e, owner = e[order], owner[order]
    same = np.all(e[1:] == e[:-1], axis=1)
    idx = np.flatnonzero(same)
    return e[idx], np.column_stack([owner[idx], owner[idx + 1]])


def _chain(edges: np.ndarray) -> list:
    """Split an edge set into maximal vertex chains (closed chains repeat the start)."""
    adj: dict[int, list[int]] = {}
    for k, (a, b) in enumerate(edges.tolist()):
        adj.setdefault(a, []).append(k)
        adj.setdefault(b, []).append(k)
    used = np.zeros(len(edges), dtype=bool)
    chains = []
    # open chains start at vertices of odd degree, then close the remaining loops
    starts = [v for v, ks in sorted(adj.items()) if len(ks) % 2 == 1]
    starts += sorted(adj)
    for start in starts:
        while any(not used[k] for k in adj[start]):
            path = [start]
            v = start
            while True:
                nxt = next((k for k in adj[v] if not used[k]), None)
                if nxt is None:
                    break
                used[nxt] = True
                a, b = edges[nxt]
                v = int(b if a == v else a)
                path.append(v)
            chains.append(np.array(path))
    return chains


def extract_free_boundary(system: FemSystem, lam, eps_fb: float = 0.05) -> FreeBoundaryReport:
    """Classify triangles as plastic (``|grad u| >= (1-eps) kappa_hat``) or elastic
    and trace the interface between the two sets as polylines of mesh vertices."""
    gx, gy = element_gradients(system, lam)
    return classify_plastic(system.mesh, gx * gx + gy * gy, eps_fb)


def classify_plastic(mesh: Mesh, g, eps_fb: float = 0.05) -> FreeBoundaryReport:
    """Free-boundary report from per-triangle squared gradient norms ``g``."""
    if not 0 < eps_fb < 0.5:
        raise ValueError("eps_fb must lie in (0, 0.5)")
    g = np.asarray(g, dtype=float)
    kappa2 = float(g.max()) if g.size else 0.0
    if kappa2 == 0.0:
        plastic = np.zeros(len(g), dtype=bool)
    else:
        plastic = g >= (1.0 - eps_fb) ** 2 * kappa2
    edges, pair = triangle_neighbors(mesh)
    mixed = plastic[pair[:, 0]] != plastic[pair[:, 1]]
    iface = edges[mixed]
    areas = mesh.triangle_area
    return FreeBoundaryReport(
        kappa_hat=float(np.sqrt(kappa2)),
        plastic=plastic,
        polylines=_chain(iface) if len(iface) else [],
        plastic_area_fraction=float(areas[plastic].sum() / areas.sum()),
        interface_edges=iface,
    )


def obstacle_check(system: FemSystem, lam, d_boundary=None) -> float:
    """``max_v (u(v) - kappa_hat d(v))``; nonpositive when ``u`` lies below the
    distance-function obstacle scaled by its own maximal slope."""
    if d_boundary is None:
        d_boundary = distance_to_boundary(system.mesh)
    gx, gy = element_gradients(system, lam)
    kappa = float(np.sqrt((gx * gx + gy * gy).max())) if len(gx) else 0.0
    return float(np.max(system.extend(lam) - kappa * np.asarray(d_boundary)))


def theta_mass_below(system: FemSystem, lam, theta, ratio: float = 0.81) -> float:
    """Reinforcement mass on triangles where ``g_l < ratio * kappa_hat^2``."""
    gx, gy = element_gradients(system, lam)
    g = gx * gx + gy * gy
    low = g < ratio * g.max()
    return float(np.sum(system.areas[low] * np.asarray(theta)[low]))


def l2_norm(system: FemSystem, values) -> float:
    """L^2 norm of the P1 interpolant of vertex ``values``."""
    v = np.asarray(values, dtype=float)
    return float(np.sqrt(max(v @ (system.mass_full @ v), 0.0)))


def asymptotic_check(mesh: Mesh, f, m_large: float, solver: str = "constrained", config=None) -> float:
    """Relative L^2 distance between ``m u_m`` and ``C_D d`` with ``C_D = int d f``.

    For large ``m`` the rescaled state approaches a multiple of the distance
    function; a zero load gives a zero state and distance 0 by convention.
    """
    from .solver_minimax import solve_constrained
    from .solver_p import continuation

    system = assemble(mesh, f)
    if np.any(system.f < 0):
        raise ValueError("asymptotic check requires a nonnegative load")
    dist = distance_to_boundary(mesh)
    c_d = float(dist @ (system.mass_full @ system.f))
    if c_d == 0.0:
        return 0.0
    if solver == "constrained":
        lam = solve_constrained(system, m_large, config).lam
    elif solver == "p":
        lam = continuation(system, m_large, config).final.lam
    else:
        raise ValueError(f"unknown solver {solver!r}")
    diff = m_large * system.extend(lam) - c_d * dist
    return l2_norm(system, diff) / l2_norm(system, c_d * dist)


def square_medial_axis_distance(points, side: float = 1.0, origin=(0.0, 0.0)) -> np.ndarray:
    """Distance from ``points`` to the medial axis of an axis-aligned square (its
    two diagonals)."""
    p = np.asarray(points, dtype=float) - np.asarray(origin) - side / 2.0
    x, y = p[:, 0], p[:, 1]
    # distance to the lines y = x and y = -x, clipped to the diagonal segments
    out = np.full(len(p), np.inf)
    half = side / 2.0
    for direction in (np.array([1.0, 1.0]), np.array([1.0, -1.0])):
        u = direction / np.linalg.norm(direction)
        s = np.clip(x * u[0] + y * u[1], -half * np.sqrt(2), half * np.sqrt(2))
        dx, dy = x - s * u[0], y - s * u[1]
        out = np.minimum(out, np.hypot(dx, dy))
    return out


def vertex_average(mesh: Mesh, cell_values) -> np.ndarray:
    """Area-weighted mean of a per-triangle field over each vertex star.

    Per-triangle multipliers of the constrained problem are not unique (there
    are more active constraints than unknowns), so only local averages of the
    recovered reinforcement are meaningful pointwise.
    """
    nt = mesh.n_triangles
    star = sp.csr_matrix(
        (np.repeat(mesh.triangle_area, 3), (mesh.triangles.ravel(), np.repeat(np.arange(nt), 3))),
        shape=(mesh.n_vertices, nt),
    )
    return (star @ np.asarray(cell_values, dtype=float)) / (star @ np.ones(nt))


def radial_errors(system: FemSystem, lam, theta, m: float) -> dict:
    """Errors against the unit-disk closed form (``f = 1``).

    ``theta_rel_l1`` compares vertex-star averages of ``theta`` with the exact
    reinforcement at the vertices (lumped-mass weights);
    ``theta_rel_l1_triangle`` is the raw per-triangle comparison at centroids.
    """
    from .oracle import radial_solution, theta_bar, u_bar

    sol = radial_solution(2, m)
    mesh = system.mesh
    theta = np.asarray(theta, dtype=float)
    r = np.minimum(np.hypot(mesh.vertices[:, 0], mesh.vertices[:, 1]), 1.0)
    exact = u_bar(sol, r)
    err = system.extend(lam) - exact
    gx, gy = element_gradients(system, lam)
    out = {
        "a_m": sol.a_m,
        "kappa": sol.kappa,
        "kappa_hat": float(np.sqrt((gx * gx + gy * gy).max())),
        "u_rel_l2": l2_norm(system, err) / l2_norm(system, exact),
        "theta_rel_l1": None,
        "theta_rel_l1_triangle": None,
    }
    lumped = np.asarray(system.mass_full.sum(axis=1)).ravel()
    th_vertex = theta_bar(sol, r)
    if lumped @ th_vertex > 0:
        smooth = vertex_average(mesh, theta)
        out["theta_rel_l1"] = float(lumped @ np.abs(smooth - th_vertex) / (lumped @ th_vertex))
    rc = np.minimum(np.hypot(*mesh.centroids.T), 1.0)
    th_cell = theta_bar(sol, rc)
    denom = float(system.areas @ th_cell)
    if denom > 0:
        out["theta_rel_l1_triangle"] = float(system.areas @ np.abs(theta - th_cell)) / denom
    return out
