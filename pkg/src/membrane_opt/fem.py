"""P1 finite-element operators on a triangular mesh.

Dirichlet conditions are imposed by elimination: unknowns live on interior
vertices only, and boundary values are implicitly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import MeshError, SolverError
from .mesh import Mesh

SOLVE_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class FemSystem:
    """Assembled P1 operators.

    ``grad_x``/``grad_y`` act on full vertex vectors (n_t x n_v); the ``_int``
    variants are their restrictions to interior columns and act on ``lambda``.
    """

    mesh: Mesh
    f: np.ndarray
    stiffness: sp.csc_matrix
    stiffness_full: sp.csr_matrix
    mass_full: sp.csr_matrix
    grad_x: sp.csr_matrix
    grad_y: sp.csr_matrix
    grad_x_int: sp.csr_matrix
    grad_y_int: sp.csr_matrix
    load: np.ndarray
    interior: np.ndarray
    interior_index: np.ndarray
    areas: np.ndarray

    @property
    def n_interior(self) -> int:
        return len(self.interior)

    def extend(self, lam: np.ndarray) -> np.ndarray:
        """Zero-extend interior coefficients to all vertices."""
        lam = self._check(lam)
        full = np.zeros(self.mesh.n_vertices)
        full[self.interior] = lam
        return full

    def _check(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (self.n_interior,):
            raise ValueError(
                f"coefficient vector has shape {lam.shape}, expected ({self.n_interior},)"
            )
        return lam

    def integral_fu(self, lam) -> float:
        """Discrete pairing of ``f`` and ``u``: ``load . lambda``."""
        return float(self.load @ self._check(lam))


def local_gradients(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Constant gradients of the three barycentric functions on every triangle."""
    p = mesh.vertices[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    twice_area = 2.0 * mesh.triangle_area
    # vertex i: (y_j - y_k, x_k - x_j) / 2A with (i, j, k) cyclic
    bx = (np.roll(y, -1, axis=1) - np.roll(y, -2, axis=1)) / twice_area[:, None]
    by = (np.roll(x, -2, axis=1) - np.roll(x, -1, axis=1)) / twice_area[:, None]
    return bx, by


def assemble(mesh: Mesh, f) -> FemSystem:
    """Assemble stiffness, mass, gradient operators and the load vector.

    Parameters
    ----------
    mesh : Mesh
    f : float or (n_v,) array
        Load sampled at the vertices. The load vector is ``M f`` restricted to
        the interior vertices.
    """
    n_v, n_t = mesh.n_vertices, mesh.n_triangles
    f = np.broadcast_to(np.asarray(f, dtype=float), (n_v,)).copy()
    if not np.all(np.isfinite(f)):
        raise ValueError("load f must be finite at every vertex")
    scale = np.ptp(mesh.vertices, axis=0).max()
    tiny = np.flatnonzero(mesh.triangle_area < 1e-14 * scale**2)
    if tiny.size:
        raise MeshError(f"degenerate triangle {int(tiny[0])}")

    tri = mesh.triangles
    area = mesh.triangle_area
    bx, by = local_gradients(mesh)
    rows = np.repeat(np.arange(n_t), 3)
    grad_x = sp.csr_matrix((bx.ravel(), (rows, tri.ravel())), shape=(n_t, n_v))
    grad_y = sp.csr_matrix((by.ravel(), (rows, tri.ravel())), shape=(n_t, n_v))

    local_k = area[:, None, None] * (bx[:, :, None] * bx[:, None, :] + by[:, :, None] * by[:, None, :])
    local_m = area[:, None, None] / 12.0 * (np.ones((3, 3)) + np.eye(3))
    ii = np.repeat(tri, 3, axis=1).ravel()
    jj = np.tile(tri, (1, 3)).ravel()
    stiff_full = sp.csr_matrix((local_k.ravel(), (ii, jj)), shape=(n_v, n_v))
    mass_full = sp.csr_matrix((local_m.ravel(), (ii, jj)), shape=(n_v, n_v))

    interior = np.flatnonzero(~mesh.boundary_vertex)
    index = np.full(n_v, -1, dtype=np.int64)
    index[interior] = np.arange(len(interior))
    stiffness = stiff_full[interior][:, interior].tocsc()
    load = (mass_full @ f)[interior]
    return FemSystem(
        mesh=mesh,
        f=f,
        stiffness=stiffness,
        stiffness_full=stiff_full,
        mass_full=mass_full,
        grad_x=grad_x,
        grad_y=grad_y,
        grad_x_int=grad_x[:, interior].tocsr(),
        grad_y_int=grad_y[:, interior].tocsr(),
        load=load,
        interior=interior,
        interior_index=index,
        areas=np.array(area),
    )


def element_gradients(system: FemSystem, lam) -> tuple[np.ndarray, np.ndarray]:
    """Per-triangle gradient ``(g_x, g_y)`` of the P1 function with interior values ``lam``."""
    lam = system._check(lam)
    return system.grad_x_int @ lam, system.grad_y_int @ lam


def squared_gradients(system: FemSystem, lam) -> np.ndarray:
    gx, gy = element_gradients(system, lam)
    return gx * gx + gy * gy


def dirichlet_energy(system: FemSystem, lam) -> float:
    """``1/2 lam^T K lam - load . lam``."""
    lam = system._check(lam)
    return float(0.5 * lam @ (system.stiffness @ lam) - system.load @ lam)


def solve_spd(matrix, rhs, rtol: float = SOLVE_RTOL, factor=None) -> np.ndarray:
    """Solve a sparse symmetric positive definite system to ``rtol`` relative residual.

    A sparse LU factorization is tried first; if its residual misses the bound
    it is used as a preconditioner for conjugate gradients.
    """
    rhs = np.asarray(rhs, dtype=float)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros_like(rhs)
    if factor is None:
        factor = spla.splu(sp.csc_matrix(matrix))
    x = factor.solve(rhs)
    res = np.linalg.norm(rhs - matrix @ x)
    if res <= rtol * bnorm:
        return x
    # one step of iterative refinement usually suffices
    x = x + factor.solve(rhs - matrix @ x)
    res = np.linalg.norm(rhs - matrix @ x)
    if res <= rtol * bnorm:
        return x
    precond = spla.LinearOperator(matrix.shape, matvec=factor.solve)
    x, info = spla.cg(matrix, rhs, x0=x, rtol=rtol, M=precond, maxiter=200)
    res = np.linalg.norm(rhs - matrix @ x)
    if res > rtol * bnorm:
        raise SolverError(f"linear solve stalled at relative residual {res / bnorm:.3e}", res / bnorm)
    return x


def poisson_solve(system: FemSystem) -> np.ndarray:
    """Unconstrained minimizer of :func:`dirichlet_energy` (the ``m = 0`` state)."""
    if system.n_interior == 0:
        return np.zeros(0)
    return solve_spd(system.stiffness, system.load)
