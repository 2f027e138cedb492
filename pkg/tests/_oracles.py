"""Independent reference computations used by the tests.

Nothing here imports the package: each routine re-derives its quantity from
first principles so that agreement is meaningful.
"""

import itertools
import math

import numpy as np
from scipy import integrate, optimize


def am_polynomial_root(d, m):
    """Root in (0, 1] of a^(d+1) - (d+1) a (1 + m/omega_d) + d via companion matrix."""
    omega = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    coeffs = np.zeros(d + 2)
    coeffs[0] = 1.0
    coeffs[d] = -(d + 1) * (1 + m / omega)
    coeffs[d + 1] = d
    roots = np.roots(coeffs)
    real = roots[np.abs(roots.imag) < 1e-9].real
    cand = real[(real > 0) & (real <= 1 + 1e-12)]
    return float(min(cand.min(), 1.0))


def am_by_energy(m):
    """a minimizing the radial energy over the family of plastic-annulus profiles
    (d = 2, f = 1), computed by quadrature and scalar minimization."""

    def profile(a):
        def u(r):
            return np.where(r <= a, (a * a - r * r) / 4 + a * (1 - a) / 2, a * (1 - r) / 2)

        def du(r):
            return np.where(r <= a, -r / 2, -a / 2)

        return u, du

    def energy(a):
        u, du = profile(a)
        grad = integrate.quad(lambda r: 0.5 * du(r) ** 2 * r, 0, 1, points=[a])[0]
        load = integrate.quad(lambda r: u(r) * r, 0, 1, points=[a])[0]
        # 2 pi (int 1/2 |u'|^2 r dr - int u r dr) + m/2 kappa^2, kappa = a/2
        return 2 * math.pi * (grad - load) + 0.5 * m * (a / 2) ** 2

    res = optimize.minimize_scalar(energy, bounds=(1e-6, 1.0), method="bounded",
                                   options={"xatol": 1e-12})
    return float(res.x)


def disk_poisson_energy():
    """-1/2 int (1 - r^2)/4 over the unit disk, by 1D quadrature."""
    val = integrate.quad(lambda r: (1 - r * r) / 4 * 2 * math.pi * r, 0, 1)[0]
    return -0.5 * val


def plane_gradient(p, values):
    """Gradient of the affine function through three points, by a 3x3 solve."""
    A = np.column_stack([np.ones(3), p[:, 0], p[:, 1]])
    coef = np.linalg.solve(A, values)
    return coef[1], coef[2]


def triangle_area(p):
    return 0.5 * abs((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))


def fp_by_quadrature(vertices, triangles, u, f, q, m):
    """F_q of the P1 function with vertex values ``u``; the load pairing uses the
    exact integral of the product of two P1 interpolants."""
    grad2, areas, fu = [], [], 0.0
    for tri in triangles:
        p = vertices[tri]
        gx, gy = plane_gradient(p, u[tri])
        a = triangle_area(p)
        grad2.append(gx * gx + gy * gy)
        areas.append(a)
        # int phi_i phi_j = a/12 (1 + delta_ij)
        local = a / 12 * (np.ones((3, 3)) + np.eye(3))
        fu += f[tri] @ local @ u[tri]
    grad2, areas = np.array(grad2), np.array(areas)
    return 0.5 * areas @ grad2 + 0.5 * m * (areas @ grad2**q) ** (1 / q) - fu


def rectangle_instance():
    """3 x 2 grid of unit cells: two interior vertices, twelve triangles."""
    xs, ys = np.meshgrid(np.arange(4.0), np.arange(3.0))
    vertices = np.column_stack([xs.ravel(), ys.ravel()])
    tris = []
    for j, i in itertools.product(range(2), range(3)):
        v0 = j * 4 + i
        v1, v2, v3 = v0 + 1, v0 + 5, v0 + 4
        tris += [[v0, v1, v2], [v0, v2, v3]]
    return vertices, np.array(tris)


def constrained_grid_search(vertices, triangles, f_value, m, levels=14, n=41):
    """Minimize 1/2 int |grad u|^2 - int f u + m/2 t subject to |grad u|^2 <= t per
    triangle, by refined exhaustive search over (lambda_1, lambda_2, t)."""
    interior = [k for k, (x, y) in enumerate(vertices)
                if 0 < x < vertices[:, 0].max() and 0 < y < vertices[:, 1].max()]
    assert len(interior) == 2
    n_v = len(vertices)
    f = np.full(n_v, float(f_value))

    # per-triangle gradient rows and the quadratic data, built by plane fits
    rows_x, rows_y, areas = [], [], []
    load = np.zeros(n_v)
    for tri in triangles:
        p = vertices[tri]
        a = triangle_area(p)
        rx, ry = np.zeros(n_v), np.zeros(n_v)
        for k in range(3):
            e = np.zeros(3)
            e[k] = 1.0
            gx, gy = plane_gradient(p, e)
            rx[tri[k]], ry[tri[k]] = gx, gy
        rows_x.append(rx[interior])
        rows_y.append(ry[interior])
        areas.append(a)
        local = a / 12 * (np.ones((3, 3)) + np.eye(3))
        load[tri] += local @ f[tri]
    Gx, Gy, areas = np.array(rows_x), np.array(rows_y), np.array(areas)
    b = load[interior]

    center = np.array([0.5, 0.5, 0.5])
    half = np.array([0.5, 0.5, 0.5])
    best = None
    for _ in range(levels):
        axes = [np.linspace(c - h, c + h, n) for c, h in zip(center, half)]
        L1, L2, T = np.meshgrid(*axes, indexing="ij")
        lam = np.stack([L1.ravel(), L2.ravel()])
        t = T.ravel()
        gx, gy = Gx @ lam, Gy @ lam
        g = gx**2 + gy**2
        feasible = (g <= t).all(axis=0) & (t >= 0)
        val = 0.5 * areas @ g - b @ lam + 0.5 * m * t
        val[~feasible] = np.inf
        k = int(np.argmin(val))
        best = float(val[k])
        center = np.array([lam[0, k], lam[1, k], t[k]])
        half = half * 0.5
    return best
