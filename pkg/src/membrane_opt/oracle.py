"""Closed-form optimal reinforcement of the unit ball under a unit load.

In the ball of R^d with f = 1 the optimal displacement is radial: it is
parabolic on the elastic core ``r < a`` and a cone of slope ``a/d`` on the
plastic annulus ``a <= r <= 1``, where the reinforcement ``r/a - 1`` lives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def unit_ball_volume(d: int) -> float:
    """``pi^(d/2) / Gamma(d/2 + 1)`` with the half-integer Gamma in closed form."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if d % 2 == 0:
        return math.pi ** (d // 2) / math.factorial(d // 2)
    # Gamma(k + 1/2) = (2k)! sqrt(pi) / (4^k k!),  here d/2 + 1 = k + 1/2 with k = (d+1)//2
    k = (d + 1) // 2
    gamma = math.factorial(2 * k) * math.sqrt(math.pi) / (4**k * math.factorial(k))
    return math.pi ** (d / 2) / gamma


def _g(a, d, m, omega):
    return a ** (d + 1) - (d + 1) * a * (1 + m / omega) + d


def solve_am(d: int, m: float) -> float:
    """Radius of the elastic core: the root in (0, 1] of
    ``a^(d+1) - (d+1) a (1 + m/omega_d) + d``, by bisection."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if m < 0:
        raise ValueError("mass must be nonnegative")
    if m == 0:
        return 1.0
    omega = unit_ball_volume(d)
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = _g(mid, d, m, omega)
        if val > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class RadialSolution:
    d: int
    m: float
    omega_d: float
    a_m: float

    @property
    def kappa(self) -> float:
        """Maximal slope of the displacement, ``a_m / d``."""
        return self.a_m / self.d

    @property
    def residual(self) -> float:
        return _g(self.a_m, self.d, self.m, self.omega_d)


def radial_solution(d: int, m: float) -> RadialSolution:
    return RadialSolution(d=d, m=float(m), omega_d=unit_ball_volume(d), a_m=solve_am(d, m))


def _radius(r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(r > 1):
        raise ValueError("radius must lie in [0, 1]")
    return r


def u_bar(sol: RadialSolution, r):
    r = _radius(r)
    a, d = sol.a_m, sol.d
    core = (a * a - r * r) / (2 * d) + a * (1 - a) / d
    annulus = a / d * (1 - r)
    out = np.where(r <= a, core, annulus)
    return float(out) if out.ndim == 0 else out


def du_bar(sol: RadialSolution, r):
    """Radial derivative of :func:`u_bar`."""
    r = _radius(r)
    out = np.where(r <= sol.a_m, -r / sol.d, -sol.a_m / sol.d)
    return float(out) if out.ndim == 0 else out


def theta_bar(sol: RadialSolution, r):
    r = _radius(r)
    out = np.where(r < sol.a_m, 0.0, r / sol.a_m - 1.0)
    return float(out) if out.ndim == 0 else out
