"""Epigraph formulation solved by a primal log-barrier method.

Minimize ``F(lam, t) = 1/2 lam.K.lam - load.lam + m/2 t`` subject to
``g_l(lam) = (Gx lam)_l^2 + (Gy lam)_l^2 <= t`` on every triangle ``l``.

The barrier subproblems ``F - (1/beta) sum log(t - g_l)`` are solved by damped
Newton. The dense column coupling ``t`` to every triangle is eliminated with a
Schur complement, so each step costs two sparse solves with one factorization.
At a centered point ``mu_l = 1/(beta s_l)`` are the constraint multipliers;
stationarity gives ``sum mu_l = m/2`` and the weighted state equation with
coefficient ``1 + 2 mu_l / a_l``, which is how the reinforcement is read off.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import SolverError
from .fem import FemSystem, element_gradients, poisson_solve, solve_spd

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BarrierConfig:
    """Path-following settings. ``beta0=None`` picks the barrier weight for which
    the feasible start already satisfies ``sum mu_l = m/2``."""

    beta0: float | None = None
    growth: float = 10.0
    gap_tol: float = 1e-7
    start_margin: float = 0.1
    center_tol: float = 1e-10
    max_newton: int = 200
    max_stages: int = 40
    armijo: float = 1e-4
    shrink: float = 0.5
    boundary_fraction: float = 0.1
    max_retreats: int = 4

    def __post_init__(self):
        if (self.beta0 is not None and self.beta0 <= 0) or self.growth <= 1:
            raise ValueError("need beta0 > 0 and growth > 1")
        if self.gap_tol <= 0 or self.center_tol <= 0 or self.start_margin <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class ConstrainedSolution:
    lam: np.ndarray
    t: float
    mu: np.ndarray
    theta: np.ndarray
    m: float
    objective: float
    gap: float
    iterations: int
    converged: bool
    stage_objectives: list = field(default_factory=list)
    stage_betas: list = field(default_factory=list)
    wall_time: float = 0.0


def objective(system: FemSystem, lam, t: float, m: float) -> float:
    """``F_m(lam, t)``."""
    return float(0.5 * lam @ (system.stiffness @ lam) - system.load @ lam + 0.5 * m * t)


class _Barrier:
    def __init__(self, system: FemSystem, m: float):
        self.sys = system
        self.m = m
        self.K = system.stiffness
        self.Gx = system.grad_x_int
        self.Gy = system.grad_y_int

    def slacks(self, lam, t):
        gx, gy = element_gradients(self.sys, lam)
        return t - (gx * gx + gy * gy), gx, gy

    def value(self, lam, t, beta):
        s, _, _ = self.slacks(lam, t)
        if np.any(s <= 0):
            return np.inf
        return objective(self.sys, lam, t, self.m) - np.log(s).sum() / beta

    def gradient(self, lam, t, beta, s, gx, gy):
        inv = 1.0 / (beta * s)
        g_lam = self.K @ lam - self.sys.load + 2.0 * (self.Gx.T @ (inv * gx) + self.Gy.T @ (inv * gy))
        g_t = 0.5 * self.m - inv.sum()
        return g_lam, g_t

    def newton(self, beta, s, gx, gy, g_lam, g_t):
        inv = 1.0 / (beta * s)
        inv2 = 1.0 / (beta * s * s)
        B = sp.diags(gx) @ self.Gx + sp.diags(gy) @ self.Gy
        D1 = sp.diags(2.0 * inv)
        A = (self.K + self.Gx.T @ D1 @ self.Gx + self.Gy.T @ D1 @ self.Gy
             + B.T @ sp.diags(4.0 * inv2) @ B).tocsc()
        c = -2.0 * (B.T @ inv2)
        d = inv2.sum()
        lu = splu(A)
        y1 = solve_spd(A, g_lam, factor=lu)
        y2 = solve_spd(A, c, factor=lu)
        schur = d - c @ y2
        if not schur > 0:
            raise np.linalg.LinAlgError("barrier Hessian lost definiteness")
        dt = (c @ y1 - g_t) / schur
        dlam = -y1 - y2 * dt
        return dlam, dt


def solve_constrained(system: FemSystem, m: float, config: BarrierConfig | None = None) -> ConstrainedSolution:
    """Minimize ``F_m`` under the per-triangle gradient constraints."""
    config = config or BarrierConfig()
    if m < 0:
        raise ValueError("m must be nonnegative")
    t0 = time.perf_counter()
    n_t = system.mesh.n_triangles
    lam = poisson_solve(system)
    gx, gy = element_gradients(system, lam)
    g = gx * gx + gy * gy
    if m == 0 or not g.size or g.max() == 0:
        # the t-term has no weight: constraints are inactive at the optimum
        t = float(g.max()) if g.size else 0.0
        return ConstrainedSolution(
            lam=lam, t=t, mu=np.zeros(n_t), theta=np.zeros(n_t), m=float(m),
            objective=objective(system, lam, t, m), gap=0.0, iterations=0,
            converged=True, wall_time=time.perf_counter() - t0,
        )

    bar = _Barrier(system, m)
    t = (1.0 + config.start_margin) * float(g.max())
    if config.beta0 is None:
        beta = 2.0 * float(np.sum(1.0 / (t - g))) / m
    else:
        beta = config.beta0
    total = 0
    stage_obj, stage_beta = [], []
    converged = False
    failed = False
    scale = max(np.linalg.norm(system.load), np.finfo(float).tiny)
    prev_beta = None
    retreats = 0
    for _ in range(config.max_stages):
        ok, its, new_lam, new_t = _center(bar, lam, t, beta, config, scale)
        total += its
        if not ok:
            if prev_beta is not None and retreats < config.max_retreats:
                # back off to a smaller increase from the last centered point
                retreats += 1
                beta = float(np.sqrt(beta * prev_beta))
                log.info("centering stalled; retrying with beta=%.3g", beta)
                continue
            failed = True
            log.warning("centering failed at beta=%.3g", beta)
        lam, t = new_lam, new_t
        val = objective(system, lam, t, m)
        stage_obj.append(val)
        stage_beta.append(beta)
        log.info("beta=%.3g: F=%.12g after %d Newton steps", beta, val, its)
        if failed:
            break
        if n_t / beta <= config.gap_tol * (1.0 + abs(val)):
            converged = True
            break
        prev_beta = beta
        beta *= config.growth

    lam, t, mu = _finish(bar, lam, t, beta)
    return ConstrainedSolution(
        lam=lam, t=t, mu=mu, theta=2.0 * mu / system.areas, m=float(m),
        objective=objective(system, lam, t, m), gap=n_t / beta, iterations=total,
        converged=converged, stage_objectives=stage_obj, stage_betas=stage_beta,
        wall_time=time.perf_counter() - t0,
    )


def _finish(bar: _Barrier, lam, t, beta):
    """Last Newton step with primal-dual multiplier estimates.

    ``mu = 1/(beta s)`` inherits the centering error, which at large ``beta``
    shows mostly along ``t``. Linearizing ``mu(s)`` along one more Newton step
    gives multipliers that satisfy both stationarity equations to rounding.
    The plain estimate is kept if the step leaves the feasible set.
    """
    s, gx, gy = bar.slacks(lam, t)
    mu = 1.0 / (beta * s)
    g_lam, g_t = bar.gradient(lam, t, beta, s, gx, gy)
    try:
        dlam, dt = bar.newton(beta, s, gx, gy, g_lam, g_t)
    except (np.linalg.LinAlgError, RuntimeError):
        return lam, t, mu
    dg = 2.0 * (gx * (bar.Gx @ dlam) + gy * (bar.Gy @ dlam))
    mu_pd = mu * (1.0 - (dt - dg) / s)
    new_s, _, _ = bar.slacks(lam + dlam, t + dt)
    if np.all(mu_pd >= 0) and np.all(new_s > 0):
        return lam + dlam, t + dt, mu_pd
    return lam, t, mu


def _center(bar: _Barrier, lam, t, beta, config: BarrierConfig, scale):
    """Damped Newton on the barrier subproblem; gradient-step fallback."""
    value = bar.value(lam, t, beta)
    for it in range(1, config.max_newton + 1):
        s, gx, gy = bar.slacks(lam, t)
        g_lam, g_t = bar.gradient(lam, t, beta, s, gx, gy)
        # centrality in multiplier units: weighted-equation and sum(mu) residuals
        if np.linalg.norm(g_lam) <= config.center_tol * scale and abs(g_t) <= config.center_tol * max(bar.m, 1.0):
            return True, it - 1, lam, t
        try:
            dlam, dt = bar.newton(beta, s, gx, gy, g_lam, g_t)
        except (np.linalg.LinAlgError, RuntimeError):
            dlam, dt = -g_lam, -g_t
        slope = g_lam @ dlam + g_t * dt
        if not slope < 0:
            dlam, dt = -g_lam, -g_t
            slope = -(g_lam @ g_lam + g_t * g_t)
        decrement = -slope
        # Newton decrement below rounding: centered as far as doubles allow
        if decrement <= 1e-15 * (1.0 + abs(value)):
            return True, it - 1, lam, t
        step = 1.0
        # infeasible trials have infinite value and are shrunk away
        gnorm = np.hypot(np.linalg.norm(g_lam), g_t)
        while True:
            trial_lam, trial_t = lam + step * dlam, t + step * dt
            ts, _, _ = bar.slacks(trial_lam, trial_t)
            # fraction-to-boundary: no slack may collapse in a single step
            tval = bar.value(trial_lam, trial_t, beta) if np.all(ts >= config.boundary_fraction * s) else np.inf
            if np.isfinite(tval):
                if tval <= value + config.armijo * step * slope:
                    break
                if decrement <= 1e-12 * (1.0 + abs(value)) and tval <= value + 1e-13 * (1 + abs(value)):
                    ts, tgx, tgy = bar.slacks(trial_lam, trial_t)
                    tg = bar.gradient(trial_lam, trial_t, beta, ts, tgx, tgy)
                    if np.hypot(np.linalg.norm(tg[0]), tg[1]) < gnorm:
                        break
            step *= config.shrink
            if step < 1e-16:
                return False, it, lam, t
        lam, t, value = trial_lam, trial_t, tval
    return False, config.max_newton, lam, t


def recover_theta_constrained(solution: ConstrainedSolution, system: FemSystem) -> np.ndarray:
    """``theta_l = 2 mu_l / a_l``; raises for a non-converged solution."""
    if not solution.converged:
        raise SolverError("constrained solve did not converge; multipliers are not meaningful")
    return 2.0 * solution.mu / system.areas


def weighted_residual(system: FemSystem, lam, theta) -> float:
    """``|| sum_l a_l (1+theta_l) G_l^T G_l lam - load || / ||load||``."""
    gx, gy = element_gradients(system, lam)
    w = system.areas * (1.0 + theta)
    r = system.grad_x_int.T @ (w * gx) + system.grad_y_int.T @ (w * gy) - system.load
    return float(np.linalg.norm(r) / max(np.linalg.norm(system.load), np.finfo(float).tiny))
