"""Smooth L^p approximation of the reinforcement problem.

For a dual exponent ``q > 1`` the functional

    F_q(u) = 1/2 int |grad u|^2 + m/2 (int |grad u|^(2q))^(1/q) - int f u

is smooth and convex; its minimizer ``u_p`` gives the reinforcement
``theta_p = m |grad u_p|^(2(q-1)) (int |grad u_p|^(2q))^(-(q-1)/q)`` in closed
form, with ``||theta_p||_p = m`` where ``p = q/(q-1)``. Driving ``q`` upwards
approaches the L^1 problem.

Per-triangle powers are evaluated relative to the largest squared gradient so
that ``q = 64`` neither overflows nor underflows.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import SolverError
from .fem import FemSystem, element_gradients, solve_spd

log = logging.getLogger(__name__)

# accepted steps may raise the computed objective by at most this many ulps
ULP_SLACK = 64


@dataclass(frozen=True)
class PConfig:
    """Continuation and descent settings.

    ``method`` selects damped Newton (default) or plain gradient descent with
    Barzilai-Borwein initial steps; both backtrack until the Armijo condition.
    """

    q_schedule: tuple[float, ...] = (2, 4, 8, 16, 32, 64)
    grad_tol: float = 1e-8
    max_iters: int = 500
    shrink: float = 0.5
    armijo: float = 1e-4
    method: str = "newton"

    def __post_init__(self):
        qs = tuple(float(q) for q in self.q_schedule)
        if not qs or min(qs) <= 1 or any(b <= a for a, b in zip(qs, qs[1:])):
            raise ValueError("q_schedule must be increasing with all q > 1")
        if self.grad_tol <= 0 or self.max_iters <= 0:
            raise ValueError("tolerances and iteration budget must be positive")
        if not 0 < self.shrink < 1 or not 0 < self.armijo < 0.5:
            raise ValueError("line-search parameters out of range")
        if self.method not in ("newton", "gradient"):
            raise ValueError(f"unknown method {self.method!r}")
        object.__setattr__(self, "q_schedule", qs)


@dataclass
class PSolution:
    lam: np.ndarray
    q: float
    m: float
    theta: np.ndarray
    objective: float
    grad_norm: float
    iterations: int
    converged: bool
    theta_defined: bool = True
    history: list = field(default_factory=list, repr=False)
    wall_time: float = 0.0

    @property
    def p(self) -> float:
        return self.q / (self.q - 1)


def _scaled(system: FemSystem, g: np.ndarray, q: float):
    """Return ``(gmax, r, T)`` with ``g = gmax r`` and ``T = sum a r^q``."""
    gmax = float(g.max()) if g.size else 0.0
    if gmax == 0.0:
        return 0.0, np.zeros_like(g), 0.0
    r = g / gmax
    return gmax, r, float(system.areas @ r**q)


def gradient_norm_2q(system: FemSystem, lam, q: float) -> float:
    """Discrete ``||grad u||_{L^2q}``."""
    gx, gy = element_gradients(system, lam)
    gmax, _, T = _scaled(system, gx * gx + gy * gy, q)
    return 0.0 if gmax == 0 else math.sqrt(gmax) * T ** (0.5 / q)


def c_p(system: FemSystem, lam, q: float) -> float:
    """``||grad u||_{2q}^(-2(q-1))``; ``inf`` for the zero field."""
    norm = gradient_norm_2q(system, lam, q)
    if norm == 0:
        return math.inf
    return math.exp(-2 * (q - 1) * math.log(norm))


def eval_Fp(system: FemSystem, lam, q: float, m: float) -> float:
    """Discrete value of F_q at the interior coefficients ``lam``."""
    gx, gy = element_gradients(system, lam)
    gmax, _, T = _scaled(system, gx * gx + gy * gy, q)
    power = 0.0 if gmax == 0 else gmax * T ** (1.0 / q)
    return float(0.5 * lam @ (system.stiffness @ lam) + 0.5 * m * power - system.load @ lam)


def grad_Fp(system: FemSystem, lam, q: float, m: float) -> np.ndarray:
    """Exact gradient of :func:`eval_Fp` with respect to ``lam``."""
    return _value_grad(system, np.asarray(lam, dtype=float), q, m)[1]


def _value_grad(system, lam, q, m):
    gx, gy = element_gradients(system, lam)
    g = gx * gx + gy * gy
    gmax, r, T = _scaled(system, g, q)
    Klam = system.stiffness @ lam
    value = 0.5 * lam @ Klam - system.load @ lam
    grad = Klam - system.load
    if gmax > 0 and m != 0:
        value += 0.5 * m * gmax * T ** (1.0 / q)
        # dN = T^(1/q-1) sum a r^(q-1) dg,  dg = 2 G^T w
        w = system.areas * r ** (q - 1) * T ** (1.0 / q - 1.0)
        grad = grad + m * (system.grad_x_int.T @ (w * gx) + system.grad_y_int.T @ (w * gy))
    return float(value), grad, (gx, gy, gmax, r, T)


def _newton_direction(system, grad, q, m, cache):
    """Solve ``H d = -grad`` with ``H = A - c v v^T`` by Sherman-Morrison."""
    gx, gy, gmax, r, T = cache
    K = system.stiffness
    if gmax == 0 or m == 0:
        return solve_spd(K, -grad)
    Gx, Gy, a = system.grad_x_int, system.grad_y_int, system.areas
    s = T ** (1.0 / q - 1.0)
    # (m/2) * second derivative of N, split into a sparse PSD part and a rank-one part
    e = 0.5 * m * s * a * r ** (q - 1) * 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        rq2 = np.where(r > 0, r ** (q - 2), 0.0)
    c_l = 0.5 * m * s * (q - 1) / gmax * a * rq2 * 4.0
    B = sp.diags(gx) @ Gx + sp.diags(gy) @ Gy
    A = (
        K
        + Gx.T @ sp.diags(e) @ Gx
        + Gy.T @ sp.diags(e) @ Gy
        + B.T @ sp.diags(c_l) @ B
    ).tocsc()
    v = 2.0 * (B.T @ (a * r ** (q - 1)))
    c = 0.5 * m * (q - 1) * T ** (1.0 / q - 2.0) / gmax
    from scipy.sparse.linalg import splu

    lu = splu(A)
    Ainv_g = solve_spd(A, -grad, factor=lu)
    Ainv_v = solve_spd(A, v, factor=lu)
    denom = 1.0 - c * (v @ Ainv_v)
    if denom <= 0:
        return Ainv_g
    return Ainv_g + Ainv_v * (c * (v @ Ainv_g) / denom)


def theta_from_squared_gradients(areas, g, q: float, m: float) -> np.ndarray:
    """``m g^(q-1) (sum a g^q)^(-(q-1)/q)`` evaluated relative to ``max g``."""
    g = np.asarray(g, dtype=float)
    gmax = float(g.max()) if g.size else 0.0
    if gmax == 0.0:
        return np.zeros_like(g)
    r = g / gmax
    T = float(np.asarray(areas) @ r**q)
    return m * r ** (q - 1) * T ** (-(q - 1) / q)


def recover_theta_p(system: FemSystem, lam, q: float, m: float) -> tuple[np.ndarray, bool]:
    """Per-triangle ``theta_p``; second value is False for an identically zero gradient."""
    gx, gy = element_gradients(system, lam)
    g = gx * gx + gy * gy
    if not g.size or g.max() == 0:
        return np.zeros(system.mesh.n_triangles), False
    return theta_from_squared_gradients(system.areas, g, q, m), True


def minimize_Fp(
    system: FemSystem,
    q: float,
    m: float,
    warm_start=None,
    config: PConfig | None = None,
) -> PSolution:
    """Minimize F_q by a monotone descent method and recover ``theta_p``."""
    config = config or PConfig()
    if q <= 1:
        raise ValueError("q must exceed 1")
    if m < 0:
        raise ValueError("m must be nonnegative")
    t0 = time.perf_counter()
    n = system.n_interior
    lam = np.zeros(n) if warm_start is None else np.array(warm_start, dtype=float)
    if lam.shape != (n,):
        raise ValueError("warm start has the wrong length")
    scale = max(np.linalg.norm(system.load), np.finfo(float).tiny)

    value, grad, cache = _value_grad(system, lam, q, m)
    history = [value]
    converged = False
    it = 0
    prev = None
    gnorm = np.linalg.norm(grad)
    while True:
        if gnorm <= config.grad_tol * scale:
            converged = True
            break
        if it >= config.max_iters:
            break
        it += 1
        if config.method == "newton":
            d = _newton_direction(system, grad, q, m, cache)
            step = 1.0
            if grad @ d >= 0:
                d, step = -grad, 1.0 / max(gnorm, 1.0)
        else:
            d = -grad
            if prev is None:
                step = 1.0 / max(gnorm / max(np.linalg.norm(lam), 1.0), 1.0)
            else:
                s_vec, y_vec = lam - prev[0], grad - prev[1]
                sy = s_vec @ y_vec
                step = (s_vec @ s_vec) / sy if sy > 0 else 1.0
        slope = grad @ d
        # below this predicted decrease, value differences are rounding noise;
        # such steps are judged by the gradient norm instead
        noise = 1e-13 * (1.0 + abs(value))
        slack = ULP_SLACK * np.spacing(abs(value))
        while True:
            trial = lam + step * d
            tval, tgrad, tcache = _value_grad(system, trial, q, m)
            if tval <= value + config.armijo * step * slope:
                break
            if -slope <= noise and tval <= value + slack and np.linalg.norm(tgrad) < gnorm:
                break
            step *= config.shrink
            if step < 1e-20:
                break
        if tval > value + slack or (tval > value and np.linalg.norm(tgrad) >= gnorm):
            # no decrease possible at working precision
            if gnorm <= 1e3 * config.grad_tol * scale:
                converged = True
            break
        prev = (lam, grad)
        lam, value, grad, cache = trial, tval, tgrad, tcache
        gnorm = np.linalg.norm(grad)
        history.append(value)

    theta, defined = recover_theta_p(system, lam, q, m)
    sol = PSolution(
        lam=lam,
        q=float(q),
        m=float(m),
        theta=theta,
        objective=value,
        grad_norm=float(gnorm / scale),
        iterations=it,
        converged=converged,
        theta_defined=defined,
        history=history,
        wall_time=time.perf_counter() - t0,
    )
    log.info("q=%g: F=%.10g after %d iterations (rel grad %.2e)", q, value, it, sol.grad_norm)
    return sol


@dataclass
class ContinuationResult:
    stages: list
    norms_2q: list
    kappa_hat: float
    converged: bool

    @property
    def final(self) -> PSolution:
        return self.stages[-1]


def continuation(system: FemSystem, m: float, config: PConfig | None = None) -> ContinuationResult:
    """Solve along ``config.q_schedule``, each stage warm-started from the last.

    Stops early, returning the stages computed so far, if a stage fails to
    converge.
    """
    config = config or PConfig()
    stages, norms = [], []
    lam = None
    ok = True
    for q in config.q_schedule:
        sol = minimize_Fp(system, q, m, warm_start=lam, config=config)
        stages.append(sol)
        norms.append(gradient_norm_2q(system, sol.lam, q))
        lam = sol.lam
        if not sol.converged:
            ok = False
            log.warning("stage q=%g did not converge; stopping continuation", q)
            break
    gx, gy = element_gradients(system, stages[-1].lam)
    kappa = float(np.sqrt((gx * gx + gy * gy).max())) if len(gx) else 0.0
    return ContinuationResult(stages=stages, norms_2q=norms, kappa_hat=kappa, converged=ok)


def require_converged(sol: PSolution) -> PSolution:
    if not sol.converged:
        raise SolverError(f"F_q minimization did not converge (rel grad {sol.grad_norm:.2e})", sol.grad_norm)
    return sol
