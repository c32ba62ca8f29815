"""Numerics for the truncated power law ``p(x) ∝ x**-beta * exp(-x / kappa)``.

The family is an exponential family in ``(beta, lam = 1/kappa)`` with
sufficient statistics ``(log x, x)``, so the negative log-likelihood is convex
in those natural parameters and its Hessian is the model covariance of
``(log x, x)``.  All moments are computed by composite Gauss-Legendre
quadrature in ``u = log x``, which stays smooth in the parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)

# Beyond x_min + TAIL/lam the integrand is below exp(-TAIL) of its peak.
TAIL = 60.0
_MAX_PANELS = 20_000


@dataclass(frozen=True)
class Moments:
    log_z: float
    mean_log: float
    mean_x: float
    cov: np.ndarray  # covariance of (log x, x)


def upper_limit(x_min: float, x_max: float, lam: float) -> float:
    if lam > 0:
        return min(x_max, x_min + TAIL / lam)
    if math.isinf(x_max):
        raise ValueError("infinite support needs a positive decay rate")
    return x_max


def _nodes(beta: float, lam: float, x_min: float, x_max: float) -> tuple[np.ndarray, np.ndarray]:
    hi = upper_limit(x_min, x_max, lam)
    u0, u1 = math.log(x_min), math.log(hi)
    span = u1 - u0
    if span <= 0:
        return np.array([u0]), np.array([0.0])
    # keep the log-integrand change per panel around 2 or less
    slope = abs(1.0 - beta) + abs(lam) * hi
    panels = int(min(_MAX_PANELS, max(8, math.ceil(span * max(slope, 1.0) / 2.0))))
    edges = np.linspace(u0, u1, panels + 1)
    half = np.diff(edges)[:, None] / 2.0
    mid = (edges[:-1] + edges[1:])[:, None] / 2.0
    u = (mid + half * _GL_NODES[None, :]).ravel()
    w = (half * _GL_WEIGHTS[None, :]).ravel()
    return u, w


def moments(beta: float, lam: float, x_min: float, x_max: float = math.inf) -> Moments:
    """Normaliser and first two moments of ``(log x, x)`` on ``[x_min, x_max]``."""
    u, w = _nodes(beta, lam, x_min, x_max)
    if len(u) == 1:
        # collapsed support: a point mass at x_min
        return Moments(-math.inf, float(u[0]), float(x_min), np.zeros((2, 2)))
    x = np.exp(u)
    # dx = x du, so the integrand in u is x**(1 - beta) * exp(-lam x)
    logf = (1.0 - beta) * u - lam * x + np.log(w)
    peak = logf.max()
    p = np.exp(logf - peak)
    z = p.sum()
    if not (z > 0 and math.isfinite(z)):
        raise FloatingPointError("normaliser underflow")
    p /= z
    m_log = float(p @ u)
    m_x = float(p @ x)
    du = u - m_log
    dx = x - m_x
    cov = np.array([[p @ (du * du), p @ (du * dx)], [p @ (du * dx), p @ (dx * dx)]])
    return Moments(float(peak + math.log(z)), m_log, m_x, cov)


def log_normaliser(beta: float, lam: float, x_min: float, x_max: float = math.inf) -> float:
    return moments(beta, lam, x_min, x_max).log_z


def log_likelihood(x: np.ndarray, beta: float, kappa: float, x_min: float, x_max: float = math.inf) -> float:
    x = np.asarray(x, dtype=float)
    lam = 1.0 / kappa
    return float(-beta * np.log(x).sum() - lam * x.sum() - x.size * log_normaliser(beta, lam, x_min, x_max))


@dataclass
class NewtonResult:
    beta: float
    lam: float
    mean_nll: float
    iterations: int
    converged: bool
    at_beta_bound: bool
    grad: tuple[float, float]
    message: str = ""


def _objective(beta, lam, s_log, s_x, x_min, x_max):
    m = moments(beta, lam, x_min, x_max)
    f = beta * s_log + lam * s_x + m.log_z
    g = np.array([s_log - m.mean_log, s_x - m.mean_x])
    return f, g, m.cov


def newton_fit(
    s_log: float,
    s_x: float,
    x_min: float,
    x_max: float,
    n: int,
    *,
    beta0: float = 0.5,
    fix_beta: float | None = None,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> NewtonResult:
    """Minimise the mean negative log-likelihood over ``beta >= 0, lam > 0``.

    ``s_log`` and ``s_x`` are the sample means of ``log x`` and ``x``; data
    should be pre-scaled so that ``s_x`` is of order one.  Iteration stops
    when the Newton decrement predicts a total log-likelihood gain below
    ``tol``.
    """
    beta = 0.0 if fix_beta is not None else beta0
    if fix_beta is not None:
        beta = fix_beta
    spread = max(s_x - x_min, 1e-12 * max(s_x, 1.0))
    lam = 1.0 / spread
    f, g, h = _objective(beta, lam, s_log, s_x, x_min, x_max)
    beta_fixed = fix_beta is not None
    at_bound = False
    for it in range(1, max_iter + 1):
        if beta_fixed:
            if h[1, 1] <= 0:
                break
            step = np.array([0.0, -g[1] / h[1, 1]])
            dec = g[1] ** 2 / h[1, 1]
        else:
            try:
                step = -np.linalg.solve(h, g)
            except np.linalg.LinAlgError:
                step = -g / np.maximum(np.diag(h), 1e-300)
            dec = float(-g @ step)
            if beta <= 0.0 and step[0] < 0:
                # beta sits on its bound and wants to go lower: freeze it
                beta_fixed = at_bound = True
                beta = 0.0
                continue
        if n * dec / 2.0 < tol:
            if at_bound and fix_beta is None and g[0] < 0:
                # the bound is no longer active
                beta_fixed = at_bound = False
                continue
            return NewtonResult(beta, lam, f, it, True, at_bound, (float(g[0]), float(g[1])))
        t = 1.0
        # stay feasible
        if step[1] < 0 and lam + step[1] <= 0:
            t = min(t, 0.9 * lam / -step[1])
        if not beta_fixed and step[0] < 0 and beta + step[0] < 0:
            t = min(t, beta / -step[0]) if beta > 0 else 0.0
        accepted = False
        while t > 1e-14:
            nb, nl = beta + t * step[0], lam + t * step[1]
            if not beta_fixed and nb < 1e-15:
                nb = 0.0
            try:
                nf, ng, nh = _objective(nb, nl, s_log, s_x, x_min, x_max)
            except (FloatingPointError, ValueError, OverflowError):
                t *= 0.5
                continue
            if nf <= f - 1e-4 * t * dec or (abs(nf - f) <= 1e-15 * max(1.0, abs(f)) and nf <= f):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # no further decrease representable in double precision
            converged = n * dec / 2.0 < max(tol, 1e-6)
            return NewtonResult(beta, lam, f, it, converged, at_bound, (float(g[0]), float(g[1])),
                                "line search stalled")
        beta, lam, f, g, h = nb, nl, nf, ng, nh
        if not beta_fixed and beta == 0.0 and g[0] > 0:
            beta_fixed = at_bound = True
    return NewtonResult(beta, lam, f, max_iter, False, at_bound, (float(g[0]), float(g[1])),
                        "iteration limit reached")
