"""L1-penalized gradient ascent for the divergence loss.

Each iteration takes one projected subgradient step in ``beta`` (golden-section
line search, never crossing a coordinate axis) followed by one damped Newton
step in ``alpha``. ``tau = inf`` runs the same loop with unit weights, which
makes it the maximum-likelihood solver.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import QuadratureScheme
from .kernels import ETA_CAP, Params, SaturationCounter, weight
from .losses import node_state, penalty

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class ConvergenceError(RuntimeError):
    """Objective became non-finite; ``trace`` holds the objective history."""

    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = list(trace)


@dataclass(frozen=True)
class FitResult:
    params: Params
    converged: bool
    iterations: int
    objective_trace: tuple
    node_weights: np.ndarray
    active_set: tuple
    saturation_count: int
    tau: float
    phi: float
    grad_norm: float = math.nan
    flags: tuple = ()

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


@dataclass(frozen=True)
class PathResult:
    phis: tuple
    fits: tuple
    phi_max: float = math.nan


# --------------------------------------------------------------------------
# Elementary steps


def subgradient(beta, u_beta, phi: float) -> np.ndarray:
    """Ascent direction of ``-loss - phi |beta_slopes|``.

    The intercept (index 0) is never penalized.
    """
    beta = np.asarray(beta, dtype=float)
    u = np.asarray(u_beta, dtype=float)
    phis = np.full(len(beta), float(phi))
    phis[0] = 0.0
    g = np.zeros_like(u)
    nz = beta != 0
    g[nz] = u[nz] - phis[nz] * np.sign(beta[nz])
    enter = ~nz & (np.abs(u) > phis)
    g[enter] = u[enter] - phis[enter] * np.sign(u[enter])
    return g


def rho_edge(beta, g) -> float:
    """Largest step before some slope reaches zero; ``inf`` when none can."""
    beta = np.asarray(beta, dtype=float)[1:]
    g = np.asarray(g, dtype=float)[1:]
    cand = (np.sign(beta) == -np.sign(g)) & (beta != 0)
    if not cand.any():
        return math.inf
    return float(np.min(-beta[cand] / g[cand]))


def line_search(fun, rho_max: float, tol: float = 1e-8):
    """Maximize ``fun`` on ``[0, rho_max]`` by golden-section search.

    Returns ``(rho, value, shrunk)``. ``rho`` is the best point evaluated,
    ``0`` included, so ``fun(rho) >= fun(0)``. ``shrunk`` is True when a
    non-finite value forced the interval to contract.
    """
    f0 = fun(0.0)
    hi = float(rho_max)
    shrunk = False
    fhi = fun(hi)
    for _ in range(200):
        if np.isfinite(fhi):
            break
        shrunk = True
        hi *= 0.5
        fhi = fun(hi)
    else:
        return 0.0, f0, True
    best_rho, best_val = (hi, fhi) if fhi > f0 else (0.0, f0)
    a, b = 0.0, hi
    c = b - GOLDEN * (b - a)
    e = a + GOLDEN * (b - a)
    fc, fe = fun(c), fun(e)
    while b - a > tol:
        if not np.isfinite(fc) or not np.isfinite(fe):
            shrunk = True
        if fc >= fe or not np.isfinite(fe):
            b, e, fe = e, c, fc
            c = b - GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, e, fe
            e = a + GOLDEN * (b - a)
            fe = fun(e)
        for r, v in ((c, fc), (e, fe)):
            if np.isfinite(v) and v > best_val:
                best_rho, best_val = r, v
    return best_rho, best_val, shrunk


def newton_step(score, objective, x, fd_step: float = 1e-6, damping: float = 1e-8,
                max_escalations: int = 8):
    """One damped Newton ascent step.

    ``score`` returns the gradient of ``objective``. The Hessian is the
    symmetrized central-difference Jacobian of ``score``. Damping starts at
    ``damping`` (relative to the largest Hessian diagonal) and grows tenfold
    until the objective does not decrease; after ``max_escalations`` a
    line-searched gradient step is taken instead.

    Returns ``(x_new, gain, fell_back)`` where ``gain`` is the objective
    increase.
    """
    x = np.asarray(x, dtype=float)
    u = score(x)
    if not np.any(u):
        return x, 0.0, False
    k = len(x)
    hess = np.empty((k, k))
    for j in range(k):
        e = np.zeros(k)
        e[j] = fd_step
        hess[:, j] = (score(x + e) - score(x - e)) / (2 * fd_step)
    hess = 0.5 * (hess + hess.T)
    scale = 1.0 + np.max(np.abs(np.diag(hess)))
    f0 = objective(x)
    lam = damping
    for _ in range(max_escalations + 1):
        try:
            step = np.linalg.solve(hess - lam * scale * np.eye(k), u)
        except np.linalg.LinAlgError:
            lam *= 10
            continue
        x_new = x - step
        f1 = objective(x_new)
        if np.isfinite(f1) and f1 >= f0:
            return x_new, f1 - f0, False
        lam *= 10
    unorm = np.linalg.norm(u)
    rho, val, _ = line_search(lambda r: objective(x + r * u) - f0, 1.0 / (1.0 + unorm))
    return x + rho * u, val, True


# --------------------------------------------------------------------------
# Objective evaluation on a compact scheme


class _Problem:
    """Objective pieces over the per-cell aggregated quadrature nodes."""

    def __init__(self, quad: QuadratureScheme, tau: float, phi: float):
        c = quad.compact()
        self.x, self.z, self.d, self.w = c.x, c.z, c.d, c.w
        self.tau = float(tau)
        self.phi = float(phi)
        self.mle = math.isinf(self.tau)
        self.counter = SaturationCounter()
        self.nb = self.x.shape[1]

    def _value(self, log_lam, lam):
        """Unpenalized objective (the negative loss) from node intensities."""
        if self.mle:
            return float(np.dot(self.d, log_lam) - np.dot(self.w, lam))
        big_l = np.log1p(self.tau * lam)
        return float(np.dot(self.d + self.w / self.tau, big_l) - np.dot(self.w, lam))

    def line_delta(self, st):
        """Objective change as a function of a log-intensity shift from ``st``.

        Written in differences (``expm1``/``log1p``) so small changes near an
        optimum are not lost to cancellation against the objective's size.
        """
        wl = self.w * st.lam
        if self.mle:
            d = self.d
            return lambda shift: float(np.dot(d, shift) - np.dot(wl, np.expm1(shift)))
        t0 = self.tau * st.lam
        frac = t0 / (1.0 + t0)
        dw = self.d + self.w / self.tau
        def delta(shift):
            grow = np.expm1(shift)
            return float(np.dot(dw, np.log1p(frac * grow)) - np.dot(wl, grow))
        return delta

    def state(self, beta, alpha):
        return node_state(beta, alpha, self.x, self.z, self.counter)

    def objective(self, beta, alpha) -> float:
        st = self.state(beta, alpha)
        return self._value(st.log_lam, st.lam) - penalty(beta, self.phi)

    def score(self, beta, alpha):
        st = self.state(beta, alpha)
        resid = weight(st.lam, self.tau) * (self.d - self.w * st.lam)
        return self.x.T @ resid, self.z.T @ (resid * st.miss)

    def alpha_problem(self, beta):
        """``(score, objective)`` in ``alpha`` with ``beta`` held fixed."""
        eta_b = self.counter.clip(self.x @ beta)
        pen = penalty(beta, self.phi)
        z, d, w, tau = self.z, self.d, self.w, self.tau

        def pieces(alpha):
            eta_a = z @ alpha
            log_lam = eta_b - np.logaddexp(0.0, -eta_a)
            return eta_a, log_lam, np.exp(log_lam)

        def score(alpha):
            eta_a, _, lam = pieces(alpha)
            resid = weight(lam, tau) * (d - w * lam)
            return z.T @ (resid / (1.0 + np.exp(eta_a)))

        def objective(alpha):
            _, log_lam, lam = pieces(alpha)
            return self._value(log_lam, lam) - pen

        return score, objective


def default_init(quad: QuadratureScheme) -> Params:
    """``beta_0 = log(m / |A|)``, every other coefficient zero."""
    if quad.m <= 0:
        raise ValueError("no presence records: cannot initialize the intercept")
    beta = np.zeros(quad.x.shape[1])
    beta[0] = math.log(quad.m / quad.area_total)
    return Params(beta, np.zeros(quad.z.shape[1]))


def _beta_step(prob: _Problem, beta, alpha, u_beta):
    """Projected subgradient step; returns ``(beta_new, gain, flags)``."""
    g = subgradient(beta, u_beta, prob.phi)
    if not np.any(g):
        return beta, 0.0, ()
    edge = rho_edge(beta, g)
    cap = 10.0 / (1.0 + np.linalg.norm(g))
    rho_max = min(edge, cap)
    eta_b = prob.x @ beta
    eta_dir = prob.x @ g
    # keep every linear predictor inside the exponent cap along the segment
    with np.errstate(divide="ignore"):
        room = np.where(eta_dir > 0, (ETA_CAP - eta_b) / eta_dir,
                        np.where(eta_dir < 0, (-ETA_CAP - eta_b) / eta_dir, math.inf))
    rho_max = min(rho_max, float(room.min()))
    delta = prob.line_delta(prob.state(beta, alpha))
    slopes, gs = beta[1:], g[1:]
    pen0 = np.abs(slopes).sum()
    phi = prob.phi

    def along(rho):
        pen = np.abs(slopes + rho * gs).sum() - pen0
        return delta(rho * eta_dir) - (phi * pen if pen else 0.0)

    rho, gain, shrunk = line_search(along, rho_max)
    new = beta + rho * g
    # A slope that reaches (or numerically crosses) zero is set exactly to zero.
    if rho > 0:
        hit = (beta != 0) & ((np.sign(new) != np.sign(beta)) | (np.abs(new) <= 1e-12 * np.abs(beta)))
        hit[0] = False
        if rho >= edge * (1 - 1e-12):
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(g != 0, -beta / g, math.inf)
            hit |= (beta != 0) & np.isclose(ratio, edge, rtol=1e-9, atol=0) & (np.arange(len(beta)) > 0)
        new[hit] = 0.0
        if hit.any():
            gain = prob.objective(new, alpha) - prob.objective(beta, alpha)
    return new, gain, ("line_search_shrunk",) if shrunk else ()


def _snap_slopes(prob: _Problem, beta, alpha, trace):
    """Zero any tiny slope whose removal leaves the objective unchanged.

    A slope sitting at the kink can stall a hair away from zero when
    ``phi`` equals the size of its score; this settles it exactly.
    """
    beta = beta.copy()
    best = start = trace[-1]
    scale = 1e-6 * (1.0 + np.abs(beta).max())
    for k in np.argsort(np.abs(beta[1:])) + 1:
        if beta[k] == 0 or abs(beta[k]) > scale:
            continue
        trial = beta.copy()
        trial[k] = 0.0
        val = prob.objective(trial, alpha)
        if val >= best - 1e-12 * (1.0 + abs(best)):
            beta, best = trial, val
    if best != start:
        trace.append(best)
    return beta


def newton_alpha(params: Params, quad: QuadratureScheme, tau: float, damping: float = 1e-8) -> np.ndarray:
    """One damped Newton step for the (unpenalized) detection coefficients."""
    prob = _Problem(quad, tau, 0.0)
    beta = np.asarray(params.beta)
    new, _, _ = newton_step(*prob.alpha_problem(beta), params.alpha, damping=damping)
    return new


def fit(quad: QuadratureScheme, tau: float = math.inf, phi: float = 0.0, init: Params | None = None,
        max_iter: int = 500, tol: float = 1e-8, grad_tol: float = 1e-7) -> FitResult:
    """Maximize ``-loss_mide(tau) - phi * |beta_slopes|_1``.

    Stops when the per-iteration objective gain falls below
    ``tol * (1 + |M|)`` and the largest subgradient / alpha-score entry is
    below ``grad_tol * max(1, m)``, or after ``max_iter`` iterations.
    """
    if phi < 0:
        raise ValueError("phi must be nonnegative")
    prob = _Problem(quad, tau, phi)
    init = init or default_init(quad)
    beta = np.array(init.beta, dtype=float)
    alpha = np.array(init.alpha, dtype=float)
    obj = prob.objective(beta, alpha)
    if not np.isfinite(obj):
        raise ConvergenceError("objective is not finite at the starting point", [obj])
    trace = [obj]
    flags = set()
    grad_scale = grad_tol * max(1.0, float(quad.m))
    converged = False
    gnorm = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        u_beta, _ = prob.score(beta, alpha)
        beta, gain_b, fl = _beta_step(prob, beta, alpha, u_beta)
        flags.update(fl)
        if prob.z.shape[1]:
            alpha, gain_a, fell = newton_step(*prob.alpha_problem(beta), alpha)
            if fell:
                flags.add("newton_fallback")
        else:
            gain_a = 0.0
        obj = prob.objective(beta, alpha)
        if not np.isfinite(obj):
            raise ConvergenceError(f"objective became non-finite at iteration {it}", trace)
        trace.append(obj)
        u_beta, u_alpha = prob.score(beta, alpha)
        gnorm = float(max(np.abs(subgradient(beta, u_beta, phi)).max(),
                          np.abs(u_alpha).max() if len(u_alpha) else 0.0))
        if gain_b + gain_a < tol * (1.0 + abs(obj)) and gnorm < grad_scale:
            converged = True
            break
    if phi > 0:
        beta = _snap_slopes(prob, beta, alpha, trace)
    params = Params(beta, alpha)
    st = node_state(beta, alpha, quad.x, quad.z)
    return FitResult(
        params=params,
        converged=converged,
        iterations=it,
        objective_trace=tuple(trace),
        node_weights=weight(st.lam, tau),
        active_set=tuple(int(k) for k in np.flatnonzero(beta[1:]) + 1),
        saturation_count=prob.counter.count,
        tau=float(tau),
        phi=float(phi),
        grad_norm=gnorm,
        flags=tuple(sorted(flags)),
    )


def null_fit(quad: QuadratureScheme, tau: float = math.inf, init: Params | None = None) -> FitResult:
    """Fit with every slope pinned at zero (intercept and ``alpha`` free)."""
    init = init or default_init(quad)
    start = Params(np.r_[init.beta[0], np.zeros(len(init.beta) - 1)], init.alpha)
    return fit(quad, tau, math.inf, start)


def phi_max(quad: QuadratureScheme, tau: float, null: FitResult | None = None) -> float:
    """Smallest ``phi`` at which every slope stays at zero."""
    null = null or null_fit(quad, tau)
    prob = _Problem(quad, tau, 0.0)
    u_beta, _ = prob.score(null.params.beta, null.params.alpha)
    return float(np.abs(u_beta[1:]).max()) if len(u_beta) > 1 else 0.0


def phi_grid(phi_top: float, n_phi: int, floor_ratio: float = 1e-3) -> tuple:
    """Log-spaced grid from ``phi_top`` to ``floor_ratio * phi_top`` then exactly 0."""
    if n_phi < 2:
        raise ValueError("n_phi must be at least 2")
    if phi_top <= 0:
        return tuple([0.0])
    head = np.geomspace(phi_top, floor_ratio * phi_top, n_phi - 1) if n_phi > 2 else np.array([phi_top])
    return tuple(float(v) for v in head) + (0.0,)


def default_n_phi(p: int) -> int:
    return max(2, min(20, 2 * p))


def phi_path(quad: QuadratureScheme, tau: float = math.inf, n_phi: int | None = None,
             **fit_kw) -> PathResult:
    """Fit a descending ``phi`` path, warm-starting each fit from the previous one."""
    p = quad.x.shape[1] - 1
    n_phi = default_n_phi(p) if n_phi is None else n_phi
    null = null_fit(quad, tau)
    top = phi_max(quad, tau, null)
    phis = phi_grid(top, n_phi)
    fits = []
    start = null.params
    for phi in phis:
        res = fit(quad, tau, phi, start, **fit_kw)
        fits.append(res)
        start = res.params
    return PathResult(phis, tuple(fits), top)
