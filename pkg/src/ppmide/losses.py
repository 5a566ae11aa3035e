"""Log-likelihood, divergence loss, estimating functions and penalties.

Sign convention: the optimizer maximizes ``-loss_mide``; the gradient of that
objective is the weighted score returned by :func:`score_mide`, so the
gradient of ``loss_mide`` itself is ``-score_mide``.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .grid import QuadratureScheme
from .kernels import Params, SaturationCounter, Xi, weight, xi


class NumericalError(FloatingPointError):
    pass


class ScoreVector(NamedTuple):
    u_beta: np.ndarray
    u_alpha: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.u_beta, self.u_alpha])


class NodeState(NamedTuple):
    """Per-node quantities at one parameter value."""

    log_lam: np.ndarray
    lam: np.ndarray
    miss: np.ndarray  # 1 - detection, the alpha-chain factor


def node_state(beta, alpha, x, z, counter: SaturationCounter | None = None) -> NodeState:
    counter = counter or SaturationCounter()
    eta_b = counter.clip(x @ beta)
    eta_a = z @ alpha if z.shape[1] else np.zeros(len(x))
    log_lam = eta_b - np.logaddexp(0.0, -eta_a)
    lam = np.exp(log_lam)
    return NodeState(log_lam, lam, expit(-eta_a))


def _state(params: Params, quad: QuadratureScheme, counter=None) -> NodeState:
    if len(params.beta) != quad.x.shape[1] or len(params.alpha) != quad.z.shape[1]:
        raise ValueError("parameter dimensions do not match the quadrature scheme")
    return node_state(params.beta, params.alpha, quad.x, quad.z, counter)


def _loglik_nodes(d, w, st: NodeState):
    return d * st.log_lam - w * st.lam


def _mide_loss_nodes(d, w, st: NodeState, tau: float):
    big_l = np.log1p(tau * st.lam)
    return -(d * big_l + (w / tau) * big_l - w * st.lam)


def loglik(params: Params, quad: QuadratureScheme) -> float:
    """Quadrature-approximated log-likelihood of the thinned process."""
    terms = _loglik_nodes(quad.d, quad.w, _state(params, quad))
    bad = np.flatnonzero(~np.isfinite(terms))
    if bad.size:
        raise NumericalError(f"non-finite log-likelihood term at node {bad[0]}")
    return float(terms.sum())


def loss_mide(params: Params, quad: QuadratureScheme, tau: float) -> float:
    """Divergence loss for ``nu = 1``; ``tau = inf`` dispatches to ``-loglik``."""
    if math.isinf(tau):
        return -loglik(params, quad)
    terms = _mide_loss_nodes(quad.d, quad.w, _state(params, quad), tau)
    bad = np.flatnonzero(~np.isfinite(terms))
    if bad.size:
        raise NumericalError(f"non-finite loss term at node {bad[0]}")
    return float(terms.sum())


def loss_mide_literal(params: Params, quad: QuadratureScheme, tau: float) -> float:
    """Loss written with the generator pair directly; kept as a cross-check."""
    lam = _state(params, quad).lam
    terms = quad.d * xi(lam, tau) - quad.w * lam * xi(lam, tau) + quad.w * Xi(lam, tau)
    return float(-terms.sum())


def _score_from_state(quad, st: NodeState, tau: float) -> ScoreVector:
    resid = weight(st.lam, tau) * (quad.d - quad.w * st.lam)
    return ScoreVector(quad.x.T @ resid, quad.z.T @ (resid * st.miss))


def score_mle(params: Params, quad: QuadratureScheme) -> ScoreVector:
    """Gradient of :func:`loglik` in ``(beta, alpha)``."""
    return _score_from_state(quad, _state(params, quad), math.inf)


def score_mide(params: Params, quad: QuadratureScheme, tau: float) -> ScoreVector:
    """Weighted estimating function, ``F(tau lam)`` times the MLE residual."""
    return _score_from_state(quad, _state(params, quad), tau)


def penalty(beta, phi: float) -> float:
    """L1 penalty on the slopes only; ``phi = inf`` pins every slope at zero."""
    total = float(np.abs(np.asarray(beta)[1:]).sum())
    return phi * total if total else 0.0


def penalized_objective(params: Params, quad: QuadratureScheme, tau: float, phi: float) -> float:
    """Maximization objective ``-loss_mide - phi * sum_k |beta_k|`` (k >= 1)."""
    if phi < 0:
        raise ValueError("phi must be nonnegative")
    return -loss_mide(params, quad, tau) - penalty(params.beta, phi)


def bregman_divergence(lam1, lam2, tau: float, cell_area: float = 1.0, generator=None) -> float:
    """Riemann-sum Bregman divergence between two per-cell intensity maps.

    ``generator`` is an optional ``(Xi, xi)`` pair replacing the default.
    """
    lam1 = np.asarray(lam1, dtype=float)
    lam2 = np.asarray(lam2, dtype=float)
    if lam1.shape != lam2.shape:
        raise ValueError("intensity maps must have equal length")
    if np.any(lam1 <= 0) or np.any(lam2 <= 0):
        raise ValueError("intensities must be positive")
    if generator is None:
        big, small = (lambda t: Xi(t, tau)), (lambda t: xi(t, tau))
    else:
        big, small = generator
    integrand = big(lam1) - big(lam2) - small(lam2) * (lam1 - lam2)
    return float(cell_area * np.maximum(integrand, 0.0).sum())
