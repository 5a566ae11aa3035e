"""Intensity, detection and weight kernels.

The weight CDF is Pareto type II. With shape ``nu = 1`` the Bregman generator
built from it has the closed forms

    xi(t) = log(1 + tau t)
    Xi(t) = ((1 + tau t) log(1 + tau t) - tau t) / tau

which is the only case supported here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

#: Linear predictors are clipped to this magnitude before exponentiation.
ETA_CAP = 700.0

INF = math.inf


class UnsupportedShape(NotImplementedError):
    """Raised for Pareto shape parameters other than 1."""


@dataclass(frozen=True)
class Params:
    """Model parameters: ``beta`` (intercept first) and ``alpha``."""

    beta: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).ravel()
        alpha = np.array(self.alpha, dtype=float).ravel()
        if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(alpha))):
            raise ValueError("parameters must be finite")
        beta.flags.writeable = False
        alpha.flags.writeable = False
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", alpha)

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.beta, self.alpha])

    @classmethod
    def from_theta(cls, theta, n_beta: int) -> "Params":
        theta = np.asarray(theta, dtype=float)
        return cls(theta[:n_beta], theta[n_beta:])


@dataclass(frozen=True)
class HyperParams:
    """Tuning constants. ``tau = inf`` is the maximum-likelihood limit."""

    tau: float = INF
    nu: float = 1.0
    phi: float = 0.0
    delta: float = 0.9

    def __post_init__(self):
        if not (self.tau > 0):
            raise ValueError("tau must be positive or inf")
        if not (self.nu > 0):
            raise ValueError("nu must be positive")
        if not (self.phi >= 0):
            raise ValueError("phi must be nonnegative")
        if not (0 < self.delta < 1):
            raise ValueError("delta must lie in (0, 1)")


class SaturationCounter:
    """Counts how many linear predictors hit ``ETA_CAP``."""

    def __init__(self):
        self.count = 0

    def clip(self, eta):
        eta = np.asarray(eta, dtype=float)
        hits = np.count_nonzero(np.abs(eta) > ETA_CAP)
        if hits:
            self.count += int(hits)
            eta = np.clip(eta, -ETA_CAP, ETA_CAP)
        return eta


def _check_dims(coef, row, what):
    if np.shape(coef)[-1:] != np.shape(row)[-1:]:
        raise ValueError(f"{what}: dimension mismatch {np.shape(coef)} vs {np.shape(row)}")


def intensity(beta, x_row, counter: SaturationCounter | None = None):
    """Log-linear intensity ``exp(beta @ x)``; ``x_row`` includes the intercept."""
    beta = np.asarray(beta, dtype=float)
    x_row = np.asarray(x_row, dtype=float)
    _check_dims(beta, x_row, "intensity")
    eta = x_row @ beta
    eta = (counter or SaturationCounter()).clip(eta)
    return np.exp(eta)


def detection(alpha, z_row):
    """Logistic detection probability ``expit(alpha @ z)``."""
    alpha = np.asarray(alpha, dtype=float)
    z_row = np.asarray(z_row, dtype=float)
    _check_dims(alpha, z_row, "detection")
    return expit(z_row @ alpha)


def thinned_intensity(params: Params, x_row, z_row, counter=None):
    return intensity(params.beta, x_row, counter) * detection(params.alpha, z_row)


def pareto_cdf(x, nu: float = 1.0):
    """Pareto type II CDF ``1 - (1 + nu x)^(-1/nu)``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("pareto_cdf is defined for x >= 0")
    return -np.expm1(-np.log1p(nu * x) / nu)


def weight(lam, tau: float, nu: float = 1.0):
    """Estimating-equation weight ``F(tau * lam)``; identically 1 when ``tau`` is inf."""
    lam = np.asarray(lam, dtype=float)
    if math.isinf(tau):
        return np.ones_like(lam)
    if nu == 1.0:
        t = tau * lam
        return t / (1.0 + t)
    return pareto_cdf(tau * lam, nu)


def _require_unit_shape(nu):
    if nu != 1.0:
        raise UnsupportedShape("closed-form generators exist only for nu = 1")


def xi(t, tau: float, nu: float = 1.0):
    """First derivative of the generator: ``log(1 + tau t)``."""
    _require_unit_shape(nu)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("xi is defined for t >= 0")
    return np.log1p(tau * t)


def Xi(t, tau: float, nu: float = 1.0):
    """Convex Bregman generator ``((1 + tau t) log(1 + tau t) - tau t) / tau``."""
    _require_unit_shape(nu)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("Xi is defined for t >= 0")
    u = tau * t
    # (1+u)log1p(u) - u loses all digits for small u; use the series there.
    small = u < 1e-4
    us = np.where(small, u, 0.0)
    series = us**2 / 2 - us**3 / 6 + us**4 / 12
    ub = np.where(small, 1.0, u)
    direct = (1.0 + ub) * np.log1p(ub) - ub
    return np.where(small, series, direct) / tau
