"""Sandwich covariance for the intensity coefficients and weight diagnostics."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import QuadratureScheme
from .kernels import weight
from .losses import node_state
from .optimize import FitResult

MAX_CONDITION = 1e12


class SingularInformation(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class SandwichCov:
    J: np.ndarray
    I: np.ndarray
    Sigma: np.ndarray
    Lambda_hat: float
    beta_hat: np.ndarray

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.Sigma) / self.Lambda_hat)

    @property
    def z(self) -> np.ndarray:
        return self.beta_hat / self.se


def sandwich_cov(fit: FitResult, quad: QuadratureScheme, tau: float | None = None) -> SandwichCov:
    """Plug-in ``J^-1 I J^-1`` under the fitted intensity measure.

    ``J`` and ``I`` average ``F`` and ``F**2`` times ``x x^T`` with node masses
    ``w * lam_hat``, normalized by ``Lambda_hat = sum(w * lam_hat)``. Standard
    errors are ``sqrt(diag(Sigma) / Lambda_hat)``.
    """
    tau = fit.tau if tau is None else tau
    st = node_state(fit.params.beta, fit.params.alpha, quad.x, quad.z)
    mass = quad.w * st.lam
    total = float(mass.sum())
    f = weight(st.lam, tau)
    xw = quad.x * (mass * f)[:, None]
    J = (xw.T @ quad.x) / total
    I = ((xw * f[:, None]).T @ quad.x) / total
    J = 0.5 * (J + J.T)
    I = 0.5 * (I + I.T)
    cond = np.linalg.cond(J)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularInformation(
            f"J is numerically singular (condition number {cond:.3g}); "
            "use a stronger penalty or fewer covariates")
    j_inv = np.linalg.inv(J)
    sigma = j_inv @ I @ j_inv
    return SandwichCov(J, I, 0.5 * (sigma + sigma.T), total, np.array(fit.params.beta))


def write_sandwich_csv(path, cov: SandwichCov, names=None) -> None:
    names = names or [f"beta{k}" for k in range(len(cov.beta_hat))]
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["k", "name", "beta_hat", "se", "z"])
        for k, (b, s, z) in enumerate(zip(cov.beta_hat, cov.se, cov.z)):
            out.writerow([k, names[k], repr(float(b)), repr(float(s)), repr(float(z))])


@dataclass(frozen=True)
class WeightGroups:
    group_a: np.ndarray
    group_b: np.ndarray

    @property
    def median_a(self) -> float:
        return float(np.median(self.group_a)) if len(self.group_a) else math.nan

    @property
    def median_b(self) -> float:
        return float(np.median(self.group_b)) if len(self.group_b) else math.nan


def weight_groups(fit: FitResult, quad: QuadratureScheme, reliable_flags) -> WeightGroups:
    """Split presence-node weights by an external reliability flag.

    ``reliable_flags`` has one entry per presence node (``d == 1``) in node
    order; True nodes form group A.
    """
    flags = np.asarray(reliable_flags, dtype=bool)
    presence = np.flatnonzero(quad.d == 1)
    if len(flags) != len(presence):
        raise ValueError(f"expected {len(presence)} flags, got {len(flags)}")
    w = np.asarray(fit.node_weights)[presence]
    return WeightGroups(w[flags], w[~flags])
