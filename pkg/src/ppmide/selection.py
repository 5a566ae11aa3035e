"""Tuning-parameter selection by root trimmed mean squared prediction error."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import GridDataset, QuadratureScheme
from .kernels import thinned_intensity
from .optimize import FitResult, phi_path

DEFAULT_TAU_GRID = (0.1, 1.0, 5.0, 10.0, 20.0, math.inf)
DEFAULT_DELTA = 0.9


class SelectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridPoint:
    tau: float
    phi: float
    rtmspe: float


@dataclass(frozen=True)
class SelectionReport:
    grid: tuple
    best: tuple
    delta: float
    best_fit: FitResult | None = None
    failures: tuple = ()
    fits: dict = field(default_factory=dict, repr=False, compare=False)


def trimmed_rmse(squared_errors, delta: float) -> float:
    """Root mean of the ``floor((n + 1) * delta)`` smallest squared errors."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    e2 = np.sort(np.asarray(squared_errors, dtype=float))
    h = int(math.floor((len(e2) + 1) * delta))
    if h == 0:
        raise ValueError("delta too small: no residuals retained")
    h = min(h, len(e2))
    return math.sqrt(e2[:h].sum() / h)


def expected_counts(fit: FitResult, dataset: GridDataset) -> np.ndarray:
    """Fitted expected count per cell, sampling bias included."""
    return dataset.cell_area * thinned_intensity(fit.params, dataset.design, dataset.z)


def rtmspe(fit: FitResult, dataset: GridDataset, delta: float = DEFAULT_DELTA) -> float:
    resid = dataset.counts - expected_counts(fit, dataset)
    return trimmed_rmse(resid**2, delta)


def _better(a: GridPoint, b: GridPoint) -> bool:
    """True when ``a`` should replace the incumbent ``b``."""
    if a.rtmspe != b.rtmspe:
        return a.rtmspe < b.rtmspe
    if a.tau != b.tau:
        return a.tau > b.tau
    return a.phi > b.phi


def grid_search(quad: QuadratureScheme, dataset: GridDataset, tau_grid=DEFAULT_TAU_GRID,
                delta: float = DEFAULT_DELTA, n_phi: int | None = None, **fit_kw) -> SelectionReport:
    """Run a ``phi`` path for each ``tau`` and pick the pair with least RTMSPE."""
    tau_grid = tuple(float(t) for t in tau_grid)
    if not tau_grid:
        raise ValueError("empty tau grid")
    rows, failures, fits = [], [], {}
    best = None
    for tau in tau_grid:
        try:
            path = phi_path(quad, tau, n_phi, **fit_kw)
        except (RuntimeError, FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
            failures.append((tau, repr(exc)))
            continue
        for phi, res in zip(path.phis, path.fits):
            point = GridPoint(tau, phi, rtmspe(res, dataset, delta))
            rows.append(point)
            fits[(tau, phi)] = res
            if best is None or _better(point, best):
                best = point
    if best is None:
        raise SelectionError(f"every fit failed: {failures}")
    return SelectionReport(tuple(rows), (best.tau, best.phi), delta,
                           fits[(best.tau, best.phi)], tuple(failures), fits)
