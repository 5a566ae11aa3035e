"""Simulated presence-only data from a thinned (optionally superposed) Poisson process.

Every replicate draws its own generator from ``SeedSequence([seed, index])``,
so replicate ``r`` is the same no matter how many replicates run or in what
order.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .grid import GridDataset, build_quadrature
from .optimize import fit
from .selection import DEFAULT_DELTA, DEFAULT_TAU_GRID, grid_search

BETA_TRUE = (-2.0, 1.0, 1.0, -1.0, -1.0)
ALPHA_TRUE = (1.0, -1.0)
GAMMA_LIGHT = (-4.2, -1.0, -1.0, 1.0, 1.0)
GAMMA_HEAVY = (-3.4, -1.0, -1.0, 1.0, 1.0)


@dataclass(frozen=True)
class Scenario:
    name: str = "none"
    n_cells: int = 2000
    beta_true: tuple = BETA_TRUE
    gamma_true: tuple | None = None
    alpha_true: tuple = ALPHA_TRUE
    seed: int = 0

    @property
    def contaminated(self) -> bool:
        return self.gamma_true is not None


PRESETS = {
    "none": Scenario("none"),
    "light": Scenario("light", gamma_true=GAMMA_LIGHT),
    "heavy": Scenario("heavy", gamma_true=GAMMA_HEAVY),
}


def preset(name: str, **overrides) -> Scenario:
    if name not in PRESETS:
        raise KeyError(f"unknown scenario preset {name!r}; choose from {sorted(PRESETS)}")
    return replace(PRESETS[name], **overrides)


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def gen_covariates(n: int, rng: np.random.Generator, p: int = 4, q: int = 2):
    """Standard normal environmental (``n x p``) and bias (``n x q``) matrices."""
    return rng.standard_normal((n, p)), rng.standard_normal((n, q))


def _log_intensity(coef, x):
    coef = np.asarray(coef, dtype=float)
    return coef[0] + x @ coef[1:]


def expected_contamination_rate(beta, gamma, x) -> float:
    """Share of total intensity contributed by the contaminating process."""
    lb = _log_intensity(beta, x)
    lg = _log_intensity(gamma, x)
    top = np.logaddexp.reduce(lg)
    return float(math.exp(top - np.logaddexp(np.logaddexp.reduce(lb), top)))


def population_contamination_rate(beta, gamma) -> float:
    """Rate under standard normal covariates, via the lognormal mean."""
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    lb = beta[0] + 0.5 * beta[1:] @ beta[1:]
    lg = gamma[0] + 0.5 * gamma[1:] @ gamma[1:]
    return float(expit(lg - lb))


def sample_counts(cell_intensities, rng: np.random.Generator) -> np.ndarray:
    """Poisson total, then a multinomial allocation proportional to intensity."""
    lam = np.asarray(cell_intensities, dtype=float)
    if np.any(lam < 0):
        raise ValueError("intensities must be nonnegative")
    total = lam.sum()
    if total == 0:
        return np.zeros(len(lam), dtype=np.int64)
    m = rng.poisson(total)
    return rng.multinomial(m, lam / total).astype(np.int64)


@dataclass(frozen=True)
class SimulatedData:
    dataset: GridDataset
    target_counts: np.ndarray
    contamination_counts: np.ndarray
    target_intensity: np.ndarray
    contamination_rate: float


def simulate_replicate(scenario: Scenario, index: int, contaminated: bool | None = None) -> SimulatedData:
    """One dataset: fresh covariates, thinned intensity, two-stage sampling.

    Counts are split into target and contamination parts by binomial thinning
    in proportion to each process's share of the cell intensity.
    """
    contaminated = scenario.contaminated if contaminated is None else contaminated
    rng = replicate_rng(scenario.seed, index)
    x, z = gen_covariates(scenario.n_cells, rng)
    lam_b = np.exp(_log_intensity(scenario.beta_true, x))
    detect = expit(z @ np.asarray(scenario.alpha_true, dtype=float))
    if contaminated:
        lam_g = np.exp(_log_intensity(scenario.gamma_true, x))
        rate = expected_contamination_rate(scenario.beta_true, scenario.gamma_true, x)
    else:
        lam_g = np.zeros(scenario.n_cells)
        rate = 0.0
    counts = sample_counts((lam_b + lam_g) * detect, rng)
    share = np.divide(lam_b, lam_b + lam_g)
    target = rng.binomial(counts, share)
    ds = GridDataset(tuple(range(scenario.n_cells)), counts, x, z)
    return SimulatedData(ds, target, counts - target, lam_b, rate)


@dataclass(frozen=True)
class ReplicateRow:
    replicate_id: int
    estimator: str
    tau_selected: float
    phi_selected: float
    beta_hat: tuple
    m_observed: int
    contamination_rate_realized: float
    converged: bool


@dataclass(frozen=True)
class ReplicateTable:
    scenario: Scenario
    contaminated: bool
    rows: tuple = field(default_factory=tuple)
    failures: tuple = ()

    def estimates(self, estimator: str) -> np.ndarray:
        return np.array([r.beta_hat for r in self.rows if r.estimator == estimator])

    def selected_taus(self) -> np.ndarray:
        return np.array([r.tau_selected for r in self.rows if r.estimator == "MIDE"])


def presence_flags(sim: SimulatedData) -> np.ndarray:
    """Per presence node, True when it came from the target process.

    Node order follows :func:`build_quadrature`: cells in order, the target
    presences of a cell before its contamination presences.
    """
    counts = sim.dataset.counts
    flags = [np.r_[np.ones(t, bool), np.zeros(c - t, bool)]
             for t, c in zip(sim.target_counts, counts) if c > 0]
    return np.concatenate(flags) if flags else np.zeros(0, bool)


def synthetic_pa(sim: SimulatedData, rng: np.random.Generator) -> np.ndarray:
    """Presence-absence survey of the target process: P(present) = 1 - exp(-lam_beta)."""
    return (rng.random(len(sim.target_intensity)) < -np.expm1(-sim.target_intensity)).astype(int)


@dataclass(frozen=True)
class ReplicateFits:
    sim: SimulatedData
    quad: object
    mle: object
    selection: object


def fit_replicate(scenario: Scenario, index: int, contaminated: bool | None = None,
                  tau_grid=DEFAULT_TAU_GRID, delta: float = DEFAULT_DELTA,
                  n_phi: int | None = None) -> ReplicateFits:
    """Simulate replicate ``index`` and fit the MLE and the RTMSPE-selected MIDE."""
    sim = simulate_replicate(scenario, index, contaminated)
    quad = build_quadrature(sim.dataset)
    mle = fit(quad, math.inf, 0.0)
    report = grid_search(quad, sim.dataset, tau_grid, delta, n_phi)
    return ReplicateFits(sim, quad, mle, report)


def replicate_rows(index: int, fits: ReplicateFits) -> tuple:
    common = dict(m_observed=fits.quad.m, contamination_rate_realized=fits.sim.contamination_rate)
    best = fits.selection.best_fit
    tau, phi = fits.selection.best
    return (
        ReplicateRow(index, "MLE", math.inf, 0.0, tuple(fits.mle.params.beta),
                     converged=fits.mle.converged, **common),
        ReplicateRow(index, "MIDE", tau, phi, tuple(best.params.beta), converged=best.converged, **common),
    )


def _run_one(args):
    scenario, contaminated, index, tau_grid, delta, n_phi = args
    try:
        fits = fit_replicate(scenario, index, contaminated, tau_grid, delta, n_phi)
    except Exception as exc:  # recorded per replicate, never fatal
        return (), (index, repr(exc))
    return replicate_rows(index, fits), None


def run_scenario(scenario: Scenario, contaminated: bool | None = None, n_replicates: int = 200,
                 tau_grid=DEFAULT_TAU_GRID, delta: float = DEFAULT_DELTA, n_phi: int | None = None,
                 n_jobs: int = 1) -> ReplicateTable:
    """Simulate and fit ``n_replicates`` datasets; rows are ordered by replicate."""
    contaminated = scenario.contaminated if contaminated is None else contaminated
    if contaminated and scenario.gamma_true is None:
        raise ValueError("contaminated run needs gamma_true")
    jobs = [(scenario, contaminated, r, tuple(tau_grid), delta, n_phi) for r in range(n_replicates)]
    if n_jobs == 1:
        results = list(map(_run_one, jobs))
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    rows = tuple(row for rs, _ in results for row in rs)
    failures = tuple(f for _, f in results if f is not None)
    return ReplicateTable(scenario, contaminated, rows, failures)


def _fmt(v) -> str:
    v = float(v)
    return "inf" if math.isinf(v) else repr(v)


def write_replicates_csv(path, tables) -> None:
    if isinstance(tables, ReplicateTable):
        tables = [tables]
    p = len(tables[0].scenario.beta_true)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["scenario", "replicate_id", "estimator", "tau_selected", "phi_selected",
                      *(f"beta{k}" for k in range(p)), "m_observed",
                      "contamination_rate_realized", "converged"])
        for table in tables:
            for r in table.rows:
                out.writerow([table.scenario.name, r.replicate_id, r.estimator, _fmt(r.tau_selected),
                              _fmt(r.phi_selected), *(_fmt(b) for b in r.beta_hat), r.m_observed,
                              _fmt(r.contamination_rate_realized), int(r.converged)])


def summary_rows(table: ReplicateTable):
    """Per estimator and coefficient: truth, median, quartiles (boxplot numbers)."""
    rows = []
    for est in ("MLE", "MIDE"):
        values = table.estimates(est)
        if not len(values):
            continue
        q1, med, q3 = np.percentile(values, [25, 50, 75], axis=0)
        for k, truth in enumerate(table.scenario.beta_true):
            rows.append((table.scenario.name, est, k, truth, med[k], q1[k], q3[k], q3[k] - q1[k]))
    return rows


def write_summary_csv(path, tables) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["scenario", "estimator", "k", "truth", "median", "q1", "q3", "iqr"])
        for table in tables:
            for row in summary_rows(table):
                out.writerow([*row[:3], *(_fmt(v) for v in row[3:])])


def selection_frequencies(table: ReplicateTable, tau_grid=DEFAULT_TAU_GRID) -> list:
    taus = table.selected_taus()
    total = len(taus)
    return [(float(t), float(np.count_nonzero(taus == t)) / total if total else math.nan)
            for t in tau_grid]


def write_selection_freq_csv(path, tables, tau_grid=DEFAULT_TAU_GRID) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["scenario", "tau", "frequency"])
        for table in tables:
            for tau, freq in selection_frequencies(table, tau_grid):
                out.writerow([table.scenario.name, _fmt(tau), _fmt(freq)])


def write_scenario_record(path, scenarios) -> None:
    """Plain ``key = value`` record of every scenario's truths."""
    with open(path, "w") as fh:
        for sc in scenarios:
            fh.write(f"[{sc.name}]\n")
            fh.write(f"n_cells = {sc.n_cells}\n")
            fh.write(f"seed = {sc.seed}\n")
            fh.write("beta = " + ",".join(_fmt(v) for v in sc.beta_true) + "\n")
            gamma = "none" if sc.gamma_true is None else ",".join(_fmt(v) for v in sc.gamma_true)
            fh.write(f"gamma = {gamma}\n")
            fh.write("alpha = " + ",".join(_fmt(v) for v in sc.alpha_true) + "\n")
