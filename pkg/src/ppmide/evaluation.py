"""Habitat prediction maps, AUC against presence-absence data, comparison reports."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .grid import GridDataset
from .inference import WeightGroups
from .kernels import intensity
from .optimize import FitResult


@dataclass(frozen=True)
class PredictionMap:
    cell_ids: tuple
    raw_intensity: np.ndarray
    standardized: np.ndarray
    degenerate: bool = False


def standardize_map(raw) -> tuple[np.ndarray, bool]:
    """Min-max scaling to [0, 1]; a constant map becomes all 0.5."""
    raw = np.asarray(raw, dtype=float)
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        return np.full(len(raw), 0.5), True
    return (raw - lo) / (hi - lo), False


def predict_intensity(fit: FitResult, dataset: GridDataset) -> PredictionMap:
    """Bias-free habitat intensity ``exp(beta_hat @ x)`` per cell."""
    raw = intensity(fit.params.beta, dataset.design)
    std, flat = standardize_map(raw)
    return PredictionMap(dataset.cell_ids, raw, std, flat)


def auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied positive/negative pairs count one half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isin(labels, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both presence and absence labels")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


@dataclass(frozen=True)
class ComparisonReport:
    auc_mle: float
    auc_mide: float
    coefficients: tuple  # (estimator, k, name, estimate)
    tau_mide: float
    weight_summary: tuple = ()  # (group, size, median)


def compare_report(fit_mle: FitResult, fit_mide: FitResult, dataset: GridDataset, pa_labels,
                   groups: WeightGroups | None = None) -> ComparisonReport:
    """AUCs of both habitat maps on the surveyed cells plus a coefficient table.

    Cells with label ``-1`` (not surveyed) are ignored.
    """
    labels = np.asarray(pa_labels)
    surveyed = labels >= 0
    scores = {}
    for name, res in (("MLE", fit_mle), ("MIDE", fit_mide)):
        scores[name] = auc(predict_intensity(res, dataset).raw_intensity[surveyed], labels[surveyed])
    names = ("intercept",) + dataset.x_names
    coef = tuple((est, k, names[k], float(v))
                 for est, res in (("MLE", fit_mle), ("MIDE", fit_mide))
                 for k, v in enumerate(res.params.beta))
    summary = ()
    if groups is not None:
        summary = (("A", len(groups.group_a), groups.median_a),
                   ("B", len(groups.group_b), groups.median_b))
    return ComparisonReport(scores["MLE"], scores["MIDE"], coef, fit_mide.tau, summary)


def _writer(path):
    fh = Path(path).open("w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def write_prediction_csv(path, pred: PredictionMap) -> None:
    fh, out = _writer(path)
    with fh:
        out.writerow(["cell_id", "raw_intensity", "standardized"])
        for cell, raw, std in zip(pred.cell_ids, pred.raw_intensity, pred.standardized):
            out.writerow([cell, repr(float(raw)), repr(float(std))])


def write_report_csvs(out_dir, report: ComparisonReport) -> None:
    out_dir = Path(out_dir)
    fh, out = _writer(out_dir / "auc.csv")
    with fh:
        out.writerow(["estimator", "tau", "auc"])
        out.writerow(["MLE", "inf", repr(report.auc_mle)])
        out.writerow(["MIDE", format_tau(report.tau_mide), repr(report.auc_mide)])
    fh, out = _writer(out_dir / "coefficients.csv")
    with fh:
        out.writerow(["estimator", "k", "name", "estimate"])
        for est, k, name, v in report.coefficients:
            out.writerow([est, k, name, repr(v)])
    if report.weight_summary:
        fh, out = _writer(out_dir / "weight_groups.csv")
        with fh:
            out.writerow(["group", "size", "median_weight"])
            for group, size, med in report.weight_summary:
                out.writerow([group, size, repr(float(med))])


def format_tau(tau: float) -> str:
    return "inf" if np.isinf(tau) else repr(float(tau))
