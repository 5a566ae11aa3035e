"""Gridded presence-only data and the Berman-Turner quadrature scheme.

A study area is a set of equal-area grid cells. Each cell carries a presence
count, environmental covariates ``x`` and sampling-bias covariates ``z``.
Presence locations are represented at cell resolution, so every node of the
quadrature scheme inherits the covariates of the cell it came from.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class IngestionError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class GridDataset:
    """Presence counts and covariates on a uniform grid.

    Attributes:
        cell_ids: unique cell identifiers, length ``n``.
        counts: nonnegative presence counts per cell.
        x: environmental covariates, shape ``(n, p)`` (no intercept column).
        z: sampling-bias covariates, shape ``(n, q)``.
        area_total: area of the study region. Defaults to ``n`` (unit cells).
        x_names, z_names: column labels used in reports.
    """

    cell_ids: tuple
    counts: np.ndarray
    x: np.ndarray
    z: np.ndarray
    area_total: float | None = None
    x_names: tuple = ()
    z_names: tuple = ()

    def __post_init__(self):
        n = len(self.cell_ids)
        if n == 0:
            raise IngestionError("dataset has no cells")
        counts = np.asarray(self.counts)
        x = np.asarray(self.x, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if x.ndim == 1 or x.size == 0:
            x = x.reshape(n, -1)
        if z.ndim == 1 or z.size == 0:
            z = z.reshape(n, -1)
        if len(set(self.cell_ids)) != n:
            raise IngestionError("cell_ids are not unique")
        if counts.shape != (n,):
            raise IngestionError(f"counts has shape {counts.shape}, expected ({n},)")
        if np.any(counts < 0) or not np.all(np.equal(np.mod(counts, 1), 0)):
            raise IngestionError("counts must be nonnegative integers")
        if x.shape[0] != n or z.shape[0] != n:
            raise IngestionError("covariate matrices must have one row per cell")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            raise IngestionError("covariates contain missing or non-finite values")
        area = float(n) if self.area_total is None else float(self.area_total)
        if not area > 0:
            raise IngestionError("area_total must be positive")
        x_names = tuple(self.x_names) or tuple(f"x{k + 1}" for k in range(x.shape[1]))
        z_names = tuple(self.z_names) or tuple(f"z{k + 1}" for k in range(z.shape[1]))
        if len(x_names) != x.shape[1] or len(z_names) != z.shape[1]:
            raise IngestionError("column names do not match covariate widths")
        object.__setattr__(self, "cell_ids", tuple(self.cell_ids))
        object.__setattr__(self, "counts", counts.astype(np.int64))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "area_total", area)
        object.__setattr__(self, "x_names", x_names)
        object.__setattr__(self, "z_names", z_names)

    @property
    def n_cells(self) -> int:
        return len(self.cell_ids)

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def q(self) -> int:
        return self.z.shape[1]

    @property
    def cell_area(self) -> float:
        return self.area_total / self.n_cells

    @property
    def design(self) -> np.ndarray:
        """Cell-level design matrix with a leading intercept column."""
        return np.column_stack([np.ones(self.n_cells), self.x])

    def with_counts(self, counts) -> "GridDataset":
        return GridDataset(self.cell_ids, np.asarray(counts), self.x, self.z,
                           self.area_total, self.x_names, self.z_names)


@dataclass(frozen=True)
class QuadratureScheme:
    """Berman-Turner quadrature nodes.

    Node ``i`` has presence indicator ``d[i]``, weight ``w[i]``, design row
    ``x[i] = (1, x_1, ..., x_p)`` and bias row ``z[i]``. ``origin[i]`` is the
    index of the cell the node came from.
    """

    d: np.ndarray
    w: np.ndarray
    x: np.ndarray
    z: np.ndarray
    origin: np.ndarray
    cell_ids: tuple
    area_total: float
    m: int
    m_n: int
    n_cells: int
    _compact: "QuadratureScheme | None" = field(default=None, repr=False, compare=False)

    @property
    def r(self) -> int:
        return len(self.d)

    def compact(self) -> "QuadratureScheme":
        """Equivalent scheme with one aggregated node per cell.

        Nodes in the same cell share covariates, so summing ``d`` and ``w``
        per cell leaves every node sum in the losses and scores unchanged.
        The aggregated ``d`` is the cell count, ``w`` is the cell area.
        """
        if self._compact is not None:
            return self._compact
        n = self.n_cells
        d = np.bincount(self.origin, weights=self.d, minlength=n)
        w = np.bincount(self.origin, weights=self.w, minlength=n)
        first = np.full(n, -1)
        first[self.origin[::-1]] = np.arange(self.r)[::-1]
        comp = QuadratureScheme(d, w, self.x[first], self.z[first], np.arange(n),
                                self.cell_ids, self.area_total, self.m, self.m_n, n)
        object.__setattr__(comp, "_compact", comp)
        object.__setattr__(self, "_compact", comp)
        return comp


@dataclass(frozen=True)
class StandardizationRecord:
    """Per-column affine transform ``(v - mean) / sd``."""

    names: tuple
    mean: np.ndarray
    sd: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.mean) / self.sd

    def invert(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.sd + self.mean


def dedupe_presences(raw_counts: dict, apply: bool = True, known_cells=None) -> dict:
    """Clamp every cell count to at most one presence.

    Args:
        raw_counts: mapping ``cell_id -> count``.
        apply: when False the counts are returned unchanged (simulation fits
            keep multiplicities).
        known_cells: optional collection of valid cell ids; any other id is an
            ingestion error.
    """
    out = {}
    for cell, count in raw_counts.items():
        if known_cells is not None and cell not in known_cells:
            raise IngestionError(f"unknown cell_id {cell!r}")
        if count < 0:
            raise IngestionError(f"negative count for cell {cell!r}")
        out[cell] = min(count, 1) if apply else count
    return out


def standardize(dataset: GridDataset) -> tuple[GridDataset, StandardizationRecord]:
    """Standardize every covariate and bias column to mean 0, variance 1.

    The sample variance uses divisor ``n - 1``.
    """
    values = np.column_stack([dataset.x, dataset.z])
    names = dataset.x_names + dataset.z_names
    mean = values.mean(axis=0)
    sd = values.std(axis=0, ddof=1)
    for name, s, col in zip(names, sd, values.T):
        if not s > 0 or np.ptp(col) == 0:
            raise IngestionError(f"constant column {name!r} cannot be standardized")
    record = StandardizationRecord(names, mean, sd)
    scaled = record.apply(values)
    p = dataset.p
    out = GridDataset(dataset.cell_ids, dataset.counts, scaled[:, :p], scaled[:, p:],
                      dataset.area_total, dataset.x_names, dataset.z_names)
    return out, record


def build_quadrature(dataset: GridDataset) -> QuadratureScheme:
    """Build quadrature nodes with weights ``|A| / (n * max(1, m_i))``."""
    counts = dataset.counts
    n = dataset.n_cells
    reps = np.maximum(counts, 1)
    origin = np.repeat(np.arange(n), reps)
    d = np.repeat((counts > 0).astype(float), reps)
    w = np.repeat(dataset.area_total / (n * reps), reps)
    design = dataset.design
    return QuadratureScheme(
        d=d, w=w, x=design[origin], z=dataset.z[origin], origin=origin,
        cell_ids=dataset.cell_ids, area_total=dataset.area_total,
        m=int(counts.sum()), m_n=int(np.count_nonzero(counts)), n_cells=n,
    )


def _parse_float(value: str, path, lineno: int, column: str) -> float:
    if value is None or value.strip() == "":
        raise IngestionError(f"{path}:{lineno}: missing value in column {column!r}")
    try:
        return float(value)
    except ValueError:
        raise IngestionError(f"{path}:{lineno}: bad number {value!r} in column {column!r}") from None


def read_cells_csv(path, area_total: float | None = None) -> GridDataset:
    """Read ``cells.csv`` with header ``cell_id,count,x1..xp,z1..zq``.

    Columns whose name starts with ``z`` are bias variables; every other
    column after ``count`` is an environmental covariate.
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"{path}: file not found")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        if header[:2] != ["cell_id", "count"]:
            raise IngestionError(f"{path}:1: header must start with 'cell_id,count'")
        rest = header[2:]
        x_cols = [k for k, h in enumerate(rest) if not h.startswith("z")]
        z_cols = [k for k, h in enumerate(rest) if h.startswith("z")]
        ids, counts, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestionError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            count = _parse_float(row[1], path, lineno, "count")
            if count < 0 or count != int(count):
                raise IngestionError(f"{path}:{lineno}: count must be a nonnegative integer")
            ids.append(row[0].strip())
            counts.append(int(count))
            rows.append([_parse_float(v, path, lineno, h) for v, h in zip(row[2:], rest)])
    if not ids:
        raise IngestionError(f"{path}: no data rows")
    if len(set(ids)) != len(ids):
        raise IngestionError(f"{path}: duplicate cell_id values")
    values = np.array(rows, dtype=float).reshape(len(ids), len(rest))
    return GridDataset(
        tuple(ids), np.array(counts), values[:, x_cols], values[:, z_cols], area_total,
        tuple(rest[k] for k in x_cols), tuple(rest[k] for k in z_cols),
    )


def read_pa_csv(path, cell_ids) -> np.ndarray:
    """Read ``pa.csv`` (``cell_id,label``) aligned to ``cell_ids``.

    Cells missing from the file get label -1 (not surveyed).
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"{path}: file not found")
    index = {c: k for k, c in enumerate(cell_ids)}
    labels = np.full(len(cell_ids), -1, dtype=int)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["cell_id", "label"]:
            raise IngestionError(f"{path}:1: header must be 'cell_id,label'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 or row[1].strip() not in ("0", "1"):
                raise IngestionError(f"{path}:{lineno}: label must be 0 or 1")
            cell = row[0].strip()
            if cell not in index:
                raise IngestionError(f"{path}:{lineno}: unknown cell_id {cell!r}")
            labels[index[cell]] = int(row[1])
    return labels


def write_cells_csv(path, dataset: GridDataset) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cell_id", "count", *dataset.x_names, *dataset.z_names])
        for k, cell in enumerate(dataset.cell_ids):
            writer.writerow([cell, int(dataset.counts[k]),
                             *(repr(float(v)) for v in dataset.x[k]),
                             *(repr(float(v)) for v in dataset.z[k])])
