"""Robust estimation for thinned Poisson point process models."""

from importlib import resources

from .grid import (GridDataset, QuadratureScheme, build_quadrature, dedupe_presences,
                   read_cells_csv, standardize)
from .kernels import INF, HyperParams, Params
from .optimize import FitResult, PathResult, fit, phi_path
from .selection import grid_search, rtmspe


def fixture_path(name: str = "cells20.csv"):
    """Path of a bundled example file (``cells20.csv`` or ``pa20.csv``)."""
    return resources.files("ppmide") / "data" / name
