"""
Fitting the bundled 20-cell dataset
===================================

Read the small fixture, standardize its covariates, and compare the
maximum-likelihood fit with a robust fit at ``tau = 1``.
"""

import math

import numpy as np

from ppmide import build_quadrature, fit, fixture_path, read_cells_csv, standardize
from ppmide.inference import sandwich_cov

# 20 grid cells, two environmental covariates and one bias variable
ds = read_cells_csv(fixture_path("cells20.csv"))
ds, record = standardize(ds)
print("counts per cell:", ds.counts)

# one quadrature node per presence record, one for each empty cell
quad = build_quadrature(ds)
print("nodes:", quad.r, "presences:", quad.m)

mle = fit(quad, tau=math.inf)
robust = fit(quad, tau=1.0)
print("MLE   beta:", np.round(mle.params.beta, 3), "alpha:", np.round(mle.params.alpha, 3))
print("tau=1 beta:", np.round(robust.params.beta, 3), "alpha:", np.round(robust.params.alpha, 3))

# node weights are all 1 for the MLE; the robust fit discounts presences
# sitting where the fitted intensity is low
presence = quad.d == 1
order = np.argsort(robust.node_weights[presence])
print("smallest presence weights:", np.round(robust.node_weights[presence][order[:3]], 3))

cov = sandwich_cov(robust, quad)
for name, b, se in zip(("intercept",) + ds.x_names, cov.beta_hat, cov.se):
    print(f"{name:>9s} {b:8.3f}  se {se:.3f}")
