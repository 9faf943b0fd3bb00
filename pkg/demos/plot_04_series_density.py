"""
Orthogonal series densities
===========================

Densities are estimated by projecting onto an orthonormal basis.  The
truncation is picked by cross-validation and pointwise intervals use the
sample spread of the per-observation terms.
"""

import numpy as np
from scipy import stats

from triad.basis import HermiteFunctions, Legendre
from triad.density import confidence_interval, cross_validate, estimate_density

rng = np.random.default_rng(3)
H = HermiteFunctions()

# the coefficients of the standard normal density
print("Hermite coefficients of N(0,1):", np.round(H.project(stats.norm.pdf, 5), 6))

y = rng.standard_normal(2000)
w = np.ones_like(y)
kappa, path = cross_validate(w, y, H, kappa_max=10)
print("cross-validated truncation:", kappa)
fhat = estimate_density(w, y, H, kappa)
points = np.array([-1.0, 0.0, 1.0])
lo, hi = confidence_interval(w, y, fhat, points)
for t, a, b in zip(points, lo, hi):
    print(f"f({t:+.0f}) = {stats.norm.pdf(t):.4f}, 95% interval [{a:.4f}, {b:.4f}]")

# bounded data use the Legendre basis on [-1, 1]
u = 2 * rng.beta(2, 3, 2000) - 1
L = Legendre()
kappa, _ = cross_validate(np.ones_like(u), u, L, kappa_max=10)
print("Legendre truncation for a beta sample:", kappa)
