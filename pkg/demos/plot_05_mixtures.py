"""
Nonparametric finite mixtures
=============================

Three conditionally independent measurements identify a finite mixture
without parametric assumptions on the component distributions.
"""

import numpy as np

from triad import simulate
from triad.models import fit_continuous_mixture, fit_discrete_mixture

# discrete outcomes: counts of a three-way contingency table
design = simulate.DiscreteDesign(
    (np.array([[0.6, 0.1], [0.3, 0.2], [0.1, 0.7]]),) * 3, [0.4, 0.6])
counts = design.draw_counts(20000, seed=0)
est = fit_discrete_mixture(counts, 2)
print("estimated proportions:", np.round(est.pi, 3))
print("estimated first emission matrix:\n", np.round(est.p[0], 3))

# continuous outcomes: a two-component Gaussian mixture in three variables
y, labels = simulate.draw_mixture(simulate.GaussianMixture(), 2000, seed=1)
# components far from the origin need more Hermite terms than the default cap
est = fit_continuous_mixture(y, 2, kappa_max=20)
print("estimated proportions:", np.round(est.pi, 3))
print("component means of variable 1:", np.round(est.keys, 2))
grid = np.linspace(-1, 4, 6)
for j in range(2):
    print(f"component {j + 1} density of variable 1:", np.round(est.densities[0][j](grid), 3))

# the classification weights reweight the sample towards each component
w = est.weights[0]
print("mean weight of the true members of component 2:", np.round(w[labels == 1].mean(axis=0), 2))
