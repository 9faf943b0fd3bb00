"""
Hidden Markov models from three consecutive outcomes
====================================================

Three consecutive observations of a stationary chain form a tri-ad.
The middle outcome is the pivot; its factor is the emission law and the
flanking factors give the transition matrix.
"""

import numpy as np

from triad import simulate
from triad.models import fit_hmm

design = simulate.DEFAULT_HMM
print("true transition matrix:\n", design.K)

# continuous skew-normal emissions
y, z = simulate.draw_hmm(design, 5000, seed=0)
est = fit_hmm(y, 2)
print("estimated transition matrix:\n", np.round(est.K, 3))
print("stationary distribution:", np.round(est.pi, 3))
for j, e in enumerate(est.emissions):
    pts = simulate.quantiles(design, j, [0.25, 0.5, 0.75])
    print(f"state {j + 1} emission at its quartiles:", np.round(e(pts), 3),
          "truth", np.round(design.pdf(j, pts), 3))

# discretized outcomes are estimated from the count table directly
edges = np.linspace(-4, 4, 9)
yd, _ = simulate.draw_hmm(design, 5000, seed=0, discretize=edges)
est = fit_hmm(yd, 2, kappa=10)
print("transition matrix from binned data:\n", np.round(est.K, 3))
