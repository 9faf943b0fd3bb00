"""
Recovering every factor of a q-ad
=================================

Each variable in turn is the pivot of a three-way unfolding.  Whitening
with the two-way submodel turns the slices into a jointly diagonalizable
stack; its eigenvalues give the pivot's factor.
"""

import numpy as np

from triad.decompose import DeficientRankError, decomposition_provider, recover_all_factors, table_provider
from triad.multiway import QadDecomposition, compose

rng = np.random.default_rng(2)
p = tuple(rng.dirichlet(np.ones(k), 3).T for k in (4, 5, 6))
pi = np.array([0.2, 0.3, 0.5])
table = compose(QadDecomposition(p, pi))

# a probability table carries its own submodels as marginals
report = recover_all_factors(table, table_provider(table), 3, normalize=False)
print(f"residual {report.residual:.1e}, rank gaps {np.round(report.rank_gaps, 3)}")
print("weights:", np.round(report.decomposition.weights, 6))
print("first factor:\n", np.round(report.decomposition.factors[0], 6))

# asking for more components than the data support is refused
try:
    recover_all_factors(table, table_provider(table), 4)
except DeficientRankError as exc:
    print("r = 4:", exc)

# a general q-ad needs its submodels supplied alongside
dec = QadDecomposition(tuple(rng.standard_normal((k, 2)) for k in (3, 3, 4, 2)), np.array([1.0, 2.0]))
report = recover_all_factors(compose(dec), decomposition_provider(dec), 2)
print(f"four-way q-ad with signed factors: residual {report.residual:.1e}")
