"""
Multiway arrays and their unfoldings
====================================

A q-ad is a weighted sum of rank-one outer products.  This script builds
one, merges its axes into a three-way array and checks that the merged
array is itself a tri-ad with Khatri-Rao factors.
"""

import numpy as np

from triad.multiway import (
    QadDecomposition,
    balanced_partition,
    compose,
    khatri_rao_columns,
    slice_matrix,
    submodel,
    unfold_to_three,
)

rng = np.random.default_rng(0)

# four variables with 3, 4, 2 and 5 levels and two components
factors = tuple(rng.uniform(0.1, 1.0, (k, 2)) for k in (3, 4, 2, 5))
dec = QadDecomposition(factors, np.array([0.4, 0.6]))
x = compose(dec)
print("q-ad shape:", x.shape)

# a submodel keeps a subset of the variables and the same weights
print("two-way submodel over axes 0 and 2:\n", submodel(dec, [0, 2]))

# pivot on axis 1; the other axes split into groups of similar size
g1, g2 = balanced_partition(x.shape, 1)
x3 = unfold_to_three(x, 1)
print("partition:", g1, g2, "-> unfolded shape", x3.shape)

# the unfolding is the tri-ad whose outer factors are Khatri-Rao products
tri = QadDecomposition(
    (khatri_rao_columns([factors[a] for a in g1]), factors[1], khatri_rao_columns([factors[a] for a in g2])),
    dec.weights,
)
print("max deviation from the Khatri-Rao tri-ad:", np.max(np.abs(compose(tri) - x3)))

# slices along the last axis feed the joint diagonalizer
print("first slice:\n", slice_matrix(x3, 0))
