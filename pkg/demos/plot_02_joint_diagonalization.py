"""
Joint diagonalization of a matrix stack
=======================================

Given matrices ``C_k = Q D_k Q^{-1}`` that share eigenvectors, the solver
finds ``Q`` up to column order and scale.  With noise it minimizes the
summed squared off-diagonal entries of ``Q^{-1} C_k Q``.
"""

import numpy as np

from triad.jointdiag import align_to_reference, eigenvector_map_G, off_criterion, solve, vec

rng = np.random.default_rng(1)
r, kappa = 3, 5
Q0 = rng.standard_normal((r, r)) + 2 * np.eye(r)
D = rng.standard_normal((kappa, r))
C = np.stack([Q0 @ np.diag(d) @ np.linalg.inv(Q0) for d in D])

res = solve(C)
print(f"exact stack: criterion {res.criterion:.2e} after {res.sweeps} sweeps")

# the answer is a solution class: any column permutation and rescaling works
Qa, perm = align_to_reference(res.Q, Q0)
print("aligned to the truth, max error:", np.max(np.abs(Qa - Q0)))
print("criterion of a rescaled permutation:", off_criterion(res.Q[:, ::-1] * 3.0, C))

# a small perturbation moves Q by roughly G times the perturbation
eps = 1e-6
E = rng.standard_normal(C.shape)
Qp, _ = align_to_reference(solve(C + eps * E, strict=False).Q, Q0)
G, _ = eigenvector_map_G(Q0, D)
predicted = G @ (eps * np.concatenate([vec(m) for m in E]))
print("first-order prediction error:", np.linalg.norm(vec(Qp - Q0) - predicted) / np.linalg.norm(predicted))

# with noise the criterion no longer reaches zero
noisy = solve(C + 0.01 * rng.standard_normal(C.shape), strict=False)
print(f"noisy stack: criterion {noisy.criterion:.2e}, converged {noisy.converged}")
