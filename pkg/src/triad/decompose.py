"""Recovery of q-adic decompositions by whitening and joint diagonalization.

For a three-way array with slices ``A_k = X_1 Pi diag_k(X_3) X_2'`` and
two-way submodel ``A_0 = X_1 Pi X_2'``, whitening with the SVD of ``A_0``
turns the slices into ``W_1 A_k W_2' = Q D_k Q^{-1}`` with
``D_k = diag_k(X_3)``.  Joint diagonalization therefore returns the third
factor row by row.  Repeating this for every direction (after unfolding when
``q > 3``), aligning the component labels across directions and regressing a
one-dimensional submodel on the factors recovers the whole decomposition.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import jointdiag
from .multiway import (
    QadDecomposition,
    balanced_partition,
    compose,
    khatri_rao_columns,
    marginal,
    unfold_to_three,
)

__all__ = [
    "DeficientRankError",
    "AlignmentError",
    "WhiteningPair",
    "DirectionFit",
    "DecomposeReport",
    "whiten",
    "eigen_stack",
    "fit_direction",
    "recover_third_factor",
    "recover_all_factors",
    "recover_weights",
    "normalize_columns",
    "align_components",
    "decomposition_provider",
    "table_provider",
]


class DeficientRankError(np.linalg.LinAlgError):
    """The two-way submodel does not have rank ``r``.

    This refutes the full-column-rank condition needed for identification.
    """


class AlignmentError(RuntimeError):
    """No relabeling reproduces the array within the requested bound."""


@dataclass
class WhiteningPair:
    W1: np.ndarray
    W2: np.ndarray
    singular_values: np.ndarray
    rank_gap: float


@dataclass
class DirectionFit:
    """Result of recovering the factor of one pivot axis.

    ``factor`` has one row per level of the pivot axis and is expressed in
    the column order of ``jd.Q``.  After cross-direction alignment the
    columns of ``factor`` and ``jd.Q`` are permuted together.
    """

    pivot: int
    partition: tuple
    whitening: WhiteningPair
    jd: jointdiag.JointDiagResult
    factor: np.ndarray

    def permuted(self, perm) -> "DirectionFit":
        perm = np.asarray(perm)
        jd = jointdiag.JointDiagResult(
            self.jd.Q[:, perm], self.jd.D[:, perm], self.jd.criterion, self.jd.sweeps,
            self.jd.converged, list(self.jd.trace), self.jd.degenerate,
        )
        return DirectionFit(self.pivot, self.partition, self.whitening, jd, self.factor[:, perm])


@dataclass
class DecomposeReport:
    decomposition: QadDecomposition
    raw_factors: list
    raw_weights: np.ndarray
    criterion: float
    residual: float
    rank_gaps: list
    directions: list
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "decomposition": self.decomposition.to_dict(),
            "weights_sum": float(self.decomposition.weights.sum()),
            "raw_factors": [f.tolist() for f in self.raw_factors],
            "raw_weights": self.raw_weights.tolist(),
            "criterion": float(self.criterion),
            "residual": float(self.residual),
            "rank_gaps": [float(g) for g in self.rank_gaps],
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def whiten(A0: np.ndarray, r: int, *, rank_tol: float = 1e-10) -> WhiteningPair:
    """Whitening matrices from the top ``r`` singular triplets of ``A0``.

    ``W1 = S^{-1/2} U'`` and ``W2 = S^{-1/2} V'`` so that
    ``W1 @ A0 @ W2.T`` is the identity.

    Raises
    ------
    DeficientRankError
        If ``sigma_r / sigma_1 < rank_tol``.
    """
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    if min(A0.shape) < r:
        raise DeficientRankError(f"a {A0.shape[0]}x{A0.shape[1]} submodel cannot have rank {r}")
    if not np.all(np.isfinite(A0)):
        raise ValueError("submodel must be finite")
    U, s, Vt = np.linalg.svd(A0, full_matrices=False)
    if s[0] == 0 or s[r - 1] / s[0] < rank_tol:
        raise DeficientRankError(
            f"deficient rank: sigma_{r}/sigma_1 = {s[r - 1] / s[0] if s[0] else 0.0:.3g} "
            f"is below {rank_tol:g}"
        )
    gap = s[r - 1] - (s[r] if s.size > r else 0.0)
    root = 1.0 / np.sqrt(s[:r])
    W1 = root[:, None] * U[:, :r].T
    W2 = root[:, None] * Vt[:r]
    return WhiteningPair(W1, W2, s[:r].copy(), float(gap))


def eigen_stack(x3: np.ndarray, A0: np.ndarray, r: int, *, rank_tol: float = 1e-10):
    """Whitened slice stack ``{W1 x3[:, :, k] W2'}`` of a three-way array.

    The third axis of ``x3`` is the one whose factor is sought; ``A0`` is the
    submodel over the first two axes.

    Returns
    -------
    problem : JointDiagProblem
    whitening : WhiteningPair
    """
    x3 = np.asarray(x3, dtype=float)
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    if x3.ndim != 3 or x3.shape[:2] != A0.shape:
        raise ValueError(f"slices of shape {x3.shape[:2]} do not conform with submodel {A0.shape}")
    w = whiten(A0, r, rank_tol=rank_tol)
    C = np.einsum("ai,ijk,bj->kab", w.W1, x3, w.W2, optimize=True)
    return jointdiag.JointDiagProblem(C), w


def _solve_stack(problem, r, jd_options):
    if r == 1:
        D = problem.matrices[:, :, 0].copy()
        return jointdiag.JointDiagResult(np.eye(1), D, 0.0, 0, True, [0.0])
    opts = {"strict": False}
    opts.update(jd_options or {})
    return jointdiag.solve(problem, **opts)


def fit_direction(
    x: np.ndarray,
    submodel: Callable,
    r: int,
    pivot: int,
    partition=None,
    *,
    rank_tol: float = 1e-10,
    jd_options: dict | None = None,
) -> DirectionFit:
    """Recover the factor of axis ``pivot`` of a q-way array (``q >= 3``).

    ``submodel(keep)`` must return the submodel over the sorted axes in
    ``keep`` as an array with one axis per kept variable.
    """
    x = np.asarray(x, dtype=float)
    if partition is None:
        partition = balanced_partition(x.shape, pivot)
    g1, g2 = (tuple(sorted(g)) for g in partition)
    x3 = np.transpose(unfold_to_three(x, pivot, (g1, g2)), (0, 2, 1))
    keep = tuple(sorted(g1 + g2))
    sub = np.asarray(submodel(keep), dtype=float)
    order = [keep.index(a) for a in g1 + g2]
    A0 = np.transpose(sub, order).reshape(x3.shape[0], x3.shape[1])
    problem, w = eigen_stack(x3, A0, r, rank_tol=rank_tol)
    jd = _solve_stack(problem, r, jd_options)
    return DirectionFit(pivot, (g1, g2), w, jd, jd.D.copy())


def recover_third_factor(
    x3: np.ndarray, A0: np.ndarray, r: int, *, rank_tol: float = 1e-10, jd_options=None
) -> np.ndarray:
    """Factor of the third axis of a tri-ad, up to a column permutation.

    Row ``k`` is the diagonal of ``Q^{-1} (W1 A_k W2') Q``.
    """
    problem, _ = eigen_stack(x3, A0, r, rank_tol=rank_tol)
    return _solve_stack(problem, r, jd_options).D.copy()


def recover_weights(Xi: np.ndarray, one_dim_submodel: np.ndarray) -> np.ndarray:
    """Least-squares weights ``(Xi'Xi)^{-1} Xi' x``."""
    Xi = np.atleast_2d(np.asarray(Xi, dtype=float))
    y = np.asarray(one_dim_submodel, dtype=float).ravel()
    if Xi.shape[0] != y.shape[0]:
        raise ValueError("factor and submodel lengths differ")
    if np.linalg.matrix_rank(Xi) < Xi.shape[1]:
        raise np.linalg.LinAlgError("factor matrix is rank deficient; weights are not identified")
    coef, *_ = np.linalg.lstsq(Xi, y, rcond=None)
    return coef


def normalize_columns(X: np.ndarray) -> tuple:
    """Unit-norm columns whose largest-magnitude entry is positive.

    Returns the normalized matrix and the scale removed from each column.
    """
    X = np.asarray(X, dtype=float)
    norms = np.linalg.norm(X, axis=0)
    idx = np.argmax(np.abs(X), axis=0)
    signs = np.sign(X[idx, np.arange(X.shape[1])])
    signs[signs == 0] = 1.0
    scale = norms * signs
    scale[scale == 0] = 1.0
    return X / scale, scale


def align_components(X_ref: np.ndarray, X: np.ndarray, pair_submodel: np.ndarray) -> np.ndarray:
    """Permutation of the columns of ``X`` matching the labels of ``X_ref``.

    In population ``pinv(X_ref) @ pair_submodel @ pinv(X).T`` is a permuted
    diagonal matrix holding the weights; the permutation is the assignment
    maximizing the absolute entries it selects.
    """
    R = np.linalg.pinv(X_ref) @ np.atleast_2d(pair_submodel) @ np.linalg.pinv(X).T
    rows, cols = linear_sum_assignment(-np.abs(R))
    return cols[np.argsort(rows)]


def decomposition_provider(dec: QadDecomposition) -> Callable:
    """Submodel provider backed by a known decomposition."""
    from .multiway import submodel

    return lambda keep: submodel(dec, keep)


def table_provider(table: np.ndarray) -> Callable:
    """Submodel provider for contingency tables: marginal tables."""
    table = np.asarray(table, dtype=float)
    return lambda keep: marginal(table, keep)


def recover_all_factors(
    x: np.ndarray,
    submodel: Callable | None,
    r: int,
    *,
    partitions: dict | None = None,
    rank_tol: float = 1e-10,
    jd_options: dict | None = None,
    residual_bound: float | None = None,
    normalize: bool = True,
) -> DecomposeReport:
    """Recover every factor and the weights of a q-ad.

    Parameters
    ----------
    x : ndarray
        The q-way array, ``q >= 3``.
    submodel : callable
        ``submodel(keep)`` returns the submodel over the sorted axes in
        ``keep``.  Raw arrays carry no submodels; pass
        :func:`table_provider` explicitly when ``x`` is a contingency table.
    r : int
        Number of components.
    partitions : dict, optional
        Maps a pivot axis to its ``(group1, group2)`` unfolding; balanced
        splits are used otherwise.
    residual_bound : float, optional
        Raise :class:`AlignmentError` if the relative reconstruction residual
        exceeds this.
    normalize : bool
        Put factor columns on unit norm with a positive largest entry and
        refit the weights against the full array.

    Notes
    -----
    ``raw_factors`` carry the scale implied by the submodels (probability
    vectors for contingency tables) and ``raw_weights`` come from the
    one-dimensional submodels.  The column order is that of the first axis.
    """
    x = np.asarray(x, dtype=float)
    q = x.ndim
    if q < 3:
        raise ValueError("recovery needs at least three axes")
    if submodel is None:
        raise ValueError(
            "submodels are required; for contingency tables pass table_provider(x)"
        )
    partitions = partitions or {}
    notes = []
    fits = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", jointdiag.DegeneracyWarning)
        for i in range(q):
            fits.append(fit_direction(x, submodel, r, i, partitions.get(i),
                                      rank_tol=rank_tol, jd_options=jd_options))
    notes.extend(str(w.message) for w in caught)
    for f in fits:
        if not f.jd.converged:
            notes.append(f"joint diagonalization for axis {f.pivot} did not converge")

    aligned = [fits[0]]
    for i in range(1, q):
        perm = align_components(fits[0].factor, fits[i].factor, submodel((0, i)))
        aligned.append(fits[i].permuted(perm))
    raw = [f.factor for f in aligned]

    one_dim = np.concatenate([np.asarray(submodel((i,)), dtype=float).ravel() for i in range(q)])
    raw_weights = recover_weights(np.vstack(raw), one_dim)

    if normalize:
        factors = []
        for X in raw:
            Xn, _ = normalize_columns(X)
            factors.append(Xn)
        design = khatri_rao_columns(factors)
        weights, *_ = np.linalg.lstsq(design, x.ravel(), rcond=None)
    else:
        factors, weights = raw, raw_weights
    weights = np.where(weights == 0, np.finfo(float).tiny, weights)
    dec = QadDecomposition(tuple(factors), weights)
    norm = np.linalg.norm(x)
    residual = float(np.linalg.norm(x - compose(dec)) / (norm if norm > 0 else 1.0))
    if residual_bound is not None and residual > residual_bound:
        raise AlignmentError(
            f"relative reconstruction residual {residual:.3g} exceeds {residual_bound:.3g}"
        )
    return DecomposeReport(
        decomposition=dec,
        raw_factors=raw,
        raw_weights=raw_weights,
        criterion=float(max(f.jd.criterion for f in aligned)),
        residual=residual,
        rank_gaps=[f.whitening.rank_gap for f in aligned],
        directions=aligned,
        warnings=notes,
    )
