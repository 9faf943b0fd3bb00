"""Dense multiway arrays and q-adic (canonical polyadic) decompositions.

Storage order is C order (row-major, last axis varies fastest) everywhere.
The Khatri-Rao product of vectors ``a, b, ...`` uses the same convention, so
``khatri_rao([a, b])[i * len(b) + j] == a[i] * b[j]``; merging axes of an
array with ``reshape`` therefore matches the Khatri-Rao product of the
corresponding factor columns.

All indices are 0-based in the Python API.  The command-line interface and
JSON option files use 1-based axis numbers and translate at the boundary.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DimensionError",
    "QadDecomposition",
    "compose",
    "submodel",
    "marginal",
    "khatri_rao",
    "khatri_rao_columns",
    "balanced_partition",
    "unfold_to_three",
    "slice_matrix",
    "array_to_json",
    "array_from_json",
    "matrix_to_csv",
    "matrix_from_csv",
]


class DimensionError(ValueError):
    """Raised when array or factor shapes are inconsistent."""


@dataclass(frozen=True)
class QadDecomposition:
    """Weighted sum of ``r`` rank-one outer products.

    Parameters
    ----------
    factors : sequence of ndarray
        ``q`` matrices; factor ``i`` has shape ``(dims[i], r)``.
    weights : ndarray
        The ``r`` nonzero weights.
    """

    factors: tuple
    weights: np.ndarray

    def __post_init__(self):
        factors = tuple(np.atleast_2d(np.asarray(f, dtype=float)) for f in self.factors)
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "weights", weights)
        if len(factors) == 0:
            raise DimensionError("a decomposition needs at least one factor")
        r = weights.shape[0]
        for i, f in enumerate(factors):
            if f.ndim != 2 or f.shape[1] != r:
                raise DimensionError(
                    f"factor {i} has shape {f.shape}, expected (kappa_{i}, {r})"
                )
        if np.any(weights == 0):
            raise ValueError("q-ad weights must be nonzero")

    @property
    def r(self) -> int:
        return self.weights.shape[0]

    @property
    def q(self) -> int:
        return len(self.factors)

    @property
    def dims(self) -> tuple:
        return tuple(f.shape[0] for f in self.factors)

    def permuted(self, perm: Sequence[int]) -> "QadDecomposition":
        """Return the decomposition with components reordered by ``perm``."""
        perm = np.asarray(perm)
        return QadDecomposition(tuple(f[:, perm] for f in self.factors), self.weights[perm])

    def to_dict(self) -> dict:
        return {
            "factors": [f.tolist() for f in self.factors],
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QadDecomposition":
        return cls(tuple(np.asarray(f, dtype=float) for f in d["factors"]), np.asarray(d["weights"]))


def _einsum_letters(q: int) -> str:
    if q > 20:
        raise DimensionError("too many axes")
    return "abcdefghijklmnopqrst"[:q]


def compose(dec: QadDecomposition) -> np.ndarray:
    """Evaluate ``sum_j weights[j] * outer(x_1j, ..., x_qj)``."""
    letters = _einsum_letters(dec.q)
    spec = ",".join(f"{c}z" for c in letters) + ",z->" + letters
    return np.einsum(spec, *dec.factors, dec.weights, optimize=True)


def _check_keep(keep: Iterable[int], q: int) -> list:
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("submodel index set is empty")
    if keep[0] < 0 or keep[-1] >= q:
        raise IndexError(f"submodel indices {keep} out of range for q={q}")
    return keep


def submodel(dec: QadDecomposition, keep: Iterable[int]) -> np.ndarray:
    """Lower-dimensional submodel over the variables in ``keep``.

    Returns ``sum_j weights[j] * outer(x_ij for i in sorted(keep))``.  A
    single index gives the vector ``X_i @ weights``.
    """
    keep = _check_keep(keep, dec.q)
    return compose(QadDecomposition(tuple(dec.factors[i] for i in keep), dec.weights))


def marginal(table: np.ndarray, keep: Iterable[int]) -> np.ndarray:
    """Marginal of a contingency table over the axes in ``keep``.

    For probability tables this coincides with :func:`submodel` of the
    underlying mixture decomposition.
    """
    table = np.asarray(table, dtype=float)
    keep = _check_keep(keep, table.ndim)
    drop = tuple(a for a in range(table.ndim) if a not in keep)
    return table.sum(axis=drop) if drop else table.copy()


def khatri_rao(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Vector of all interaction products, first vector varying slowest."""
    if len(vectors) == 0:
        raise ValueError("khatri_rao needs at least one vector")
    out = np.asarray(vectors[0], dtype=float).ravel()
    for v in vectors[1:]:
        out = np.multiply.outer(out, np.asarray(v, dtype=float).ravel()).ravel()
    return out


def khatri_rao_columns(matrices: Sequence[np.ndarray]) -> np.ndarray:
    """Column-wise Khatri-Rao product of matrices sharing a column count."""
    if len(matrices) == 0:
        raise ValueError("khatri_rao_columns needs at least one matrix")
    out = np.asarray(matrices[0], dtype=float)
    for m in matrices[1:]:
        m = np.asarray(m, dtype=float)
        if m.shape[1] != out.shape[1]:
            raise DimensionError("column counts differ")
        out = (out[:, None, :] * m[None, :, :]).reshape(-1, out.shape[1])
    return out


def balanced_partition(dims: Sequence[int], pivot: int) -> tuple:
    """Split the non-pivot axes in two groups with near-equal dimension products.

    Ties are broken towards the lexicographically smallest first group.
    """
    q = len(dims)
    rest = [a for a in range(q) if a != pivot]
    if len(rest) < 2:
        raise ValueError("need at least three axes to unfold")
    best = None
    for size in range(1, len(rest)):
        for group in itertools.combinations(rest, size):
            other = tuple(a for a in rest if a not in group)
            p1 = np.prod([dims[a] for a in group])
            p2 = np.prod([dims[a] for a in other])
            key = (abs(np.log(p1) - np.log(p2)), -min(p1, p2), group)
            if best is None or key < best[0]:
                best = (key, (tuple(group), other))
    return best[1]


def _check_partition(q: int, pivot: int, partition) -> tuple:
    if q < 3:
        raise ValueError("unfolding to three axes needs q >= 3")
    if not 0 <= pivot < q:
        raise IndexError(f"pivot {pivot} out of range for q={q}")
    g1, g2 = (tuple(sorted(int(a) for a in g)) for g in partition)
    if not g1 or not g2:
        raise ValueError("both partition groups must be nonempty")
    if sorted(g1 + g2) != [a for a in range(q) if a != pivot]:
        raise ValueError(f"{partition} does not partition the axes other than {pivot}")
    return g1, g2


def unfold_to_three(x: np.ndarray, pivot: int, partition=None) -> np.ndarray:
    """Merge the axes of ``x`` into a three-way array ``(group1, pivot, group2)``.

    For a q-ad ``x`` the result is the tri-ad with factors
    ``khatri_rao_columns(X_group1)``, ``X_pivot`` and
    ``khatri_rao_columns(X_group2)``.  Axes inside each group keep their
    ascending order.
    """
    x = np.asarray(x)
    if partition is None:
        partition = balanced_partition(x.shape, pivot)
    g1, g2 = _check_partition(x.ndim, pivot, partition)
    moved = np.transpose(x, g1 + (pivot,) + g2)
    n1 = int(np.prod([x.shape[a] for a in g1]))
    n2 = int(np.prod([x.shape[a] for a in g2]))
    return moved.reshape(n1, x.shape[pivot], n2)


def slice_matrix(x: np.ndarray, k: int) -> np.ndarray:
    """The matrix ``x[:, :, k]`` of a three-way array."""
    x = np.asarray(x)
    if x.ndim != 3:
        raise DimensionError("slice_matrix expects a three-way array")
    if not 0 <= k < x.shape[2]:
        raise IndexError(f"slice {k} out of range for {x.shape[2]} slices")
    return x[:, :, k].copy()


def array_to_json(x: np.ndarray) -> str:
    x = np.asarray(x, dtype=float)
    return json.dumps({"dims": list(x.shape), "values": x.ravel(order="C").tolist()})


def array_from_json(text: str) -> np.ndarray:
    d = json.loads(text) if isinstance(text, str) else text
    dims = [int(v) for v in d["dims"]]
    values = np.asarray(d["values"], dtype=float)
    if len(dims) < 1 or any(v < 1 for v in dims):
        raise DimensionError(f"invalid dims {dims}")
    if values.size != int(np.prod(dims)):
        raise DimensionError(f"{values.size} values do not fill dims {dims}")
    return values.reshape(dims)


def matrix_to_csv(m: np.ndarray) -> str:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in m:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def matrix_from_csv(text: str) -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    return np.asarray(rows, dtype=float)
