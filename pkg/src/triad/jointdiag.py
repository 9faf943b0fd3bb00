"""Nonorthogonal joint approximate diagonalization.

Given matrices ``C_1, ..., C_kappa`` find ``Q`` minimizing

    sum_k || off(Q^{-1} C_k Q) ||_F^2

over matrices with ``det Q = 1`` and columns of equal norm.  The solver runs
Jacobi-like sweeps over index pairs ``(p, s)``.  Each pair update is the
elementary transform ``T = I + a e_p e_s' + b e_s e_p'`` (an upper and a lower
shear) whose parameters solve the linearized pair-restricted least-squares
problem in closed form, followed by a backtracking line search on the exact
criterion so the criterion never increases.  Columns are kept at unit norm
throughout; the final ``Q`` is rescaled to ``det Q = 1``.

The module also provides the first-order perturbation maps of the
eigenvector matrix (:func:`eigenvector_map_G`) and of the eigenvalues
(:func:`eigenvalue_map_H`).
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = [
    "SingularMatrixError",
    "NonConvergenceError",
    "DegeneracyWarning",
    "JointDiagProblem",
    "JointDiagResult",
    "off",
    "off_criterion",
    "solve",
    "selection_matrix",
    "kronecker_difference",
    "eigenvalue_map_H",
    "eigenvector_map_G",
    "align_to_reference",
    "vec",
]

MAX_CONDITION = 1e12


class SingularMatrixError(np.linalg.LinAlgError):
    """A diagonalizer candidate cannot be inverted at working precision."""


class NonConvergenceError(RuntimeError):
    """The solver hit its sweep limit; ``result`` holds the best iterate."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


class DegeneracyWarning(UserWarning):
    """Two eigenvalue columns (nearly) coincide, so Q is weakly identified."""


def vec(m: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(m).reshape(-1, order="F")


def off(m: np.ndarray) -> np.ndarray:
    """``m - diag(m)`` for a matrix or a stack of matrices."""
    m = np.array(m, dtype=float, copy=True)
    idx = np.arange(m.shape[-1])
    m[..., idx, idx] = 0.0
    return m


@dataclass
class JointDiagProblem:
    """A stack of ``kappa`` square ``r x r`` matrices."""

    matrices: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrices, dtype=float)
        if m.ndim == 2 and m.shape[0] == m.shape[1]:
            m = m[None]
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise ValueError(f"expected a stack of square matrices, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("matrices must be finite")
        self.matrices = m

    @property
    def r(self) -> int:
        return self.matrices.shape[1]

    @property
    def kappa(self) -> int:
        return self.matrices.shape[0]

    @property
    def concatenated(self) -> np.ndarray:
        """The ``r x (r kappa)`` matrix ``(C_1, ..., C_kappa)``."""
        return np.concatenate(list(self.matrices), axis=1)

    def to_dict(self) -> dict:
        return {"matrices": self.matrices.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "JointDiagProblem":
        return cls(np.asarray(d["matrices"], dtype=float))


@dataclass
class JointDiagResult:
    Q: np.ndarray
    D: np.ndarray  # (kappa, r) diagonals of Q^{-1} C_k Q
    criterion: float
    sweeps: int
    converged: bool
    trace: list = field(default_factory=list)
    degenerate: bool = False

    @property
    def D_matrices(self) -> np.ndarray:
        return np.stack([np.diag(d) for d in self.D])

    def to_dict(self) -> dict:
        return {
            "Q": self.Q.tolist(),
            "D": [np.diag(d).tolist() for d in self.D],
            "criterion": float(self.criterion),
            "sweeps": int(self.sweeps),
            "converged": bool(self.converged),
            "degenerate": bool(self.degenerate),
            "trace": [float(t) for t in self.trace],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _inverse(Q: np.ndarray) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    if not np.all(np.isfinite(Q)):
        raise SingularMatrixError("Q has non-finite entries")
    cond = np.linalg.cond(Q)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularMatrixError(f"Q is numerically singular (condition number {cond:.3g})")
    return np.linalg.inv(Q)


def _as_stack(problem) -> np.ndarray:
    if isinstance(problem, JointDiagProblem):
        return problem.matrices
    return JointDiagProblem(problem).matrices


def off_criterion(Q: np.ndarray, problem) -> float:
    """``sum_k ||off(Q^{-1} C_k Q)||_F^2``."""
    C = _as_stack(problem)
    Qinv = _inverse(Q)
    M = Qinv @ C @ Q
    return float(np.sum(off(M) ** 2))


def _crit(M: np.ndarray) -> float:
    return float(np.sum(off(M) ** 2))


def _normalize_columns(Q, M):
    """Scale Q's columns to unit norm and apply the induced similarity to M."""
    norms = np.linalg.norm(Q, axis=0)
    Q = Q / norms
    M = M * norms[None, :, None] / norms[None, None, :]
    return Q, M


def _sweep(Q, M, crit, ridge):
    r = Q.shape[0]
    for p in range(r - 1):
        for s in range(p + 1, r):
            dp = M[:, p, p]
            ds = M[:, s, s]
            gap = dp - ds
            denom = float(gap @ gap)
            if denom <= ridge:
                continue
            a = -float(M[:, p, s] @ gap) / denom
            b = float(M[:, s, p] @ gap) / denom
            if a == 0.0 and b == 0.0:
                continue
            step = 1.0
            for _ in range(30):
                ta, tb = step * a, step * b
                det = 1.0 - ta * tb
                if abs(det) > 1e-8:
                    T = np.eye(r)
                    T[p, s] = ta
                    T[s, p] = tb
                    Tinv = np.eye(r)
                    Tinv[p, p] = Tinv[s, s] = 1.0 / det
                    Tinv[p, s] = -ta / det
                    Tinv[s, p] = -tb / det
                    Qn, Mn = _normalize_columns(Q @ T, Tinv @ M @ T)
                    cn = _crit(Mn)
                    if cn < crit:
                        Q, M, crit = Qn, Mn, cn
                        break
                step *= 0.5
    return Q, M, crit


def _descend(C, Q0, tol, max_sweeps):
    Q = np.asarray(Q0, dtype=float)
    Qinv = _inverse(Q)
    Q, M = _normalize_columns(Q, Qinv @ C @ Q)
    crit = _crit(M)
    scale = float(np.sum(C * C)) or 1.0
    ridge = 1e-300
    trace = [crit]
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        if crit <= 1e-32 * scale:
            converged = True
            sweeps -= 1
            break
        new_Q, new_M, new_crit = _sweep(Q, M, crit, ridge)
        decrease = crit - new_crit
        Q, M, crit = new_Q, new_M, new_crit
        trace.append(crit)
        if decrease <= tol * crit or crit <= 1e-32 * scale:
            converged = True
            break
    return Q, crit, sweeps, converged, trace


def _eigen_start(C, rng):
    w = rng.standard_normal(C.shape[0])
    evals, evecs = np.linalg.eig(np.tensordot(w, C, axes=1))
    V = np.real(evecs)
    if np.linalg.cond(V) > MAX_CONDITION:
        return None
    return V


def _finalize(Q, C, max_norm):
    r = Q.shape[0]
    Q = Q / np.linalg.norm(Q, axis=0)
    d = np.linalg.det(Q)
    if d == 0 or not np.isfinite(d):
        raise SingularMatrixError("final diagonalizer is singular")
    if d < 0:
        Q[:, -1] = -Q[:, -1]
        d = -d
    c = d ** (-1.0 / r)
    if c > max_norm:
        raise SingularMatrixError(
            f"column norm {c:.3g} of the diagonalizer exceeds the bound {max_norm:.3g}"
        )
    Q = c * Q
    M = _inverse(Q) @ C @ Q
    return Q, np.diagonal(M, axis1=1, axis2=2).copy(), _crit(M)


def eigenvalue_collision(D: np.ndarray, scale: float | None = None, rel: float = 1e-6) -> bool:
    """True when two columns of the ``kappa x r`` eigenvalue matrix nearly coincide."""
    D = np.asarray(D)
    r = D.shape[1]
    if r < 2:
        return False
    if scale is None:
        scale = max(float(np.max(np.abs(D))), 1e-300)
    dmin = min(np.linalg.norm(D[:, p] - D[:, s]) for p in range(r) for s in range(p + 1, r))
    return dmin < rel * scale


def solve(
    problem,
    *,
    tol: float = 1e-12,
    max_sweeps: int = 200,
    restarts: int = 5,
    seed: int | None = 0,
    init: np.ndarray | None = None,
    max_norm: float = 1e6,
    strict: bool = True,
) -> JointDiagResult:
    """Joint approximate diagonalizer of a stack of square matrices.

    The search starts from ``init`` (identity by default) and from
    ``restarts`` seeded random starts, each the eigenvector matrix of a
    random linear combination of the inputs; the start reaching the smallest
    criterion wins.  Candidates that become singular are discarded.

    Raises
    ------
    NonConvergenceError
        If ``strict`` and the best candidate used up ``max_sweeps``.
    SingularMatrixError
        If every candidate became singular.
    """
    C = _as_stack(problem)
    r = C.shape[1]
    rng = np.random.default_rng(seed)
    starts = [np.eye(r) if init is None else np.asarray(init, dtype=float)]
    for _ in range(restarts):
        V = _eigen_start(C, rng)
        if V is not None:
            starts.append(V)

    best = None
    for start in starts:
        try:
            Q, crit, sweeps, converged, trace = _descend(C, start, tol, max_sweeps)
            Q, D, crit = _finalize(Q, C, max_norm)
        except SingularMatrixError:
            continue
        if best is None or crit < best.criterion:
            best = JointDiagResult(Q, D, crit, sweeps, converged, trace)
    if best is None:
        raise SingularMatrixError("every starting point led to a singular diagonalizer")
    if eigenvalue_collision(best.D):
        best.degenerate = True
        warnings.warn("eigenvalue columns nearly coincide; Q is weakly identified",
                      DegeneracyWarning, stacklevel=2)
    if strict and not best.converged:
        raise NonConvergenceError(f"no convergence within {max_sweeps} sweeps", best)
    return best


def selection_matrix(r: int) -> np.ndarray:
    """``diag(vec I_r)``; maps ``vec Q`` to ``vec(diag Q)``."""
    return np.diag(vec(np.eye(r)))


def kronecker_difference(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``A (x) I - I (x) B`` for square ``A`` and ``B``."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    return np.kron(A, np.eye(B.shape[0])) - np.kron(np.eye(A.shape[0]), B)


def _perturbation_basis(Q0, kappa):
    Q0 = np.atleast_2d(np.asarray(Q0, dtype=float))
    Q0inv = _inverse(Q0)
    return np.kron(np.eye(kappa), np.kron(Q0.T, Q0inv))


def eigenvalue_map_H(Q0: np.ndarray, kappa: int) -> np.ndarray:
    """First-order map from ``vec(C_hat - C)`` to ``vec(D_hat - D)``.

    ``C`` and ``D`` are the ``r x (r kappa)`` concatenations of the inputs and
    of the diagonal eigenvalue matrices.
    """
    Q0 = np.atleast_2d(np.asarray(Q0, dtype=float))
    S = selection_matrix(Q0.shape[0])
    return np.kron(np.eye(kappa), S) @ _perturbation_basis(Q0, kappa)


def eigenvector_map_G(Q0: np.ndarray, D: np.ndarray, *, zero_tol: float = 1e-10):
    """First-order map from ``vec(C_hat - C)`` to ``vec(Q_hat - Q0)``.

    ``D`` is a ``kappa x r`` array of eigenvalues (or a stack of diagonal
    matrices).  The map holds for ``Q_hat`` aligned to ``Q0`` with
    :func:`align_to_reference`, whose rescaling makes ``Q0^{-1} Q_hat`` have
    unit diagonal.

    Returns
    -------
    G : ndarray, shape (r^2, r^2 kappa)
    degenerate : bool
        True when ``sum_k (D_k - D_k)^2`` (Kronecker difference) has more than
        ``r`` zero eigenvalues.
    """
    Q0 = np.atleast_2d(np.asarray(Q0, dtype=float))
    D = np.asarray(D, dtype=float)
    if D.ndim == 3:
        D = np.diagonal(D, axis1=1, axis2=2)
    kappa, r = D.shape
    blocks = [kronecker_difference(np.diag(d), np.diag(d)) for d in D]
    T = np.concatenate(blocks, axis=1)
    gram = sum(b @ b for b in blocks)
    g = np.diag(gram)
    scale = max(float(np.max(np.abs(g))), 1e-300)
    zero = np.abs(g) <= zero_tol * scale
    degenerate = int(zero.sum()) > r
    if degenerate:
        warnings.warn("eigenvalue collision: the linearization is degenerate",
                      DegeneracyWarning, stacklevel=2)
    pinv = np.linalg.pinv(gram, rcond=zero_tol, hermitian=True)
    G = np.kron(np.eye(r), Q0) @ pinv @ T @ _perturbation_basis(Q0, kappa)
    return G, degenerate


def align_to_reference(Q_hat: np.ndarray, Q0: np.ndarray, *, rescale: bool = True):
    """Permute, sign-fix and optionally rescale the columns of ``Q_hat`` to match ``Q0``.

    Columns are matched by maximal absolute cosine (an optimal assignment,
    which coincides with greedy matching whenever the match is clear).  Signs
    make ``diag(Q0^{-1} Q_hat)`` positive; with ``rescale`` that diagonal is
    set to one.

    Returns
    -------
    Q_aligned : ndarray
    perm : ndarray
        ``Q_aligned[:, j]`` is a multiple of ``Q_hat[:, perm[j]]``.
    """
    Q_hat = np.asarray(Q_hat, dtype=float)
    Q0 = np.asarray(Q0, dtype=float)
    a = Q0 / np.linalg.norm(Q0, axis=0)
    b = Q_hat / np.linalg.norm(Q_hat, axis=0)
    cos = np.abs(a.T @ b)
    rows, cols = linear_sum_assignment(-cos)
    perm = cols[np.argsort(rows)]
    Qa = Q_hat[:, perm]
    d = np.diag(_inverse(Q0) @ Qa)
    if rescale:
        Qa = Qa / d
    else:
        Qa = Qa * np.sign(np.where(d == 0, 1.0, d))
    return Qa, perm
