"""Orthogonal-series estimation of component densities in mixtures.

The moment array ``B = mean_m outer_i(phi(Y_im) rho(Y_im))`` of a sample from
a q-variate mixture is itself a q-ad whose factors hold the Fourier
coefficients of the component densities.  Recovering the joint diagonalizer
for one variable yields a per-observation classification weight
``w_mj = e_j' Omega_m e_j``; weighted sample means of the basis functions
then estimate the Fourier coefficients of component ``j`` to any order.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .basis import BasisSystem, get_basis
from .decompose import DirectionFit, fit_direction

__all__ = [
    "MomentArray",
    "ClassificationWeights",
    "SeriesDensityEstimate",
    "features",
    "row_khatri_rao",
    "moment_array",
    "moment_provider",
    "weights_from_fit",
    "classification_weights",
    "fourier_coefficient",
    "fourier_coefficients",
    "estimate_density",
    "cv_path",
    "cross_validate",
    "pointwise_se",
    "confidence_interval",
]

Z95 = 1.959964


def _as_sample(sample) -> np.ndarray:
    y = np.asarray(sample, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2 or y.shape[0] < 1:
        raise ValueError("sample must be an (n, q) matrix with n >= 1")
    if not np.all(np.isfinite(y)):
        raise ValueError("sample contains non-finite observations")
    return y


def features(sample, basis: BasisSystem, kappas) -> list:
    """Per-variable design matrices ``phi_kappa_i(Y_i) rho(Y_i)`` (n x kappa_i)."""
    y = _as_sample(sample)
    kappas = _kappas(kappas, y.shape[1])
    return [basis.design(k, y[:, i]) for i, k in enumerate(kappas)]


def _kappas(kappas, q):
    if np.isscalar(kappas):
        kappas = [int(kappas)] * q
    kappas = [int(k) for k in kappas]
    if len(kappas) != q or min(kappas) < 1:
        raise ValueError(f"need {q} truncations >= 1, got {kappas}")
    return kappas


def row_khatri_rao(mats) -> np.ndarray:
    """Row-wise Khatri-Rao product; the first matrix varies slowest."""
    out = mats[0]
    for m in mats[1:]:
        out = (out[:, :, None] * m[:, None, :]).reshape(out.shape[0], -1)
    return out


def _mean_outer(feats) -> np.ndarray:
    n = feats[0].shape[0]
    letters = "abcdefghijklmnop"[: len(feats)]
    spec = ",".join(f"z{c}" for c in letters) + "->" + letters
    return np.einsum(spec, *feats, optimize=True) / n


@dataclass
class MomentArray:
    values: np.ndarray
    n: int
    basis: BasisSystem
    kappas: tuple


def moment_array(sample, basis: BasisSystem, kappas) -> MomentArray:
    """Sample mean of the outer products of the basis vectors."""
    feats = features(sample, basis, kappas)
    return MomentArray(_mean_outer(feats), feats[0].shape[0], basis,
                       tuple(f.shape[1] for f in feats))


def moment_provider(feats):
    """Submodel provider: moment arrays over any subset of variables."""
    return lambda keep: _mean_outer([feats[i] for i in sorted(keep)])


@dataclass
class ClassificationWeights:
    """Per-observation weights ``omega[m, j] = e_j' Omega_m e_j``."""

    omega: np.ndarray
    direction: int
    fit: DirectionFit | None = None

    @property
    def r(self) -> int:
        return self.omega.shape[1]


def weights_from_fit(feats, fit: DirectionFit) -> np.ndarray:
    """Classification weights of every observation for a fitted direction."""
    Q = fit.jd.Q
    if Q.shape[0] == 1 and fit.factor.shape[1] == 1:
        return np.ones((feats[0].shape[0], 1))
    g1, g2 = fit.partition
    phi1 = row_khatri_rao([feats[a] for a in g1])
    phi2 = row_khatri_rao([feats[a] for a in g2])
    U = phi1 @ fit.whitening.W1.T @ np.linalg.inv(Q).T
    V = phi2 @ fit.whitening.W2.T @ Q
    return U * V


def classification_weights(
    sample,
    basis: BasisSystem,
    kappas,
    r: int,
    direction: int,
    partition=None,
    *,
    jd_options: dict | None = None,
) -> ClassificationWeights:
    """Classification weights from the joint diagonalizer of one variable.

    With ``r = 1`` the mixture is a single product density and every weight
    is exactly one.
    """
    y = _as_sample(sample)
    n = y.shape[0]
    if r == 1:
        return ClassificationWeights(np.ones((n, 1)), direction)
    feats = features(y, basis, kappas)
    x = _mean_outer(feats)
    fit = fit_direction(x, moment_provider(feats), r, direction, partition, jd_options=jd_options)
    return ClassificationWeights(weights_from_fit(feats, fit), direction, fit)


def _weight_vector(weights, j=None) -> np.ndarray:
    if isinstance(weights, ClassificationWeights):
        weights = weights.omega
    w = np.asarray(weights, dtype=float)
    if w.ndim == 2:
        w = w[:, 0 if j is None else j]
    return w


def fourier_coefficients(weights, y, basis: BasisSystem, kappa: int) -> np.ndarray:
    """``b_hat[k-1] = mean_m w_m phi_k(y_m) rho(y_m)`` for ``k = 1..kappa``."""
    y = np.asarray(y, dtype=float).ravel()
    w = _weight_vector(weights)
    return (w @ basis.design(kappa, y)) / y.size


def fourier_coefficient(weights, sample, basis: BasisSystem, i: int, j: int, k: int) -> float:
    """Coefficient ``k`` (1-based, any order) of component ``j`` of variable ``i``."""
    y = _as_sample(sample)[:, i]
    w = _weight_vector(weights, j)
    return float(w @ basis.design(k, y)[:, k - 1]) / y.size


@dataclass
class SeriesDensityEstimate:
    """``f_hat(y) = sum_{k <= kappa} coefficients[k-1] phi_k(y)``."""

    i: int
    j: int
    kappa: int
    coefficients: np.ndarray
    basis: BasisSystem

    def __call__(self, y):
        return self.basis.series(self.coefficients, y)

    evaluate = __call__

    def to_dict(self) -> dict:
        return {
            "i": self.i,
            "j": self.j,
            "kappa": self.kappa,
            "coefficients": np.asarray(self.coefficients).tolist(),
            "basis": self.basis.kind,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "SeriesDensityEstimate":
        return cls(int(d["i"]), int(d["j"]), int(d["kappa"]),
                   np.asarray(d["coefficients"], dtype=float), get_basis(d["basis"]))


def estimate_density(weights, y, basis: BasisSystem, kappa: int, *, i: int = 0, j: int = 0):
    """Series estimate of one component density from weighted observations."""
    coef = fourier_coefficients(weights, y, basis, kappa)
    return SeriesDensityEstimate(i, j, kappa, coef, basis)


def cv_path(weights, y, basis: BasisSystem, kappa_max: int) -> np.ndarray:
    """Cross-validation criterion for truncations ``1..kappa_max``.

    ``CV(kappa) = sum_{k<=kappa} b_k^2
    - 2/(n(n-1)) sum_m sum_{o != m} w_m w_o sum_{k<=kappa} phi_k(y_o) phi_k(y_m)``
    estimates the integrated squared error up to a term free of ``kappa``.
    The double sum is accumulated from ``(sum_m w_m phi_k)^2`` minus the
    diagonal terms.
    """
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if n < 2:
        raise ValueError("cross-validation needs at least two observations")
    w = _weight_vector(weights)
    phi = basis.design(kappa_max, y)
    wphi = w[:, None] * phi
    s = wphi.sum(axis=0)
    b = s / n
    cross = (s * s - np.sum(wphi * wphi, axis=0)) * 2.0 / (n * (n - 1))
    return np.cumsum(b * b - cross)


def cross_validate(weights, y, basis: BasisSystem, kappa_max: int = 10):
    """Truncation minimizing :func:`cv_path`; returns ``(kappa, path)``."""
    path = cv_path(weights, y, basis, kappa_max)
    return int(np.argmin(path)) + 1, path


def _summands(weights, y, estimate: SeriesDensityEstimate, points):
    y = np.asarray(y, dtype=float).ravel()
    w = _weight_vector(weights)
    phi_y = estimate.basis.design(estimate.kappa, y)
    phi_p = estimate.basis.eval_vector(estimate.kappa, np.atleast_1d(np.asarray(points, dtype=float)))
    return w[:, None] * (phi_y @ phi_p.T)


def pointwise_se(weights, y, estimate: SeriesDensityEstimate, points) -> np.ndarray:
    """Sample standard deviation of the per-observation summands of ``f_hat``.

    The standard error of ``f_hat(y)`` is this value over ``sqrt(n)``.
    """
    terms = _summands(weights, y, estimate, points)
    fhat = terms.mean(axis=0)
    return np.sqrt(np.mean((terms - fhat) ** 2, axis=0))


def confidence_interval(weights, y, estimate: SeriesDensityEstimate, points, level: float = 0.95):
    """Pointwise normal-approximation interval ``f_hat +- z * sigma / sqrt(n)``.

    Valid at points where the marginal density is of bounded variation
    nearby; that is the caller's assumption.
    """
    n = np.asarray(y).size
    fhat = estimate(np.atleast_1d(np.asarray(points, dtype=float)))
    sigma = pointwise_se(weights, y, estimate, points)
    z = Z95 if math.isclose(level, 0.95) else float(norm.ppf(0.5 + level / 2.0))
    half = z * sigma / math.sqrt(n)
    return fhat - half, fhat + half
