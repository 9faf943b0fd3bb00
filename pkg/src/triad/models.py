"""Model-level estimators built on the decomposition machinery.

* discrete multivariate finite mixtures, from a q-way contingency table;
* continuous multivariate finite mixtures, by orthogonal-series estimation
  of every component density;
* stationary hidden Markov models observed at three consecutive periods,
  with discrete or continuous emissions.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import density
from .basis import BasisSystem, HermiteFunctions
from .decompose import (
    DecomposeReport,
    recover_all_factors,
    recover_weights,
    table_provider,
)

__all__ = [
    "ProbabilityRepairWarning",
    "LabelTieWarning",
    "project_simplex",
    "clip_columns",
    "counts_table",
    "DiscreteMixtureEstimate",
    "ContinuousMixtureEstimate",
    "HmmEstimate",
    "fit_discrete_mixture",
    "fit_continuous_mixture",
    "fit_hmm",
    "align_labels",
]


class ProbabilityRepairWarning(UserWarning):
    """Repairing estimated probabilities moved more mass than the bound."""


class LabelTieWarning(UserWarning):
    """Two components share the same ordering key."""


def project_simplex(v) -> np.ndarray:
    """Euclidean projection of ``v`` onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    if np.all(v >= 0) and abs(v.sum() - 1.0) <= 1e-15:
        return v.copy()
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def clip_columns(X) -> tuple:
    """Clip negative entries and rescale every column to sum to one.

    Returns the repaired matrix and the clipped mass of each column, relative
    to the column's absolute mass.
    """
    X = np.asarray(X, dtype=float)
    # columns may come out with a common negative sign
    X = X * np.where(X.sum(axis=0) < 0, -1.0, 1.0)
    neg = np.clip(-X, 0.0, None).sum(axis=0)
    total = np.abs(X).sum(axis=0)
    Y = np.clip(X, 0.0, None)
    sums = Y.sum(axis=0)
    sums[sums == 0] = 1.0
    return Y / sums, neg / np.where(total == 0, 1.0, total)


def counts_table(data, kappas) -> np.ndarray:
    """q-way table of counts from an ``(n, q)`` integer matrix of 0-based levels."""
    data = np.asarray(data, dtype=int)
    table = np.zeros(tuple(kappas))
    np.add.at(table, tuple(data.T), 1.0)
    return table


def _warn_mass(moved, bound, what):
    if np.max(moved, initial=0.0) > bound:
        warnings.warn(f"{what}: repair moved {np.max(moved):.1%} of the mass",
                      ProbabilityRepairWarning, stacklevel=3)


@dataclass
class DiscreteMixtureEstimate:
    p: list  # per-variable (kappa_i, r) column-stochastic matrices
    pi: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def r(self) -> int:
        return self.pi.size

    def permuted(self, perm) -> "DiscreteMixtureEstimate":
        perm = np.asarray(perm)
        return DiscreteMixtureEstimate([P[:, perm] for P in self.p], self.pi[perm], dict(self.diagnostics))

    def sort_key(self) -> np.ndarray:
        P = self.p[0]
        return np.arange(P.shape[0]) @ P

    def to_dict(self) -> dict:
        return {"p": [P.tolist() for P in self.p], "pi": self.pi.tolist(),
                "diagnostics": _jsonable(self.diagnostics)}


@dataclass
class ContinuousMixtureEstimate:
    densities: list  # densities[i][j] -> SeriesDensityEstimate
    pi: np.ndarray
    weights: list  # per-variable (n, r) classification weights
    factors: list  # per-variable (kappa_i, r) leading coefficients
    diagnostics: dict = field(default_factory=dict)
    keys: np.ndarray | None = None

    @property
    def r(self) -> int:
        return self.pi.size

    def permuted(self, perm) -> "ContinuousMixtureEstimate":
        perm = np.asarray(perm)
        dens = []
        for row in self.densities:
            new = [row[p] for p in perm]
            for j, est in enumerate(new):
                new[j] = density.SeriesDensityEstimate(est.i, j, est.kappa, est.coefficients, est.basis)
            dens.append(new)
        keys = None if self.keys is None else self.keys[perm]
        return ContinuousMixtureEstimate(dens, self.pi[perm], [w[:, perm] for w in self.weights],
                                         [F[:, perm] for F in self.factors], dict(self.diagnostics), keys)

    def sort_key(self) -> np.ndarray:
        return self.keys

    def to_dict(self) -> dict:
        return {
            "pi": self.pi.tolist(),
            "densities": [[d.to_dict() for d in row] for row in self.densities],
            "diagnostics": _jsonable(self.diagnostics),
        }


@dataclass
class HmmEstimate:
    P: np.ndarray | None  # (kappa, r) emission distributions, discrete case
    K: np.ndarray
    pi: np.ndarray
    A: np.ndarray
    B: np.ndarray
    emissions: list | None = None  # SeriesDensityEstimate per state, continuous case
    weights: np.ndarray | None = None  # (n, r) emission-direction weights, continuous case
    coefficients: np.ndarray | None = None  # (kappa, r) emission coefficients, continuous case
    diagnostics: dict = field(default_factory=dict)
    keys: np.ndarray | None = None

    @property
    def r(self) -> int:
        return self.pi.size

    def permuted(self, perm) -> "HmmEstimate":
        perm = np.asarray(perm)
        emissions = None
        if self.emissions is not None:
            emissions = []
            for j, p in enumerate(perm):
                e = self.emissions[p]
                emissions.append(density.SeriesDensityEstimate(e.i, j, e.kappa, e.coefficients, e.basis))
        return HmmEstimate(
            None if self.P is None else self.P[:, perm],
            self.K[np.ix_(perm, perm)],
            self.pi[perm],
            self.A[:, perm],
            self.B[:, perm],
            emissions,
            None if self.weights is None else self.weights[:, perm],
            None if self.coefficients is None else self.coefficients[:, perm],
            dict(self.diagnostics),
            None if self.keys is None else self.keys[perm],
        )

    def sort_key(self) -> np.ndarray:
        return self.keys

    def to_dict(self) -> dict:
        out = {
            "K": self.K.tolist(),
            "pi": self.pi.tolist(),
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "diagnostics": _jsonable(self.diagnostics),
        }
        if self.P is not None:
            out["P"] = self.P.tolist()
        if self.emissions is not None:
            out["emissions"] = [e.to_dict() for e in self.emissions]
        return out


def _jsonable(d):
    if isinstance(d, dict):
        return {k: _jsonable(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_jsonable(v) for v in d]
    if isinstance(d, np.ndarray):
        return d.tolist()
    if isinstance(d, np.generic):
        return d.item()
    return d


def _normalize_table(table) -> np.ndarray:
    table = np.asarray(table, dtype=float)
    if np.any(table < 0):
        raise ValueError("table entries must be nonnegative")
    total = table.sum()
    if total <= 0:
        raise ValueError("table is empty")
    return table / total


def fit_discrete_mixture(table, r: int, *, mass_bound: float = 0.05, jd_options=None,
                         rank_tol: float = 1e-10) -> DiscreteMixtureEstimate:
    """Nonparametric estimate of a discrete multivariate finite mixture.

    ``table`` holds cell probabilities or raw counts of ``q >= 3`` variables.
    Recovered factor columns are clipped at zero and renormalized; the
    mixing proportions are the least-squares fit to the one-way marginals,
    projected onto the simplex.
    """
    P = _normalize_table(table)
    if P.ndim < 3:
        raise ValueError("need at least three variables")
    if r == 1:
        p = [P.sum(axis=tuple(a for a in range(P.ndim) if a != i))[:, None] for i in range(P.ndim)]
        return DiscreteMixtureEstimate(p, np.ones(1), {"residual": 0.0, "clipped_mass": [0.0] * P.ndim})
    report = recover_all_factors(P, table_provider(P), r, jd_options=jd_options,
                                 rank_tol=rank_tol, normalize=False)
    p, moved = [], []
    for X in report.raw_factors:
        Xc, m = clip_columns(X)
        p.append(Xc)
        moved.append(m)
    _warn_mass(np.concatenate(moved), mass_bound, "factor columns")
    provider = table_provider(P)
    marg = np.concatenate([provider((i,)) for i in range(P.ndim)])
    pi = project_simplex(recover_weights(np.vstack(p), marg))
    diag = {
        "residual": report.residual,
        "criterion": report.criterion,
        "rank_gaps": report.rank_gaps,
        "clipped_mass": [float(np.max(m)) for m in moved],
        "warnings": report.warnings,
    }
    return align_labels(DiscreteMixtureEstimate(p, pi, diag))


def _weighted_means(weights, y):
    return (weights * y[:, None]).sum(axis=0) / weights.sum(axis=0)


def fit_continuous_mixture(
    sample,
    r: int,
    basis: BasisSystem | None = None,
    kappas=10,
    *,
    kappa_max: int | None = 10,
    kappa: int | None = None,
    min_n: int = 50,
    jd_options: dict | None = None,
) -> ContinuousMixtureEstimate:
    """Series estimates of every component density of a continuous mixture.

    Parameters
    ----------
    sample : (n, q) array, ``q >= 3``
    r : number of components
    basis : defaults to Hermite functions
    kappas : truncation(s) of the moment array
    kappa_max : largest truncation considered by cross-validation
    kappa : fixed truncation; overrides cross-validation when given
    """
    basis = basis or HermiteFunctions()
    y = density._as_sample(sample)
    n, q = y.shape
    if q < 3:
        raise ValueError("need at least three variables")
    if n < min_n:
        raise ValueError(f"need at least {min_n} observations, got {n}")
    feats = density.features(y, basis, kappas)
    if r == 1:
        weights = [np.ones((n, 1)) for _ in range(q)]
        factors = [f.mean(axis=0)[:, None] for f in feats]
        pi = np.ones(1)
        report = None
    else:
        x = density._mean_outer(feats)
        report = recover_all_factors(x, density.moment_provider(feats), r,
                                     jd_options=jd_options, normalize=False)
        weights = [density.weights_from_fit(feats, fit) for fit in report.directions]
        factors = report.raw_factors
        marg = np.concatenate([f.mean(axis=0) for f in feats])
        pi = project_simplex(recover_weights(np.vstack(factors), marg))
    dens, chosen = [], []
    for i in range(q):
        row = []
        for j in range(r):
            w = weights[i][:, j]
            if kappa is None:
                k, _ = density.cross_validate(w, y[:, i], basis, kappa_max or feats[i].shape[1])
            else:
                k = kappa
            chosen.append(k)
            est = density.estimate_density(w, y[:, i], basis, k, i=i, j=j)
            row.append(est)
        dens.append(row)
    diag = {"kappas_chosen": chosen}
    if report is not None:
        diag.update(residual=report.residual, criterion=report.criterion,
                    rank_gaps=report.rank_gaps, warnings=report.warnings)
    keys = _weighted_means(weights[0], y[:, 0])
    return align_labels(ContinuousMixtureEstimate(dens, pi, weights, factors, diag, keys))


def _transition_from(P, B, mass_bound):
    Kt, *_ = np.linalg.lstsq(P, B, rcond=None)
    K = Kt.T
    Kp = np.vstack([project_simplex(row) for row in K])
    moved = np.abs(Kp - K).sum(axis=1)
    _warn_mass(moved, mass_bound, "transition rows")
    return Kp, K


def fit_hmm(
    data,
    r: int,
    *,
    kappa: int | None = None,
    basis: BasisSystem | None = None,
    kappas=10,
    kappa_max: int | None = 10,
    series_kappa: int | None = None,
    mass_bound: float = 0.05,
    jd_options: dict | None = None,
) -> HmmEstimate:
    """Estimate a stationary hidden Markov model from three consecutive outcomes.

    Discrete emissions: pass ``data`` as a ``kappa x kappa x kappa`` table of
    counts or probabilities, or as an ``(n, 3)`` integer matrix together with
    ``kappa``.  Continuous emissions: pass an ``(n, 3)`` real matrix and a
    ``basis`` (Hermite functions by default); the emission densities are series estimates built from the
    middle period.

    The factors of the first, second and third period are ``A = P Pi K Pi^-1``,
    the emissions ``P`` and ``B = P K'``; the transition matrix solves
    ``K' = P^+ B`` and each row is projected onto the simplex.
    """
    data = np.asarray(data)
    if basis is None and data.ndim == 2 and not np.issubdtype(data.dtype, np.integer):
        basis = HermiteFunctions()
    continuous = basis is not None
    if continuous:
        y = density._as_sample(data)
        if y.shape[1] != 3:
            raise ValueError("bin longer series into three outcomes first")
        feats = density.features(y, basis, kappas)
        x = density._mean_outer(feats)
        provider = density.moment_provider(feats)
    else:
        if data.ndim == 2:
            if kappa is None:
                raise ValueError("kappa is required for integer-coded data")
            table = counts_table(data, (kappa,) * 3)
        else:
            table = data
        x = _normalize_table(table)
        if x.ndim != 3:
            raise ValueError("an HMM table must have three axes")
        provider = table_provider(x)
    report = recover_all_factors(x, provider, r, jd_options=jd_options, normalize=False)
    A, Pm, B = report.raw_factors
    marg = np.concatenate([np.asarray(provider((i,))).ravel() for i in range(3)])
    pi = project_simplex(recover_weights(np.vstack(report.raw_factors), marg))
    diag = {"residual": report.residual, "criterion": report.criterion,
            "rank_gaps": report.rank_gaps, "warnings": report.warnings}
    if continuous:
        K, K_raw = _transition_from(Pm, B, mass_bound)
        w = density.weights_from_fit(feats, report.directions[1])
        emissions, chosen = [], []
        for j in range(r):
            if series_kappa is None:
                k, _ = density.cross_validate(w[:, j], y[:, 1], basis, kappa_max or feats[1].shape[1])
            else:
                k = series_kappa
            chosen.append(k)
            emissions.append(density.estimate_density(w[:, j], y[:, 1], basis, k, i=1, j=j))
        diag["kappas_chosen"] = chosen
        keys = _weighted_means(w, y[:, 1])
        est = HmmEstimate(None, K, pi, A, B, emissions, w, Pm, diag, keys)
    else:
        Pc, moved = clip_columns(Pm)
        Ac, _ = clip_columns(A)
        Bc, _ = clip_columns(B)
        _warn_mass(moved, mass_bound, "emission columns")
        K, K_raw = _transition_from(Pc, Bc, mass_bound)
        diag["clipped_mass"] = float(np.max(moved))
        keys = np.arange(Pc.shape[0]) @ Pc
        est = HmmEstimate(Pc, K, pi, Ac, Bc, diagnostics=diag, keys=keys)
    # cross-check through A = P Pi K Pi^{-1}
    Pref = est.P if est.P is not None else Pm
    est.diagnostics["stationarity_gap"] = float(np.max(np.abs(pi @ K - pi)))
    est.diagnostics["A_route_gap"] = float(
        np.linalg.norm(Pref @ np.diag(pi) @ K @ np.diag(1.0 / np.maximum(pi, 1e-12)) - est.A)
        / max(np.linalg.norm(est.A), 1e-300)
    )
    est.diagnostics["consistency_gap"] = float(
        np.linalg.norm(est.B - Pref @ K.T) / max(np.linalg.norm(est.B), 1e-300)
    )
    return align_labels(est)


def align_labels(estimate, key=None):
    """Reorder components by ascending ``key`` (default: the estimate's own key).

    The default key is the mean of the first variable (mixtures) or of the
    emission distribution (hidden Markov models) under each component.
    """
    k = np.asarray(estimate.sort_key() if key is None else key, dtype=float)
    order = np.argsort(k, kind="stable")
    ks = k[order]
    if np.any(np.diff(ks) <= 1e-12):
        warnings.warn("components tie on the ordering key", LabelTieWarning, stacklevel=2)
    if np.array_equal(order, np.arange(k.size)):
        return estimate
    return estimate.permuted(order)
