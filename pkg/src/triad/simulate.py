"""Seeded data-generating designs and the Monte Carlo harness.

Designs
-------
* :class:`GaussianMixture`: ``f_ij(y) = phi(y - mu_ij)``;
* :class:`TMixture`: ``f_ij`` noncentral t with ``df`` degrees of freedom and
  noncentrality ``mu_ij``;
* :class:`HmmSkewNormal`: a stationary hidden Markov chain with skew-normal
  emissions ``2 phi(y - mu_j) Phi(alpha_j (y - mu_j))``.

Seeding
-------
Replication ``b`` of a run with master seed ``s`` uses the integer seed
``SeedSequence(s).spawn(reps)[b].generate_state(1)[0]``; every report lists
these seeds.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy import stats

from . import density, models
from .basis import HermiteFunctions

__all__ = [
    "GaussianMixture",
    "TMixture",
    "HmmSkewNormal",
    "DEFAULT_MU",
    "DEFAULT_HMM",
    "replication_seeds",
    "draw_mixture",
    "draw_hmm",
    "ise",
    "quantiles",
    "HarnessReport",
    "run_rmise",
    "run_coverage",
    "DiscreteDesign",
    "run_rate",
    "design_from_dict",
]

log = logging.getLogger(__name__)

DEFAULT_MU = np.array([[0.0, 3.0], [0.0, 4.0], [0.0, 5.0]])


def _check_simplex(p, name):
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-10:
        raise ValueError(f"{name} must lie on the probability simplex")
    return p


@dataclass(frozen=True)
class GaussianMixture:
    mu: np.ndarray = field(default_factory=lambda: DEFAULT_MU.copy())
    pi: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5]))
    kind = "gaussian-mixture"

    def __post_init__(self):
        object.__setattr__(self, "mu", np.atleast_2d(np.asarray(self.mu, dtype=float)))
        object.__setattr__(self, "pi", _check_simplex(self.pi, "pi"))
        if self.mu.shape[1] != self.pi.size:
            raise ValueError("mu needs one column per component")

    @property
    def q(self) -> int:
        return self.mu.shape[0]

    @property
    def r(self) -> int:
        return self.pi.size

    def pdf(self, i, j, y):
        return stats.norm.pdf(np.asarray(y, dtype=float) - self.mu[i, j])

    def mean(self, i, j) -> float:
        return float(self.mu[i, j])

    def _draw_component(self, rng, mu, size):
        return mu + rng.standard_normal(size)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "mu": self.mu.tolist(), "pi": self.pi.tolist()}


@dataclass(frozen=True)
class TMixture(GaussianMixture):
    df: float = 10.0
    kind = "t-mixture"

    def pdf(self, i, j, y):
        return stats.nct.pdf(np.asarray(y, dtype=float), self.df, self.mu[i, j])

    def mean(self, i, j) -> float:
        d = self.df
        return float(self.mu[i, j] * math.sqrt(d / 2.0) * math.exp(math.lgamma((d - 1) / 2) - math.lgamma(d / 2)))

    def _draw_component(self, rng, mu, size):
        z = rng.standard_normal(size)
        v = rng.chisquare(self.df, size)
        return (z + mu) / np.sqrt(v / self.df)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["df"] = self.df
        return d


@dataclass(frozen=True)
class HmmSkewNormal:
    K: np.ndarray = field(default_factory=lambda: np.array([[0.8, 0.2], [0.2, 0.8]]))
    pi: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5]))
    mu: np.ndarray = field(default_factory=lambda: np.array([-2.0, 2.0]))
    alpha: np.ndarray = field(default_factory=lambda: np.array([5.0, -5.0]))
    kind = "hmm-skew-normal"
    q = 3

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "pi", _check_simplex(self.pi, "pi"))
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        for row in K:
            _check_simplex(row, "transition rows")
        if np.max(np.abs(self.pi @ K - self.pi)) > 1e-10:
            raise ValueError("pi is not stationary for K")

    @property
    def r(self) -> int:
        return self.pi.size

    def delta(self, j) -> float:
        return float(self.alpha[j] / math.sqrt(1.0 + self.alpha[j] ** 2))

    def pdf(self, j, y):
        return stats.skewnorm.pdf(np.asarray(y, dtype=float), self.alpha[j], loc=self.mu[j])

    def ppf(self, j, p):
        return stats.skewnorm.ppf(p, self.alpha[j], loc=self.mu[j])

    def mean(self, j) -> float:
        return float(self.mu[j] + self.delta(j) * math.sqrt(2.0 / math.pi))

    def emit(self, rng, states):
        """Skew-normal draws ``mu + delta |U0| + sqrt(1 - delta^2) U1``."""
        states = np.asarray(states)
        d = self.alpha / np.sqrt(1.0 + self.alpha ** 2)
        u0 = np.abs(rng.standard_normal(states.shape))
        u1 = rng.standard_normal(states.shape)
        return self.mu[states] + d[states] * u0 + np.sqrt(1.0 - d[states] ** 2) * u1

    def to_dict(self) -> dict:
        return {"kind": self.kind, "K": self.K.tolist(), "pi": self.pi.tolist(),
                "mu": self.mu.tolist(), "alpha": self.alpha.tolist()}


DEFAULT_HMM = HmmSkewNormal()


def design_from_dict(d: dict):
    kind = d.get("kind", "gaussian-mixture")
    args = {k: v for k, v in d.items() if k != "kind"}
    if kind == "gaussian-mixture":
        return GaussianMixture(**args)
    if kind == "t-mixture":
        return TMixture(**args)
    if kind == "hmm-skew-normal":
        return HmmSkewNormal(**args)
    if kind == "discrete-mixture":
        return DiscreteDesign(**args)
    raise ValueError(f"unknown design kind {kind!r}")


def replication_seeds(seed: int, reps: int) -> list:
    """Integer seeds of the replications derived from a master seed."""
    children = np.random.SeedSequence(seed).spawn(reps)
    return [int(c.generate_state(1)[0]) for c in children]


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def draw_mixture(design, n: int, seed=None):
    """``n`` i.i.d. draws and their latent labels (0-based)."""
    rng = _rng(seed)
    labels = rng.choice(design.r, size=n, p=design.pi)
    y = np.empty((n, design.q))
    for i in range(design.q):
        y[:, i] = design._draw_component(rng, design.mu[i, labels], n)
    return y, labels


def draw_hmm(design: HmmSkewNormal, n: int, seed=None, *, discretize=None):
    """``n`` independent triples ``(Y_1, Y_2, Y_3)`` and their latent paths.

    The chain starts from the stationary distribution.  With ``discretize``
    set to bin edges the outcomes are returned as 0-based bin indices.
    """
    rng = _rng(seed)
    z = np.empty((n, 3), dtype=int)
    z[:, 0] = rng.choice(design.r, size=n, p=design.pi)
    cum = np.cumsum(design.K, axis=1)
    for t in range(1, 3):
        u = rng.random(n)
        z[:, t] = np.minimum((u[:, None] > cum[z[:, t - 1]]).sum(axis=1), design.r - 1)
    y = design.emit(rng, z)
    if discretize is not None:
        y = np.digitize(y, discretize)
    return y, z


def discretized_emissions(design: HmmSkewNormal, edges) -> np.ndarray:
    """Bin probabilities ``P[k, j]`` of the skew-normal emissions."""
    edges = np.concatenate([[-np.inf], np.asarray(edges, dtype=float), [np.inf]])
    cdf = np.stack([stats.skewnorm.cdf(edges, design.alpha[j], loc=design.mu[j])
                    for j in range(design.r)], axis=1)
    return np.diff(cdf, axis=0)


_GH_T, _GH_W = hermgauss(200)
_GH_Y = math.sqrt(2.0) * _GH_T
_GH_WEIGHT = math.sqrt(2.0) * _GH_W * np.exp(_GH_T * _GH_T)


def ise(fhat, f) -> float:
    """``int (fhat - f)^2 dy`` by 200-node Gauss-Hermite quadrature.

    The rule is built for the weight ``exp(-y^2/2)`` and the weight is divided
    back out, which keeps Hermite-series tails integrable.
    """
    d = fhat(_GH_Y) - f(_GH_Y)
    return float(_GH_WEIGHT @ (d * d))


def quantiles(design: HmmSkewNormal, j: int, probs=np.arange(1, 10) / 10) -> np.ndarray:
    return design.ppf(j, probs)


def _match_to_truth(fhats, truths):
    """Permutation of estimated components minimizing total ISE to the truth."""
    r = len(truths)
    best, best_perm = None, None
    for perm in itertools.permutations(range(r)):
        total = sum(ise(fhats[p], truths[j]) for j, p in enumerate(perm))
        if best is None or total < best:
            best, best_perm = total, perm
    return list(best_perm)


@dataclass
class HarnessReport:
    kind: str
    config: dict
    rows: list  # one dict per cell
    seeds: list
    reps: int
    failures: int = 0

    @property
    def failure_rate(self) -> float:
        return self.failures / max(self.reps, 1)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "config": self.config, "reps": self.reps,
                "failures": self.failures, "seeds": self.seeds, "rows": self.rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def to_csv(self) -> str:
        if not self.rows:
            return f"# triad {self.kind} csv v1\n"
        cols = list(self.rows[0])
        lines = [f"# triad {self.kind} csv v1", ",".join(cols)]
        for row in self.rows:
            lines.append(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in cols))
        return "\n".join(lines) + "\n"


def _map(fn, tasks, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _rmise_rep(task):
    design, n, seed, opts = task
    y, _ = draw_mixture(design, n, seed)
    try:
        est = models.fit_continuous_mixture(y, design.r, **opts)
    except Exception as exc:  # a failed replication is counted, not fatal
        log.warning("replication with seed %s failed: %s", seed, exc)
        return None
    out = np.empty((design.q, design.r))
    for i in range(design.q):
        truths = [lambda t, i=i, j=j: design.pdf(i, j, t) for j in range(design.r)]
        perm = _match_to_truth(est.densities[i], truths) if i == 0 else perm0
        if i == 0:
            perm0 = perm
        for j in range(design.r):
            out[i, j] = ise(est.densities[i][perm[j]], truths[j])
    return out


def run_rmise(design, pis, *, reps: int = 100, n: int = 500, seed: int = 0,
              workers: int = 1, **opts) -> HarnessReport:
    """RMISE of every component density over a grid of first mixing proportions.

    ``design`` supplies the component densities; its ``pi`` is replaced by
    ``(p, 1 - p)`` for every ``p`` in ``pis``.  Estimated components are
    matched to the true ones by minimal ISE on the first variable.
    """
    if reps < 2:
        raise ValueError("reps must be at least 2")
    seeds = replication_seeds(seed, reps)
    rows, failures = [], 0
    for p in pis:
        d = type(design)(**{**_design_args(design), "pi": np.array([p, 1.0 - p])})
        results = _map(_rmise_rep, [(d, n, s, opts) for s in seeds], workers)
        ok = [res for res in results if res is not None]
        failures += len(results) - len(ok)
        arr = np.stack(ok) if ok else np.full((1, d.q, d.r), np.nan)
        for i in range(d.q):
            for j in range(d.r):
                v = arr[:, i, j]
                rows.append({
                    "pi1": float(p), "variable": i + 1, "component": j + 1,
                    "rmise": float(np.sqrt(v.mean())),
                    "mise": float(v.mean()),
                    "mise_se": float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("nan"),
                    "rmise_se": float(v.std(ddof=1) / np.sqrt(v.size) / (2 * np.sqrt(v.mean())))
                    if v.size > 1 else float("nan"),
                    "reps": int(v.size),
                })
    config = {"design": design.to_dict(), "pis": [float(p) for p in pis], "n": n,
              "reps": reps, "seed": seed, "options": {k: str(v) for k, v in opts.items()}}
    return HarnessReport("rmise", config, rows, seeds, reps * len(pis), failures)


def _design_args(design) -> dict:
    d = design.to_dict()
    d.pop("kind")
    return d


def _coverage_rep(task):
    design, n, seed, opts, points = task
    y, z = draw_hmm(design, n, seed)
    try:
        est = models.fit_hmm(y, design.r, basis=opts.get("basis") or HermiteFunctions(),
                             kappas=opts.get("kappas", 10), kappa_max=opts.get("kappa_max", 10),
                             series_kappa=opts.get("series_kappa"))
    except Exception as exc:
        log.warning("replication with seed %s failed: %s", seed, exc)
        return None
    truths = [lambda t, j=j: design.pdf(j, t) for j in range(design.r)]
    perm = _match_to_truth(est.emissions, truths)
    fh = np.empty((design.r, points.shape[1]))
    se = np.empty_like(fh)
    inf = np.empty_like(fh)
    for j in range(design.r):
        e = est.emissions[perm[j]]
        w = est.weights[:, perm[j]]
        fh[j] = e(points[j])
        se[j] = density.pointwise_se(w, y[:, 1], e, points[j]) / math.sqrt(n)
        # infeasible comparator: the same series on the true-state subsample
        own = z[:, 1] == j
        inf[j] = density.estimate_density(np.ones(own.sum()), y[own, 1], e.basis, e.kappa)(points[j])
    return fh, se, est.K[np.ix_(perm, perm)], inf


def run_coverage(design: HmmSkewNormal = DEFAULT_HMM, *, reps: int = 200, n: int = 5000,
                 level: float = 0.95, seed: int = 0, workers: int = 1,
                 probs=np.arange(1, 10) / 10, **opts) -> HarnessReport:
    """Coverage of pointwise confidence intervals for the emission densities.

    Intervals are built at the deciles of every true emission density.
    ``series_kappa`` fixes the truncation; pointwise intervals need it larger
    than the cross-validated choice so that the series bias is negligible.
    Each row carries the mean of an infeasible series estimator that uses
    the true latent states.  The report also compares the mean estimated standard error with the
    Monte Carlo standard deviation of the point estimates, and gives the
    coverage of infeasible intervals that use that Monte Carlo deviation.
    """
    if reps < 2:
        raise ValueError("reps must be at least 2")
    seeds = replication_seeds(seed, reps)
    points = np.stack([quantiles(design, j, probs) for j in range(design.r)])
    results = _map(_coverage_rep, [(design, n, s, opts, points) for s in seeds], workers)
    ok = [res for res in results if res is not None]
    failures = len(results) - len(ok)
    fh = np.stack([o[0] for o in ok])
    se = np.stack([o[1] for o in ok])
    Ks = np.stack([o[2] for o in ok])
    infs = np.stack([o[3] for o in ok])
    z = float(stats.norm.ppf(0.5 + level / 2.0))
    rows = []
    for j in range(design.r):
        truth = design.pdf(j, points[j])
        for c, p in enumerate(probs):
            f, s = fh[:, j, c], se[:, j, c]
            sd = float(f.std(ddof=1))
            rows.append({
                "state": j + 1, "prob": float(p), "y": float(points[j, c]),
                "truth": float(truth[c]), "mean_fhat": float(f.mean()),
                "coverage": float(np.mean(np.abs(f - truth[c]) <= z * s)),
                "oracle_coverage": float(np.mean(np.abs(f - truth[c]) <= z * sd)),
                "mean_se": float(s.mean()), "mc_sd": sd,
                "se_ratio": float(s.mean() / sd) if sd > 0 else float("nan"),
                "reps": int(f.size),
            })
    config = {"design": design.to_dict(), "n": n, "reps": reps, "level": level, "seed": seed,
              "options": {k: str(v) for k, v in opts.items()},
              "K_mean": Ks.mean(axis=0).tolist(),
              "K_within_0.05": float(np.mean(np.all(np.abs(Ks - design.K) <= 0.05, axis=(1, 2))))}
    return HarnessReport("coverage", config, rows, seeds, reps, failures)


@dataclass(frozen=True)
class DiscreteDesign:
    """Discrete mixture with per-variable ``kappa x r`` emission matrices."""

    p: tuple
    pi: np.ndarray
    kind = "discrete-mixture"

    def __post_init__(self):
        p = tuple(np.asarray(x, dtype=float) for x in self.p)
        for x in p:
            for col in x.T:
                _check_simplex(col, "emission columns")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "pi", _check_simplex(self.pi, "pi"))

    @property
    def r(self) -> int:
        return self.pi.size

    def table(self) -> np.ndarray:
        from .multiway import QadDecomposition, compose
        return compose(QadDecomposition(list(self.p), self.pi))

    def draw_counts(self, n, seed=None) -> np.ndarray:
        t = self.table()
        return _rng(seed).multinomial(n, t.ravel()).reshape(t.shape)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "p": [x.tolist() for x in self.p], "pi": self.pi.tolist()}


def _rate_rep(task):
    design, n, seed = task
    counts = design.draw_counts(n, seed)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", models.ProbabilityRepairWarning)
            est = models.fit_discrete_mixture(counts, design.r)
    except Exception as exc:
        log.warning("replication with seed %s failed: %s", seed, exc)
        return None
    truth = np.concatenate([np.vstack(design.p).ravel(), design.pi])
    best = None
    for perm in itertools.permutations(range(design.r)):
        e = est.permuted(list(perm))
        v = np.concatenate([np.vstack(e.p).ravel(), e.pi]) - truth
        if best is None or np.sum(v * v) < np.sum(best * best):
            best = v
    return best


def run_rate(design: DiscreteDesign, ns, *, reps: int = 200, seed: int = 0,
             workers: int = 1) -> HarnessReport:
    """Bias and RMSE of all discrete-mixture parameters over sample sizes.

    Labels are matched to the truth by the permutation of least squared
    error.  Each row reports one sample size; ``rmse`` is the root of the
    mean squared error averaged over parameters.
    """
    if reps < 2:
        raise ValueError("reps must be at least 2")
    seeds = replication_seeds(seed, reps)
    rows, failures = [], 0
    for n in ns:
        results = _map(_rate_rep, [(design, int(n), s) for s in seeds], workers)
        ok = [res for res in results if res is not None]
        failures += len(results) - len(ok)
        err = np.stack(ok)
        rows.append({"n": int(n), "rmse": float(np.sqrt(np.mean(err * err))),
                     "max_abs_bias": float(np.max(np.abs(err.mean(axis=0)))),
                     "reps": len(ok)})
    config = {"design": design.to_dict(), "ns": [int(n) for n in ns], "reps": reps, "seed": seed}
    return HarnessReport("rate", config, rows, seeds, reps * len(ns), failures)
