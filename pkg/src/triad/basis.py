"""Orthonormal function systems used for series projections.

Two systems ship: Hermite functions on the real line and normalized Legendre
polynomials on ``[-1, 1]``.  Both are orthonormal for the weight ``rho = 1``.
Basis indices ``k`` start at 1 as in ``phi_1, phi_2, ...``; vector
evaluations return ``(phi_1(y), ..., phi_kappa(y))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss
from scipy import integrate

__all__ = [
    "BasisSystem",
    "HermiteFunctions",
    "Legendre",
    "SupportError",
    "QuadratureError",
    "get_basis",
]


class SupportError(ValueError):
    """Evaluation point outside the support of the basis."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested agreement."""


@dataclass(frozen=True)
class BasisSystem:
    """Base class; subclasses implement :meth:`eval_vector` and :meth:`zeta`."""

    kind = "abstract"
    support = (-math.inf, math.inf)

    def rho(self, y):
        return np.ones_like(np.asarray(y, dtype=float))

    def eval_vector(self, kappa: int, y) -> np.ndarray:
        raise NotImplementedError

    def zeta(self, kappa: int) -> float:
        raise NotImplementedError

    def eval(self, k: int, y):
        """``phi_k(y)`` for ``k >= 1``."""
        if k < 1:
            raise ValueError("basis indices start at 1")
        return self.eval_vector(k, y)[..., k - 1]

    def design(self, kappa: int, y) -> np.ndarray:
        """Rows ``phi_kappa(y_m) * rho(y_m)`` for a sample ``y``."""
        y = np.asarray(y, dtype=float)
        return self.eval_vector(kappa, y) * self.rho(y)[..., None]

    def _check_support(self, y):
        lo, hi = self.support
        y = np.asarray(y, dtype=float)
        if np.any(y < lo) or np.any(y > hi):
            raise SupportError(f"points outside the support [{lo}, {hi}] of the {self.kind} basis")
        return y

    def quadrature(self, n: int):
        raise NotImplementedError

    def project(self, f, kappa: int, *, tol: float = 1e-9, max_nodes: int = 256) -> np.ndarray:
        """Fourier coefficients ``<phi_k, f>`` for ``k = 1..kappa``.

        ``f`` is either a callable, integrated with Gauss rules whose node
        count doubles until successive results agree to ``tol`` (falling back
        to adaptive quadrature), or a one-dimensional sample, in which case
        the sample means of ``phi_k(Y) rho(Y)`` are returned.
        """
        if not callable(f):
            return self.design(kappa, self._check_support(np.ravel(f))).mean(axis=0)
        prev = None
        n = 32
        while n <= max_nodes:
            nodes, weights = self.quadrature(n)
            vals = np.asarray(f(nodes), dtype=float)
            cur = (weights * vals) @ self.design(kappa, nodes)
            if prev is not None and np.max(np.abs(cur - prev)) <= tol:
                return cur
            prev = cur
            n *= 2
        lo, hi = self.support
        out = np.empty(kappa)
        for k in range(1, kappa + 1):
            val, err = integrate.quad(
                lambda t: float(f(np.array([t]))[0] * self.design(k, np.array([t]))[0, k - 1]),
                lo, hi, limit=400, epsabs=tol, epsrel=tol,
            )
            if not np.isfinite(val) or err > 100 * tol:
                raise QuadratureError(f"quadrature for coefficient {k} did not converge (err={err:.2g})")
            out[k - 1] = val
        return out

    def series(self, coefficients, y) -> np.ndarray:
        """Evaluate ``sum_k c_k phi_k(y)``."""
        c = np.asarray(coefficients, dtype=float)
        return self.eval_vector(c.size, y) @ c


@dataclass(frozen=True)
class HermiteFunctions(BasisSystem):
    """Orthonormal Hermite functions ``phi_k(y) ~ exp(-y^2/2) H_{k-1}(y)``.

    Evaluated with the normalized three-term recurrence
    ``phi_{k+1} = y sqrt(2/k) phi_k - sqrt((k-1)/k) phi_{k-1}``, which is
    stable for large ``k`` where the factorial closed form overflows.
    """

    kind = "hermite"
    support = (-math.inf, math.inf)

    def eval_vector(self, kappa: int, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = np.empty(y.shape + (kappa,))
        out[..., 0] = math.pi ** -0.25 * np.exp(-0.5 * y * y)
        if kappa > 1:
            out[..., 1] = math.sqrt(2.0) * y * out[..., 0]
        for k in range(2, kappa):
            out[..., k] = y * math.sqrt(2.0 / k) * out[..., k - 1] - math.sqrt((k - 1) / k) * out[..., k - 2]
        return out

    def zeta(self, kappa: int) -> float:
        # |phi_k| <= pi^{-1/4} for every k
        return math.pi ** -0.25 * math.sqrt(kappa)

    def quadrature(self, n: int):
        """Nodes and weights integrating ``g`` against Lebesgue measure.

        Gauss-Hermite for the weight ``exp(-y^2/2)``, with the weight folded
        back into the returned weights.
        """
        t, w = hermgauss(n)
        y = math.sqrt(2.0) * t
        return y, math.sqrt(2.0) * w * np.exp(t * t)


@dataclass(frozen=True)
class Legendre(BasisSystem):
    """Orthonormal Legendre polynomials ``sqrt((2k-1)/2) P_{k-1}`` on [-1, 1]."""

    kind = "legendre"
    support = (-1.0, 1.0)

    def eval_vector(self, kappa: int, y) -> np.ndarray:
        y = self._check_support(y)
        P = np.empty(y.shape + (kappa,))
        P[..., 0] = 1.0
        if kappa > 1:
            P[..., 1] = y
        for n in range(1, kappa - 1):
            P[..., n + 1] = ((2 * n + 1) * y * P[..., n] - n * P[..., n - 1]) / (n + 1)
        return P * np.sqrt((2 * np.arange(kappa) + 1) / 2.0)

    def zeta(self, kappa: int) -> float:
        return kappa / math.sqrt(2.0)

    def quadrature(self, n: int):
        return leggauss(n)


def get_basis(kind: str) -> BasisSystem:
    """Basis by name: ``"hermite"`` or ``"legendre"``."""
    kinds: dict[str, Callable[[], BasisSystem]] = {
        "hermite": HermiteFunctions,
        "legendre": Legendre,
    }
    try:
        return kinds[kind]()
    except KeyError:
        raise ValueError(f"unknown basis {kind!r}; choose from {sorted(kinds)}") from None
