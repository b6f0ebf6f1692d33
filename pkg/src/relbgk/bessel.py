"""Modified Bessel functions K0, K1, K2 and the scalar kernels built on them.

Everything here is a pure function of ``beta`` (dimensionless inverse
temperature).  Two evaluation paths exist:

* the fast path backed by :func:`scipy.special.kve` (exponentially scaled
  Bessel functions), used everywhere else in the package;
* :func:`bessel_k_quad`, an adaptive-quadrature reference built directly on
  the integral representation ``K_j(b) = int_0^inf cosh(j r) exp(-b cosh r) dr``
  after the substitution ``x = sinh(r/2)``.  It is slow and serves as the
  independent oracle in the test-suite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from .errors import BesselUnderflowError, ConvergenceError, DomainError

#: Range over which the relative accuracy contract (1e-10) is asserted.
BETA_MIN = 1e-3
BETA_MAX = 700.0

#: Search window for :func:`inverse_ratio`.
BRACKET_MIN = 1e-12
BRACKET_MAX = 1e15

_TINY = np.finfo(float).tiny


def _check_beta(beta):
    b = np.asarray(beta, dtype=float)
    if not np.all(np.isfinite(b)) or np.any(b <= 0.0):
        raise DomainError(f"beta must be positive and finite, got {beta!r}")
    return b


def _check_order(order: int) -> int:
    if order not in (0, 1, 2):
        raise DomainError(f"Bessel order must be 0, 1 or 2, got {order!r}")
    return int(order)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def bessel_k_scaled(order: int, beta):
    """Return ``exp(beta) * K_order(beta)``; never underflows."""
    order = _check_order(order)
    b = _check_beta(beta)
    return _out(special.kve(order, b))


def bessel_k(order: int, beta):
    """Modified Bessel function of the second kind ``K_order(beta)``.

    Raises :class:`BesselUnderflowError` when the value is below the smallest
    normal double (roughly ``beta > 705``).
    """
    order = _check_order(order)
    b = _check_beta(beta)
    val = special.kve(order, b) * np.exp(-b)
    if np.any(val < _TINY):
        raise BesselUnderflowError(
            f"K_{order}(beta) underflows double precision for beta={beta!r}")
    return _out(val)


def _quad_integrand(order: int, beta: float):
    # x = sinh(r/2): cosh r = 1 + 2x^2, dr = 2 dx / sqrt(1 + x^2);
    # then x = y / sqrt(2 beta) turns exp(-2 beta x^2) into exp(-y^2).
    s = np.sqrt(2.0 * beta)

    def f(y):
        x = y / s
        c1 = 1.0 + 2.0 * x * x
        if order == 0:
            c = 1.0
        elif order == 1:
            c = c1
        else:
            c = 2.0 * c1 * c1 - 1.0
        return c * 2.0 * np.exp(-y * y) / np.sqrt(1.0 + x * x) / s

    return f


def bessel_k_quad(order: int, beta: float, scaled: bool = False) -> float:
    """Reference value of ``K_order(beta)`` by adaptive Gauss-Kronrod quadrature."""
    order = _check_order(order)
    beta = float(_check_beta(beta))
    f = _quad_integrand(order, beta)
    # exp(-y^2) < 1e-300 beyond y = 26.3
    total = 0.0
    for a, b in ((0.0, 2.0), (2.0, 6.0), (6.0, 27.0)):
        part, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=5e-14, limit=400)
        total += part
    if scaled:
        return total
    return total * np.exp(-beta)


def ratio_k1k2(beta):
    """``K1(beta) / K2(beta)``, increasing from 0 to 1 on ``(0, inf)``."""
    b = _check_beta(beta)
    return _out(special.kve(1, b) / special.kve(2, b))


def ratio_derivative(beta):
    """Derivative of :func:`ratio_k1k2`: ``3R/beta + R**2 - 1``."""
    b = _check_beta(beta)
    r = special.kve(1, b) / special.kve(2, b)
    return _out(3.0 * r / b + r * r - 1.0)


def _initial_bracket(alpha: float) -> tuple[float, float]:
    # small-beta law R ~ beta/2 and large-beta law R ~ 1 - 3/(2 beta)
    guesses = [2.0 * alpha, 1.5 / (1.0 - alpha)]
    lo = max(min(guesses) * 0.5, BRACKET_MIN)
    hi = min(max(guesses) * 2.0, BRACKET_MAX)
    while ratio_k1k2(lo) > alpha:
        if lo <= BRACKET_MIN:
            raise ConvergenceError(
                f"cannot bracket inverse ratio for alpha={alpha!r} (too close to 0)")
        lo = max(lo * 0.1, BRACKET_MIN)
    while ratio_k1k2(hi) < alpha:
        if hi >= BRACKET_MAX:
            raise ConvergenceError(
                f"cannot bracket inverse ratio for alpha={alpha!r} (too close to 1)")
        hi = min(hi * 10.0, BRACKET_MAX)
    return lo, hi


def _inverse_scalar(alpha: float, tol: float) -> float:
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    lo, hi = _initial_bracket(alpha)
    beta = optimize.brentq(lambda b: ratio_k1k2(b) - alpha, lo, hi,
                           xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=400)
    if abs(ratio_k1k2(beta) - alpha) > tol:
        raise ConvergenceError(
            f"inverse ratio residual {abs(ratio_k1k2(beta) - alpha):.3e} exceeds {tol:.1e}"
            f" for alpha={alpha!r}")
    return beta


def inverse_ratio(alpha, tol: float = 1e-12):
    """Invert ``K1/K2``: return ``beta`` with ``|K1/K2(beta) - alpha| <= tol``.

    Uses a bracket seeded by the two asymptotic laws followed by Brent's
    method; monotonicity of the ratio makes the root unique.
    """
    a = np.asarray(alpha, dtype=float)
    if a.ndim == 0:
        return _inverse_scalar(float(a), tol)
    return np.array([_inverse_scalar(float(x), tol) for x in a.ravel()]).reshape(a.shape)


def m_beta(beta):
    """Normalisation ``M(beta) = int exp(-beta sqrt(1+|p|^2)) dp = 4 pi K2(beta)/beta``."""
    b = _check_beta(beta)
    return _out(4.0 * np.pi * bessel_k(2, b) / b)


def log_m_beta(beta):
    """``ln M(beta)``, finite for any positive beta."""
    b = _check_beta(beta)
    return _out(np.log(4.0 * np.pi * special.kve(2, b) / b) - b)


def psi(beta):
    """Energy per particle of the equilibrium, ``3/beta + K1/K2``."""
    b = _check_beta(beta)
    return _out(3.0 / b + special.kve(1, b) / special.kve(2, b))


def chi(beta):
    """Enthalpy per particle, ``1/beta + psi(beta)``."""
    b = _check_beta(beta)
    return _out(4.0 / b + special.kve(1, b) / special.kve(2, b))


@dataclass(frozen=True)
class BesselEval:
    beta: float
    k0: float
    k1: float
    k2: float

    @property
    def ratio(self) -> float:
        return self.k1 / self.k2


@dataclass(frozen=True)
class ScalarKernels:
    beta: float
    m_beta: float
    psi: float
    chi: float


def bessel_eval(beta: float) -> BesselEval:
    return BesselEval(float(beta), bessel_k(0, beta), bessel_k(1, beta), bessel_k(2, beta))


def scalar_kernels(beta: float) -> ScalarKernels:
    return ScalarKernels(float(beta), m_beta(beta), psi(beta), chi(beta))
