"""Nonlinearities of the model: regularized double-well and saturating source.

The potential derivative is the usual cubic ``s^3 - s`` glued C1 to affine
tails outside ``[-K, K]``, which makes it globally Lipschitz with constant
``3K^2 - 1``.  The optional source is the saturating (Michaelis-Menten style)
symport term ``g(s) = k s / (k' + |s|)``, bounded by ``k`` and Lipschitz with
constant ``k/k'``.

``derive_constants`` produces concrete quadratic growth/dissipativity
constants; the branch functions are piecewise polynomials, so each extremum
is located exactly from polynomial roots and the result is re-verified by a
dense scan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import Field

# headroom added to the additive constants so the inequalities hold strictly
# under floating-point evaluation at the touching points
_GAMMA_PAD = 1e-9


@dataclass(frozen=True)
class Symport:
    """Saturating source ``g(s) = k s / (k' + |s|)`` with ``k, k' > 0``."""

    k: float
    kprime: float

    def __post_init__(self):
        if self.k <= 0 or self.kprime <= 0:
            raise ValueError("symport parameters k, k' must be positive")


@dataclass(frozen=True)
class ModelParams:
    """Potential cutoff and source choice, with the derived Lipschitz data."""

    cutoff: float = 1.0
    source: Symport | None = None

    def __post_init__(self):
        if self.cutoff < 1.0:
            raise ValueError(f"cutoff must be >= 1, got {self.cutoff}")

    @property
    def lipschitz_f(self) -> float:
        """Global Lipschitz constant of the potential derivative."""
        return 3.0 * self.cutoff ** 2 - 1.0

    @property
    def lipschitz_g(self) -> float:
        return 0.0 if self.source is None else self.source.k / self.source.kprime

    @property
    def source_bound(self) -> float:
        """Uniform bound on ``|g|``."""
        return 0.0 if self.source is None else self.source.k

    @property
    def curvature_bound(self) -> float:
        """Uniform bound on ``|f''|`` (attained at the gluing points)."""
        return 6.0 * self.cutoff


@dataclass(frozen=True)
class DissipativityConstants:
    """Quadratic growth constants valid on all of R.

    ``F(s) >= gamma1 s^2 - gamma2``, ``F(s) <= gamma3 s^2 + gamma4``,
    ``f(s) s >= gamma5 s^2 - gamma6`` and ``f'(s) >= -gamma7``.
    """

    gamma1: float
    gamma2: float
    gamma3: float
    gamma4: float
    gamma5: float
    gamma6: float
    gamma7: float


def f_eval(s, p: ModelParams):
    """Potential derivative: cubic inside ``[-K, K]``, affine tails outside."""
    s = np.asarray(s, dtype=float)
    K = p.cutoff
    slope = p.lipschitz_f
    out = s ** 3 - s
    out = np.where(s > K, slope * s - 2.0 * K ** 3, out)
    out = np.where(s < -K, slope * s + 2.0 * K ** 3, out)
    return out if out.ndim else float(out)


def f_prime(s, p: ModelParams):
    s = np.asarray(s, dtype=float)
    out = np.where(np.abs(s) <= p.cutoff, 3.0 * s ** 2 - 1.0, p.lipschitz_f)
    return out if out.ndim else float(out)


def F_eval(s, p: ModelParams):
    """Exact piecewise antiderivative of ``f_eval`` with ``F(0) = 0``."""
    s = np.asarray(s, dtype=float)
    K = p.cutoff
    slope = p.lipschitz_f
    mid = s ** 4 / 4.0 - s ** 2 / 2.0
    FK = K ** 4 / 4.0 - K ** 2 / 2.0
    a = np.abs(s)
    tail = FK + slope * (a ** 2 - K ** 2) / 2.0 - 2.0 * K ** 3 * (a - K)
    out = np.where(a <= K, mid, tail)
    return out if out.ndim else float(out)


def g_eval(s, p: ModelParams):
    """Saturating source term; identically zero when no source is configured."""
    s = np.asarray(s, dtype=float)
    if p.source is None:
        out = np.zeros_like(s)
    else:
        out = p.source.k * s / (p.source.kprime + np.abs(s))
    return out if out.ndim else float(out)


def g_prime(s, p: ModelParams):
    s = np.asarray(s, dtype=float)
    if p.source is None:
        out = np.zeros_like(s)
    else:
        out = p.source.k * p.source.kprime / (p.source.kprime + np.abs(s)) ** 2
    return out if out.ndim else float(out)


def apply_f(u: Field, p: ModelParams) -> Field:
    """Pointwise potential derivative at the grid samples."""
    return Field(u.grid, f_eval(u.values, p))


def apply_g(u: Field, p: ModelParams) -> Field:
    """Pointwise source term at the grid samples."""
    return Field(u.grid, g_eval(u.values, p))


# -- exact extrema of the piecewise-polynomial inequalities ------------------


def _branches_f_times_s(K: float):
    slope = 3.0 * K ** 2 - 1.0
    # coefficients in ascending order for numpy.polynomial
    return [
        ((-np.inf, -K), np.array([0.0, 2.0 * K ** 3, slope])),  # (slope*s + 2K^3)*s
        ((-K, K), np.array([0.0, 0.0, -1.0, 0.0, 1.0])),  # s^4 - s^2
        ((K, np.inf), np.array([0.0, -2.0 * K ** 3, slope])),  # (slope*s - 2K^3)*s
    ]


def _branches_F(K: float):
    slope = 3.0 * K ** 2 - 1.0
    FK = K ** 4 / 4.0 - K ** 2 / 2.0
    c0 = FK - slope * K ** 2 / 2.0 + 2.0 * K ** 4
    return [
        ((-np.inf, -K), np.array([c0, 2.0 * K ** 3, slope / 2.0])),
        ((-K, K), np.array([0.0, 0.0, -0.5, 0.0, 0.25])),
        ((K, np.inf), np.array([c0, -2.0 * K ** 3, slope / 2.0])),
    ]


def _piecewise_inf(branches) -> float:
    """Exact infimum over R of a piecewise polynomial given by branches.

    Each branch is ``((lo, hi), coeffs)`` with ascending coefficients; the
    candidate minimizers are the real stationary points inside the branch
    and its finite endpoints.  Branches that escape to minus infinity make
    the infimum ``-inf``.
    """
    best = np.inf
    for (lo, hi), coeffs in branches:
        poly = np.polynomial.Polynomial(coeffs).trim(tol=0.0)
        deg = poly.degree() if np.any(poly.coef) else 0
        lead = poly.coef[-1]
        if deg >= 1:
            if not np.isfinite(hi) and lead < 0:
                return -np.inf
            if not np.isfinite(lo) and lead * (-1.0) ** deg < 0:
                return -np.inf
        if deg == 0:
            best = min(best, float(poly.coef[0]))
            continue
        cands = []
        for r in poly.deriv().roots() if deg >= 2 else []:
            if abs(r.imag) < 1e-12 and lo < r.real < hi:
                cands.append(r.real)
        if np.isfinite(lo):
            cands.append(lo)
        if np.isfinite(hi):
            cands.append(hi)
        if cands:
            best = min(best, float(np.min(poly(np.array(cands)))))
    return best


def _shift(branches, gamma: float):
    """Branches of ``p(s) - gamma * s^2``."""
    out = []
    for (lo, hi), coeffs in branches:
        c = coeffs.copy()
        if len(c) < 3:
            c = np.pad(c, (0, 3 - len(c)))
        c[2] -= gamma
        out.append(((lo, hi), c))
    return out


def _verify(fn, lower, samples) -> float:
    """Worst signed slack of ``fn(s) >= lower(s)`` over the sample set."""
    return float(np.min(fn(samples) - lower(samples)))


def derive_constants(p: ModelParams, check_points: int = 200_000) -> DissipativityConstants:
    """Concrete growth/dissipativity constants for the configured potential.

    The quadratic coefficients are fixed a priori (they only need to sit
    strictly below the affine-tail growth, which is at least 2 for K >= 1);
    the additive constants are the exact worst-case deficits of the shifted
    piecewise polynomials.  Every inequality is then re-verified on a dense
    sample of ``check_points`` points spanning the gluing region and tails.
    """
    K = p.cutoff
    slope = p.lipschitz_f

    gamma5 = 1.0
    gamma6 = max(0.0, -_piecewise_inf(_shift(_branches_f_times_s(K), gamma5))) + _GAMMA_PAD
    gamma1 = 0.25
    gamma2 = max(0.0, -_piecewise_inf(_shift(_branches_F(K), gamma1))) + _GAMMA_PAD
    gamma3 = slope / 2.0
    neg_F = [((lo, hi), -c) for (lo, hi), c in _branches_F(K)]
    gamma4 = max(0.0, -_piecewise_inf(_shift(neg_F, -gamma3))) + _GAMMA_PAD
    gamma7 = 1.0  # min f' = f'(0) = -1 for every cutoff

    s = np.linspace(-10.0 * K, 10.0 * K, check_points)
    checks = (
        _verify(lambda x: F_eval(x, p), lambda x: gamma1 * x ** 2 - gamma2, s),
        _verify(lambda x: gamma3 * x ** 2 + gamma4, lambda x: F_eval(x, p), s),
        _verify(lambda x: f_eval(x, p) * x, lambda x: gamma5 * x ** 2 - gamma6, s),
        _verify(lambda x: f_prime(x, p), lambda x: np.full_like(x, -gamma7), s),
    )
    if min(checks) < 0:
        raise AssertionError(f"dissipativity constants failed the scan: {checks}")
    return DissipativityConstants(gamma1, gamma2, gamma3, gamma4, gamma5, gamma6, gamma7)
