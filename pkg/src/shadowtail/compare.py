"""Baselines that cut a Pareto tail abruptly at H, compared with the smooth dual.

The untruncated law is the shifted Pareto/GPD density

    f(x) = (1/sigma) * ((x - L) / (alpha sigma) + 1) ** (-alpha - 1),  x >= L.

*Hard truncation* renormalises f on [L, H]; the *absorbing barrier* keeps f
on [L, H) and piles the mass beyond H into a point mass at H.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .errors import DomainError
from .numerics import generalized_exponential_integral, integrate_adaptive
from .shadow import ShadowModel, shadow_mean


def _out(value):
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class ParetoSpec:
    alpha: float
    sigma: float
    L: float
    H: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be > 0, got {self.alpha}")
        if not self.sigma > 0:
            raise DomainError(f"sigma must be > 0, got {self.sigma}")
        if not (np.isfinite(self.L) and np.isfinite(self.H) and self.H > self.L):
            raise DomainError(f"need finite L < H, got L={self.L}, H={self.H}")

    @property
    def scale(self) -> float:
        return self.alpha * self.sigma

    @property
    def log_span(self) -> float:
        """log(1 + (H - L) / (alpha sigma)): the support in log-Pareto units."""
        return math.log1p((self.H - self.L) / self.scale)

    @property
    def mass_below_h(self) -> float:
        """F(H) = 1 - (alpha sigma / (alpha sigma + H - L)) ** alpha."""
        return -math.expm1(-self.alpha * self.log_span)


def pareto_pdf(s: ParetoSpec, x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x >= s.L)):
        raise DomainError("pareto_pdf is defined on [L, inf)")
    return _out(np.exp(-(s.alpha + 1.0) * np.log1p((x - s.L) / s.scale)) / s.sigma)


def truncated_pareto_pdf(s: ParetoSpec, x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x >= s.L)) or np.any(~(x <= s.H)):
        raise DomainError("truncated_pareto_pdf is defined on [L, H]")
    return _out(pareto_pdf(s, x) / s.mass_below_h)


def _partial_moment(s: ParetoSpec, p: float) -> float:
    """integral_L^H x^p f(x) dx, over v = log(1 + (x - L)/(alpha sigma))."""
    L, scale, alpha = s.L, s.scale, s.alpha

    def integrand(v):
        x = L + scale * np.expm1(v)
        return x**p * alpha * np.exp(-alpha * v)

    res = integrate_adaptive(integrand, 0.0, s.log_span, tol=1e-13, rtol=1e-13, vectorized=True)
    return res.value


def truncated_pareto_moment(s: ParetoSpec, p: float = 1.0) -> float:
    """Moment of order p >= 1 of the hard-truncated law, by quadrature."""
    if not p >= 1:
        raise DomainError(f"moment order must be >= 1, got {p}")
    return _partial_moment(s, float(p)) / s.mass_below_h


def absorbing_barrier_mean(s: ParetoSpec) -> float:
    """Mean when every realisation beyond H is recorded as H."""
    return _partial_moment(s, 1.0) + s.H * math.exp(-s.alpha * s.log_span)


def soft_to_truncated_ratio(alpha: float, sigma: float, L: float, H: float, u: float | None = None) -> float:
    """The soft-versus-hard truncation ratio r(H, alpha).

    Evaluates to (hard-truncated mean) / (shadow mean), the quantity the
    closed form ``ratio_closed_form`` computes. It falls below one for
    alpha < 1, where the smooth map keeps the mass that truncation discards.
    """
    u = L if u is None else u
    truncated = truncated_pareto_moment(ParetoSpec(alpha, sigma, L, H), 1.0)
    return truncated / shadow_mean(ShadowModel(alpha, sigma, L, H, u))


def ratio_curve(alpha: float, sigma: float, L: float, H_values, u: float | None = None):
    return [(float(H), soft_to_truncated_ratio(alpha, sigma, L, float(H), u)) for H in H_values]


# ---------------------------------------------------------------------------
# closed forms, kept as cross-checks of the quadrature paths
# ---------------------------------------------------------------------------

def truncated_pareto_moment_closed_form(s: ParetoSpec, p: float) -> float:
    """Incomplete-Beta form of the truncated moment.

    alpha e^(-i pi p) (alpha sigma)^alpha (alpha sigma - L)^(p - alpha)
    [B_{H/(L - alpha sigma)}(p+1, -alpha) - B_{L/(L - alpha sigma)}(p+1, -alpha)]
    / ((alpha sigma / (alpha sigma + H - L))^alpha - 1),
    evaluated on principal branches. Valid for L < alpha sigma, where it is
    real; elsewhere the branch choice breaks it and DomainError is raised.
    """
    if not s.L < s.scale:
        raise DomainError("closed form needs L < alpha * sigma")
    a, sc, L, H = (mpmath.mpf(v) for v in (s.alpha, s.scale, s.L, s.H))
    p = mpmath.mpf(p)
    with mpmath.workdps(30):
        incomplete = lambda z: mpmath.betainc(p + 1, -a, 0, z)
        value = (
            a * mpmath.exp(-1j * mpmath.pi * p) * sc**a * mpmath.power(sc - L, p - a)
            * (incomplete(H / (L - sc)) - incomplete(L / (L - sc)))
            / ((sc / (sc + H - L)) ** a - 1)
        )
    return float(mpmath.re(value))


def ratio_closed_form(alpha: float, H: float) -> float:
    """Closed form of r(H, alpha) in incomplete-gamma terms, for sigma = 1 and L = 0."""
    a, h = float(alpha), float(H)
    if a == 1.0:
        raise DomainError("closed form has a removable singularity at alpha = 1")
    e_a = generalized_exponential_integral(a, a / h)
    num = (
        math.exp(-a / h) * (a / h) ** a * (a / (a + h)) ** (-a) * ((a + h) / a) ** (-a)
        * (-(((a + h) / a) ** a) + h + 1.0)
    )
    den = (a - 1.0) * ((a / h) ** a - ((a + h) / h) ** a) * e_a
    return num / den
