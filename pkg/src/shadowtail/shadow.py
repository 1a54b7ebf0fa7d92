"""Risk measures of a bounded variable whose dual tail is Generalized Pareto.

Above the threshold ``u`` the dual excess W = phi(Y) - phi(u) is GPD(1/alpha,
sigma). Writing c = alpha * sigma / H and t(y) = log((H - u) / (H - y)), so
that W = H * t, the law of Y on [u, H) is

    F(y) = 1 - (1 + t(y) / c) ** (-alpha)
    f(y) = H / (sigma (H - y)) * (1 + t(y) / c) ** (-alpha - 1)

and its conditional mean, quantiles and mean excess have closed forms in
terms of x^alpha e^x Gamma(1 - alpha, x) (see ``numerics.gamma_term``).
The mean is finite for every alpha > 0, although the dual variable has an
infinite mean whenever alpha <= 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dual import DualTransform
from .errors import DomainError
from .gpd import XI_ZERO, GpdParams, moment_exists
from .numerics import gamma_term, integrate_adaptive


def _out(value):
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class ShadowModel:
    """Tail index ``alpha``, GPD scale ``sigma``, support [L, H], threshold ``u``."""

    alpha: float
    sigma: float
    L: float
    H: float
    u: float

    def __post_init__(self):
        for name in ("alpha", "sigma", "L", "H", "u"):
            if not np.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if not self.alpha > 0:
            raise DomainError(f"alpha must be > 0, got {self.alpha}")
        if not self.sigma > 0:
            raise DomainError(f"sigma must be > 0, got {self.sigma}")
        if not self.H > 0:
            raise DomainError(f"upper bound H must be positive, got {self.H}")
        if not self.L <= self.u < self.H:
            raise DomainError(f"need L <= u < H, got L={self.L}, u={self.u}, H={self.H}")

    @property
    def xi(self) -> float:
        return 1.0 / self.alpha

    @property
    def c(self) -> float:
        """alpha * sigma / H, the incomplete-gamma argument at the threshold."""
        return self.alpha * self.sigma / self.H

    @property
    def transform(self) -> DualTransform:
        return DualTransform(self.L, self.H)

    @property
    def dual_params(self) -> GpdParams:
        return GpdParams(self.xi, self.sigma)


@dataclass(frozen=True)
class RiskMeasures:
    shadow_mean: float
    var_levels: list[tuple[float, float]] = field(default_factory=list)
    es_levels: list[tuple[float, float]] = field(default_factory=list)
    dual_mean_finite: bool = False


def _log_gap(m: ShadowModel, y: np.ndarray) -> np.ndarray:
    """t(y) = log((H - u)/(H - y)) >= 0, accurate at both ends of [u, H)."""
    span = m.H - m.u
    with np.errstate(divide="ignore"):
        near_u = -np.log1p(-(y - m.u) / span)
        near_h = np.log(span) - np.log(m.H - y)
    return np.where(y - m.u < m.H - y, near_u, near_h)


def _check_y(m: ShadowModel, y: np.ndarray, what: str) -> None:
    if np.any(~(y >= m.u)) or np.any(~(y < m.H)):
        raise DomainError(f"{what} is defined on [{m.u}, {m.H})")


def shadow_pdf(m: ShadowModel, y):
    y = np.asarray(y, dtype=float)
    _check_y(m, y, "shadow_pdf")
    t = _log_gap(m, y)
    return _out(m.H / (m.sigma * (m.H - y)) * np.exp(-(m.alpha + 1.0) * np.log1p(t / m.c)))


def shadow_cdf(m: ShadowModel, y):
    y = np.asarray(y, dtype=float)
    _check_y(m, y, "shadow_cdf")
    return _out(-np.expm1(-m.alpha * np.log1p(_log_gap(m, y) / m.c)))


def shadow_sf(m: ShadowModel, y):
    """P(Y > y | Y > u)."""
    y = np.asarray(y, dtype=float)
    _check_y(m, y, "shadow_sf")
    return _out(np.exp(-m.alpha * np.log1p(_log_gap(m, y) / m.c)))


def _check_level(p: np.ndarray, lo_open: bool = False) -> None:
    ok_lo = (p > 0) if lo_open else (p >= 0)
    if np.any(~ok_lo) or np.any(~(p < 1)):
        interval = "(0, 1)" if lo_open else "[0, 1)"
        raise DomainError(f"probability level must lie in {interval}")


def _quantile_parts(m: ShadowModel, p: np.ndarray):
    """(VaR_p, H - VaR_p, gamma(p)) with gamma(p) = c (1 - p)^(-1/alpha)."""
    # gamma(p) - c, kept separate from c so that tiny values survive
    excess = m.c * np.expm1(-np.log1p(-p) / m.alpha)
    gap = (m.H - m.u) * np.exp(-excess)
    var = m.u - (m.H - m.u) * np.expm1(-excess)
    # levels so close to 1 that VaR rounds onto H are pinned just below it
    var = np.minimum(var, np.nextafter(m.H, -np.inf))
    return var, gap, m.c + excess


def shadow_quantile(m: ShadowModel, p):
    """Quantile of Y given Y > u; ``p = 0`` gives exactly ``u``."""
    p = np.asarray(p, dtype=float)
    _check_level(p)
    return _out(_quantile_parts(m, p)[0])


def shadow_mean(m: ShadowModel) -> float:
    """E[Y | Y > u] = u + (H - u) * gamma_term(alpha, alpha sigma / H)."""
    return m.u + (m.H - m.u) * gamma_term(m.alpha, m.c)


def mean_excess(m: ShadowModel, v: float) -> float:
    """E[Y - v | Y > v] for u <= v < H.

    The excess of the dual over phi(v) is again GPD with scale
    sigma + (phi(v) - phi(u)) / alpha, which turns the result into
    (H - v) * gamma_term(alpha, c + t(v)).
    """
    v = float(v)
    _check_y(m, np.asarray(v), "mean_excess")
    t = float(_log_gap(m, np.asarray(v)))
    return (m.H - v) * gamma_term(m.alpha, m.c + t)


def expected_shortfall(m: ShadowModel, p: float) -> float:
    """ES_p = VaR_p + mean_excess(VaR_p) for 0 < p < 1."""
    p_arr = np.asarray(float(p))
    _check_level(p_arr, lo_open=True)
    var, gap, g = (float(x) for x in _quantile_parts(m, p_arr))
    # mean_excess(VaR_p) = (H - VaR_p) gamma_term(alpha, gamma(p)), using the
    # exact gap instead of re-deriving it from the rounded VaR
    es = var + gap * gamma_term(m.alpha, g)
    return min(es, float(np.nextafter(m.H, -np.inf)))


def shadow_moment(m: ShadowModel, order: int, tol: float = 1e-11) -> float:
    """E[Y**order | Y > u] by adaptive quadrature.

    Integrates over s = log(1 + W / (alpha sigma)), which carries density
    alpha e^(-alpha s) and maps to y = u - (H - u) expm1(-c expm1(s)). The
    integrand is smooth on that scale for every H / sigma.
    """
    if int(order) != order or order < 1:
        raise DomainError(f"moment order must be an integer >= 1, got {order}")
    k = int(order)
    span, c, alpha = m.H - m.u, m.c, m.alpha

    def integrand(s):
        with np.errstate(over="ignore"):
            y = m.u - span * np.expm1(-c * np.expm1(s))
        return y**k * alpha * np.exp(-alpha * s)

    res = integrate_adaptive(integrand, 0.0, math.inf, tol=tol, rtol=tol, vectorized=True)
    return res.value


def h_sensitivity(alpha: float, sigma: float, L: float, u: float, H_grid: Sequence[float]):
    """Shadow mean as a function of the (uncertain) upper bound."""
    out = []
    for H in H_grid:
        H = float(H)
        if not H > u:
            raise DomainError(f"every H in the grid must exceed u={u}, got {H}")
        out.append((H, shadow_mean(ShadowModel(alpha, sigma, L, H, u))))
    return out


def risk_measures(
    m: ShadowModel, var_levels: Sequence[float] = (), es_levels: Sequence[float] = ()
) -> RiskMeasures:
    return RiskMeasures(
        shadow_mean=shadow_mean(m),
        var_levels=[(float(p), shadow_quantile(m, float(p))) for p in var_levels],
        es_levels=[(float(p), expected_shortfall(m, float(p))) for p in es_levels],
        dual_mean_finite=moment_exists(m.dual_params, 1),
    )


def shadow_log_likelihood(xi: float, sigma: float, u: float, H: float, y) -> float:
    """Log-likelihood of observations y in (u, H) under the density f above.

    Parameterised by the dual shape xi so that it can be maximised over the
    same parameter space as the GPD likelihood; alpha = 1/xi.
    """
    y = np.asarray(y, dtype=float)
    if not sigma > 0:
        return -math.inf
    span = H - u
    dist = H - y
    with np.errstate(divide="ignore"):
        t = np.where(y - u < dist, -np.log1p(-(y - u) / span), np.log(span) - np.log(dist))
    base = y.size * (math.log(H) - math.log(sigma)) - float(np.sum(np.log(dist)))
    if abs(xi) < XI_ZERO:
        return base - H * float(np.sum(t)) / sigma
    arg = xi * H * t / sigma
    if arg.min() <= -1.0:
        return -math.inf
    return base - (1.0 / xi + 1.0) * float(np.sum(np.log1p(arg)))
