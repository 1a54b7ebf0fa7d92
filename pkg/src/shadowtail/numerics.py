"""Special functions and adaptive quadrature.

Everything here is a pure function of its arguments. The incomplete gamma
routines accept any real shape parameter, including the negative values that
appear when the tail index exceeds one, and ``integrate_adaptive`` is used
both as a production path (higher moments) and as the verification oracle
for the closed forms elsewhere in the package.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import zeta

from .errors import ConvergenceError, DomainError

EULER_GAMMA = 0.57721566490153286061

_CF_EPS = 4.5e-16  # two ulps: delta can settle one ulp away from 1
_CF_TINY = 1e-300
_CF_MAX_ITER = 2000
# below this |shape| the a -> 0 limits are exact to double precision and
# products such as a * log(x) would turn subnormal
_TINY_SHAPE = 1e-100

# zeta(k) for k = 2..63, used by the log-gamma series around 1
_ZETA = zeta(np.arange(2, 64, dtype=float), 1.0)


# ---------------------------------------------------------------------------
# incomplete gamma
# ---------------------------------------------------------------------------

def _lgamma1p_small(a: float) -> float:
    """log Gamma(1 + a) for |a| <= 0.5 by its Taylor series."""
    total = -EULER_GAMMA * a
    power = -a
    for k, zk in enumerate(_ZETA, start=2):
        power *= -a
        term = zk * power / k
        total += term
        if abs(term) < 1e-18 * max(abs(total), 1e-300):
            break
    return total


def _gam1(a: float) -> float:
    """(Gamma(1 + a) - 1) / a for -1 < a < 1, with the a -> 0 limit."""
    if abs(a) < _TINY_SHAPE:
        return -EULER_GAMMA
    if abs(a) <= 0.5:
        return math.expm1(_lgamma1p_small(a)) / a
    return (math.gamma(1.0 + a) - 1.0) / a


def _gamma_small_x(a: float, x: float) -> float:
    """Gamma(a, x) for -1 < a < 1 and 0 < x < 2.

    Uses Gamma(a) - x^a/a = gam1(a) - expm1(a log x)/a, which stays
    accurate as a -> 0 (where it becomes the E1 series).
    """
    lx = math.log(x)
    head = _gam1(a) - (math.expm1(a * lx) / a if abs(a) >= _TINY_SHAPE else lx)
    series = 0.0
    term = 1.0
    for k in range(1, 200):
        term *= -x / k
        contrib = term / (a + k)
        series += contrib
        if abs(contrib) < 1e-17 * abs(series):
            break
    return head - math.exp(a * lx) * series


def _gamma_cf_scaled(s: float, x: float) -> float:
    """Legendre continued fraction K with Gamma(s, x) = x^s e^-x K.

    Modified Lentz evaluation; converges quickly for x >= max(1, s + 1).
    """
    b = x + 1.0 - s
    c = 1.0 / _CF_TINY
    d = 1.0 / b
    h = d
    for i in range(1, _CF_MAX_ITER):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = b + an / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ConvergenceError(f"incomplete gamma continued fraction stalled at s={s}, x={x}")


def _use_cf(s: float, x: float) -> bool:
    return x >= 1.0 and x >= s + 1.0


def _exp(arg: float) -> float:
    try:
        return math.exp(arg)
    except OverflowError:
        return math.inf


def _scale_back(log_factor: float, r: float) -> float:
    """r * exp(log_factor), folding r into the exponent when the factor overflows."""
    if log_factor < 700.0 or r <= 0.0:
        return _exp(log_factor) * r
    return _exp(log_factor + math.log(r))


def _base_gamma(a0: float, x: float) -> float:
    """Gamma(a0, x) for 0 <= a0 < 1."""
    if _use_cf(a0, x):
        return _exp(a0 * math.log(x) - x) * _gamma_cf_scaled(a0, x)
    return _gamma_small_x(a0, x)


def _scaled_upper_gamma(s: float, x: float) -> float:
    """R(s, x) = Gamma(s, x) e^x x^-s for s < 1, x > 0, without overflow.

    Negative s is reached from a base shape in [-1/2, 1/2) by the downward
    recurrence R(a) = (x R(a + 1) - 1) / a. Keeping the base away from the
    poles at 0 and -1 avoids cancellation there, and every divisor of the
    recurrence has |a| >= 1/2.
    """
    if _use_cf(s, x):
        return _gamma_cf_scaled(s, x)
    n = math.floor(s + 0.5) if s < 0.0 else 0
    a = s - n
    lx = math.log(x)
    base = _gamma_small_x(a, x) if a <= 0.0 else _base_gamma(a, x)
    r = base * math.exp(x - a * lx)
    for _ in range(-n):
        a -= 1.0
        r = (x * r - 1.0) / a
    return r


def upper_incomplete_gamma(s: float, x: float) -> float:
    """Upper incomplete gamma function Gamma(s, x) for real s.

    ``x = 0`` is accepted only for ``s > 0`` (the complete gamma function).
    Results beyond the double range come back as ``inf`` or ``0.0``.
    """
    s = float(s)
    x = float(x)
    if math.isnan(s) or math.isnan(x):
        raise DomainError("upper_incomplete_gamma: NaN argument")
    if x < 0.0:
        raise DomainError(f"upper_incomplete_gamma: x must be >= 0, got {x}")
    if x == 0.0:
        if s <= 0.0:
            raise DomainError(f"upper_incomplete_gamma: integral diverges at x=0 for s={s}")
        return math.gamma(s)
    if math.isinf(x):
        return 0.0
    if _use_cf(s, x):
        return _scale_back(s * math.log(x) - x, _gamma_cf_scaled(s, x))
    if s >= 0.0:
        # upward recurrence from [0, 1): every term is positive
        n = math.floor(s)
        a = s - n
        g = _base_gamma(a, x)
        lx = math.log(x)
        for _ in range(int(n)):
            g = a * g + math.exp(a * lx - x)
            a += 1.0
        return g
    return _scale_back(s * math.log(x) - x, _scaled_upper_gamma(s, x))


def gamma_term(alpha: float, x: float) -> float:
    """x^alpha e^x Gamma(1 - alpha, x) for alpha > 0, x > 0.

    The product is O(1) (it lies in (0, 1)) even when its factors over- or
    underflow, e.g. x ~ 1e-12 with alpha > 1.
    """
    if not alpha > 0.0:
        raise DomainError(f"gamma_term: alpha must be > 0, got {alpha}")
    if not x > 0.0:
        raise DomainError(f"gamma_term: x must be > 0, got {x}")
    return x * _scaled_upper_gamma(1.0 - alpha, x)


def generalized_exponential_integral(nu: float, x: float) -> float:
    """E_nu(x) = integral_1^inf e^(-x t) t^(-nu) dt, evaluated as x^(nu-1) Gamma(1-nu, x)."""
    nu = float(nu)
    x = float(x)
    if not x > 0.0:
        raise DomainError(f"generalized_exponential_integral: x must be > 0, got {x}")
    if math.isinf(x):
        return 0.0
    s = 1.0 - nu
    if s < 1.0 or _use_cf(s, x):
        # x^(nu-1) * x^s e^-x R = e^-x R
        r = _gamma_cf_scaled(s, x) if _use_cf(s, x) else _scaled_upper_gamma(s, x)
        return math.exp(-x) * r
    return _exp((nu - 1.0) * math.log(x)) * upper_incomplete_gamma(s, x)


# ---------------------------------------------------------------------------
# adaptive Gauss-Kronrod quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_error_estimate: float
    evaluations: int

    def __post_init__(self):
        if not self.abs_error_estimate >= 0.0:
            raise ValueError("abs_error_estimate must be >= 0")
        if self.evaluations < 1:
            raise ValueError("evaluations must be >= 1")


# 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15)
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])  # 15 nodes, ascending
_KRONROD_W = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GAUSS_W = np.zeros(15)
_GAUSS_W[[1, 3, 5]] = _WG[:3]
_GAUSS_W[[9, 11, 13]] = _WG[2::-1]
_GAUSS_W[7] = _WG[3]
_EPMACH = np.finfo(float).eps
_UFLOW = np.finfo(float).tiny


def _gk15(g, lo: float, hi: float, vectorized: bool):
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    xs = center + half * _NODES
    if vectorized:
        fx = np.asarray(g(xs), dtype=float)
    else:
        fx = np.array([g(float(t)) for t in xs], dtype=float)
    if not np.all(np.isfinite(fx)):
        bad = xs[~np.isfinite(fx)][0]
        raise ConvergenceError(f"integrand is not finite at x={bad!r}")
    resk = float(np.dot(_KRONROD_W, fx))
    resg = float(np.dot(_GAUSS_W, fx))
    reskh = 0.5 * resk
    resabs = float(np.dot(_KRONROD_W, np.abs(fx))) * abs(half)
    resasc = float(np.dot(_KRONROD_W, np.abs(fx - reskh))) * abs(half)
    value = resk * half
    err = abs((resk - resg) * half)
    if resasc != 0.0 and err != 0.0:
        err = resasc * min(1.0, (200.0 * err / resasc) ** 1.5)
    at_floor = False
    if resabs > _UFLOW / (50.0 * _EPMACH):
        floor = 50.0 * _EPMACH * resabs
        at_floor = err <= floor
        err = max(floor, err)
    return value, err, at_floor


def integrate_adaptive(
    f: Callable,
    a: float,
    b: float,
    tol: float = 1e-10,
    rtol: float | None = None,
    points: Sequence[float] = (),
    max_evaluations: int = 10**6,
    vectorized: bool = False,
) -> QuadratureResult:
    """Integrate ``f`` over [a, b] by globally adaptive Gauss-Kronrod (7/15).

    ``b`` may be ``math.inf``; the half line is mapped to [0, 1) by
    t = a + x / (1 - x). Stops once the summed error estimate is below
    ``max(tol, rtol * |value|)`` (``rtol`` defaults to ``tol``). ``points``
    are interior breakpoints, useful when the integrand has structure at
    scales far below b - a. Raises ConvergenceError when the evaluation
    budget runs out.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if rtol is None:
        rtol = tol
    a = float(a)
    b = float(b)
    if math.isnan(a) or math.isnan(b) or math.isinf(a):
        raise ValueError("lower limit must be finite")
    if b < a:
        r = integrate_adaptive(f, b, a, tol, rtol, points, max_evaluations, vectorized)
        return QuadratureResult(-r.value, r.abs_error_estimate, r.evaluations)

    finite_points = sorted(float(p) for p in points if a < p < math.inf)
    if math.isinf(b) and finite_points:
        # integrate up to the last breakpoint directly; mapping it into
        # [0, 1) would squeeze far-out features below the node spacing
        p_hi = finite_points[-1]
        head = integrate_adaptive(f, a, p_hi, 0.5 * tol, rtol, finite_points[:-1], max_evaluations, vectorized)
        tail = integrate_adaptive(
            f, p_hi, b, 0.5 * tol, rtol, (), max(max_evaluations - head.evaluations, 15), vectorized
        )
        return QuadratureResult(
            head.value + tail.value,
            head.abs_error_estimate + tail.abs_error_estimate,
            head.evaluations + tail.evaluations,
        )
    if math.isinf(b):
        def g(x):
            # deep bisection towards x = 1 can round a node onto 1 itself
            one_minus = np.maximum(1.0 - x, _EPMACH / 2) if vectorized else max(1.0 - x, _EPMACH / 2)
            return f(a + (1.0 - one_minus) / one_minus) / (one_minus * one_minus)
        cuts = []
        lo, hi = 0.0, 1.0
    else:
        g = f
        cuts = sorted(p for p in points if a < p < b)
        lo, hi = a, b

    edges = [lo, *cuts, hi]
    heap = []
    frozen_value = []
    frozen_err = []
    evaluations = 0
    total = 0.0
    total_err = 0.0
    for left, right in zip(edges[:-1], edges[1:]):
        if right <= left:
            continue
        v, e, flat = _gk15(g, left, right, vectorized)
        evaluations += 15
        heapq.heappush(heap, (-e, left, right, v, flat))
        total += v
        total_err += e
    if not heap:
        return QuadratureResult(0.0, 0.0, max(evaluations, 1))

    def converged():
        return total_err <= max(tol, rtol * abs(total))

    while heap and not converged():
        if evaluations >= max_evaluations:
            raise ConvergenceError(
                f"quadrature did not converge within {max_evaluations} evaluations "
                f"(value={total!r}, error estimate={total_err!r})"
            )
        neg_e, left, right, v, flat = heapq.heappop(heap)
        mid = 0.5 * (left + right)
        if flat or not left < mid < right:
            # error is at the rounding floor or the interval cannot shrink
            frozen_value.append(v)
            frozen_err.append(-neg_e)
            continue
        v1, e1, flat1 = _gk15(g, left, mid, vectorized)
        v2, e2, flat2 = _gk15(g, mid, right, vectorized)
        evaluations += 30
        heapq.heappush(heap, (-e1, left, mid, v1, flat1))
        heapq.heappush(heap, (-e2, mid, right, v2, flat2))
        total += v1 + v2 - v
        total_err += e1 + e2 + neg_e
        if converged() or not heap:
            # resynchronise the running sums before trusting them
            total = math.fsum([item[3] for item in heap] + frozen_value)
            total_err = math.fsum([-item[0] for item in heap] + frozen_err)

    total = math.fsum([item[3] for item in heap] + frozen_value)
    total_err = math.fsum([-item[0] for item in heap] + frozen_err)
    return QuadratureResult(total, total_err, evaluations)
