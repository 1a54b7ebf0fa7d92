"""Generalized Pareto distribution: evaluation and fitting of threshold excesses.

The GPD with shape ``xi`` and scale ``sigma`` has

    F(w) = 1 - (1 + xi w / sigma) ** (-1 / xi)     (xi != 0)
    F(w) = 1 - exp(-w / sigma)                      (xi == 0)

for w >= 0 (and w <= -sigma / xi when xi < 0). Shapes with |xi| < 1e-8 are
evaluated on the exponential branch.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import ConvergenceError, DegenerateSampleError, DomainError, InsufficientDataError

XI_ZERO = 1e-8
XI_MIN = -0.99
XI_MAX = 10.0


def _out(value):
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class GpdParams:
    xi: float
    sigma: float

    def __post_init__(self):
        if not (np.isfinite(self.xi) and np.isfinite(self.sigma)):
            raise DomainError("GPD parameters must be finite")
        if not self.sigma > 0:
            raise DomainError(f"GPD scale must be > 0, got {self.sigma}")

    @property
    def alpha(self) -> float:
        """Tail index 1/xi; only defined for a power-law tail (xi > 0)."""
        if not self.xi > 0:
            raise DomainError(f"tail index alpha = 1/xi needs xi > 0, got xi={self.xi}")
        return 1.0 / self.xi

    @property
    def right_endpoint(self) -> float:
        return math.inf if self.xi >= 0 else -self.sigma / self.xi


class FitMethod(str, enum.Enum):
    MLE = "MLE"
    MOMENTS = "Moments"


@dataclass(frozen=True)
class GpdFit:
    params: GpdParams
    threshold: float
    n_excesses: int
    log_likelihood: float
    method: FitMethod
    std_errors: tuple[float, float] | None = None
    unreliable: bool = False


def _check_support(p: GpdParams, w: np.ndarray) -> None:
    if np.any(~(w >= 0)):
        raise DomainError("GPD argument must be >= 0")
    if p.xi < 0 and np.any(w > p.right_endpoint):
        raise DomainError(f"GPD argument beyond right endpoint {p.right_endpoint}")


def gpd_cdf(p: GpdParams, w):
    w = np.asarray(w, dtype=float)
    _check_support(p, w)
    if abs(p.xi) < XI_ZERO:
        return _out(-np.expm1(-w / p.sigma))
    return _out(-np.expm1(-np.log1p(p.xi * w / p.sigma) / p.xi))


def gpd_sf(p: GpdParams, w):
    """Survival function 1 - F(w), accurate far into the tail."""
    w = np.asarray(w, dtype=float)
    _check_support(p, w)
    if abs(p.xi) < XI_ZERO:
        return _out(np.exp(-w / p.sigma))
    return _out(np.exp(-np.log1p(p.xi * w / p.sigma) / p.xi))


def gpd_pdf(p: GpdParams, w):
    w = np.asarray(w, dtype=float)
    _check_support(p, w)
    if abs(p.xi) < XI_ZERO:
        return _out(np.exp(-w / p.sigma) / p.sigma)
    with np.errstate(divide="ignore"):
        return _out(np.exp(-(1.0 / p.xi + 1.0) * np.log1p(p.xi * w / p.sigma)) / p.sigma)


def gpd_quantile(p: GpdParams, q):
    q = np.asarray(q, dtype=float)
    if np.any(~(q >= 0)) or np.any(~(q < 1)):
        raise DomainError("GPD quantile level must lie in [0, 1)")
    log_tail = np.log1p(-q)
    if abs(p.xi) < XI_ZERO:
        return _out(-p.sigma * log_tail)
    return _out(p.sigma * np.expm1(-p.xi * log_tail) / p.xi)


def moment_exists(p: GpdParams, order: float) -> bool:
    """True iff E[W**order] is finite, i.e. xi < 1/order."""
    if not order > 0:
        raise DomainError(f"moment order must be > 0, got {order}")
    return p.xi < 1.0 / order


def gpd_log_likelihood(xi: float, sigma: float, w: np.ndarray) -> float:
    """Log-likelihood of excesses ``w``; -inf outside the parameter space or support."""
    if not sigma > 0 or not np.isfinite(xi):
        return -math.inf
    n = w.size
    if abs(xi) < XI_ZERO:
        return -n * math.log(sigma) - float(np.sum(w)) / sigma
    arg = xi * w / sigma
    if arg.min() <= -1.0:
        return -math.inf
    return -n * math.log(sigma) - (1.0 / xi + 1.0) * float(np.sum(np.log1p(arg)))


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def _clean_excesses(excesses, minimum: int) -> np.ndarray:
    w = np.sort(np.asarray(excesses, dtype=float).ravel())
    if w.size < minimum:
        raise InsufficientDataError(f"need at least {minimum} excesses, got {w.size}")
    if not np.all(np.isfinite(w)):
        raise DomainError("excesses must be finite")
    if w[0] <= 0:
        raise DomainError("excesses must be strictly positive")
    return w


def _moment_estimates(w: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(w))
    var = float(np.var(w, ddof=1))
    if not var > 0:
        raise DegenerateSampleError("excesses have zero variance")
    ratio = mean * mean / var
    return 0.5 * (1.0 - ratio), 0.5 * mean * (ratio + 1.0)


def fit_moments(excesses: Sequence[float], threshold: float = 0.0) -> GpdFit:
    """Method-of-moments GPD fit.

    Flagged unreliable when the fourth moment of the fitted law does not
    exist (xi >= 1/4): the sample variance then has no finite variance of
    its own and the estimator is no longer root-n consistent.
    """
    w = _clean_excesses(excesses, 2)
    xi, sigma = _moment_estimates(w)
    params = GpdParams(xi, sigma)
    return GpdFit(
        params=params,
        threshold=float(threshold),
        n_excesses=int(w.size),
        log_likelihood=gpd_log_likelihood(xi, sigma, w),
        method=FitMethod.MOMENTS,
        unreliable=not moment_exists(params, 4),
    )


def _numeric_gradient(f: Callable, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        g[i] = (f(x + e) - f(x - e)) / (2 * h[i])
    return g


def _numeric_hessian(f: Callable, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    k = x.size
    hess = np.empty((k, k))
    f0 = f(x)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        hess[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = h[j]
            hess[i, j] = hess[j, i] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4 * h[i] * h[j])
    return hess


def maximize_log_likelihood(
    loglik: Callable[[float, float], float],
    starts: Sequence[tuple[float, float]],
) -> tuple[float, float, float]:
    """Maximise ``loglik(xi, sigma)`` over xi in (-0.99, 10], sigma > 0.

    Nelder-Mead on (xi, log sigma) from every start, then Newton polishing of
    the best point with central-difference derivatives. Returns
    ``(xi, sigma, loglik)``.
    """

    def objective(theta):
        xi, log_sigma = theta
        if not (XI_MIN < xi <= XI_MAX) or not np.isfinite(log_sigma):
            return -math.inf
        return loglik(float(xi), math.exp(log_sigma))

    def neg(theta):
        v = objective(theta)
        return math.inf if not np.isfinite(v) else -v

    best_theta, best_val = None, -math.inf
    for xi0, sigma0 in starts:
        theta0 = np.array([xi0, math.log(sigma0)])
        f0 = objective(theta0)
        if not np.isfinite(f0):
            continue
        res = minimize(
            neg, theta0, method="Nelder-Mead",
            options={"xatol": 1e-8, "fatol": 1e-12 * max(1.0, abs(f0)), "maxiter": 4000},
        )
        val = -res.fun
        if np.isfinite(val) and val > best_val:
            best_theta, best_val = np.asarray(res.x, dtype=float), val
    if best_theta is None:
        raise ConvergenceError("likelihood is not finite at any starting point")

    theta, val = best_theta, best_val
    h = np.array([1e-5, 1e-5])
    for _ in range(30):
        grad = _numeric_gradient(objective, theta, h)
        hess = _numeric_hessian(objective, theta, np.array([1e-4, 1e-4]))
        if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
            break
        if not (hess[0, 0] < 0 and np.linalg.det(hess) > 0):
            break
        step = -np.linalg.solve(hess, grad)
        accepted = False
        for _ in range(30):
            cand = theta + step
            cand_val = objective(cand)
            if np.isfinite(cand_val) and cand_val >= val - 1e-12 * abs(val):
                accepted = True
                break
            step = step / 2
        if not accepted:
            break
        theta, val = cand, cand_val
        if np.max(np.abs(step)) < 1e-12:
            break
    if not np.isfinite(val):
        raise ConvergenceError("likelihood maximisation failed")
    return float(theta[0]), float(math.exp(theta[1])), float(objective(theta))


def _mle_starts(w: np.ndarray) -> list[tuple[float, float]]:
    try:
        xi_m, _ = _moment_estimates(w)
    except DegenerateSampleError:
        xi_m = 0.1
    median = float(np.median(w))
    w_max = float(w[-1])
    starts = []
    for offset in (0.0, -0.5, 0.5, 1.0, 2.0):
        xi0 = min(max(xi_m + offset, -0.9), 9.0)
        if abs(xi0) < 1e-6:
            sigma0 = median / math.log(2.0)
        else:
            sigma0 = median * xi0 / math.expm1(xi0 * math.log(2.0))
        if xi0 < 0:
            sigma0 = max(sigma0, -xi0 * w_max * 1.01)
        starts.append((xi0, sigma0))
    return starts


def observed_std_errors(
    loglik: Callable[[float, float], float], xi: float, sigma: float
) -> tuple[float, float] | None:
    """Standard errors of (xi, sigma) from the inverse observed information."""
    if not xi > -0.5:
        return None
    f = lambda th: loglik(float(th[0]), float(th[1]))
    x = np.array([xi, sigma])
    h = np.array([1e-4 * max(1.0, abs(xi)), 1e-4 * sigma])
    hess = _numeric_hessian(f, x, h)
    if not np.all(np.isfinite(hess)):
        return None
    try:
        cov = np.linalg.inv(-hess)
    except np.linalg.LinAlgError:
        return None
    diag = np.diag(cov)
    if not np.all(diag > 0):
        return None
    return float(math.sqrt(diag[0])), float(math.sqrt(diag[1]))


def fit_mle(excesses: Sequence[float], threshold: float = 0.0, min_count: int = 5) -> GpdFit:
    """Maximum-likelihood GPD fit of positive threshold excesses.

    The result does not depend on the order of ``excesses``.
    """
    w = _clean_excesses(excesses, min_count)
    if w[0] == w[-1]:
        raise DegenerateSampleError("all excesses are equal")
    loglik = lambda xi, sigma: gpd_log_likelihood(xi, sigma, w)
    xi, sigma, ll = maximize_log_likelihood(loglik, _mle_starts(w))
    return GpdFit(
        params=GpdParams(xi, sigma),
        threshold=float(threshold),
        n_excesses=int(w.size),
        log_likelihood=ll,
        method=FitMethod.MLE,
        std_errors=observed_std_errors(loglik, xi, sigma),
    )


def empirical_mean_excess(sample, thresholds) -> list[tuple[float, float]]:
    """(u, mean of x - u over x > u) for each threshold with at least two exceedances."""
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    n = x.size
    # suffix[i] = sum of x[i:]
    suffix = np.concatenate([np.cumsum(x[::-1])[::-1], [0.0]])
    pairs = []
    for u in thresholds:
        u = float(u)
        idx = int(np.searchsorted(x, u, side="right"))
        count = n - idx
        if count < 2:
            continue
        pairs.append((u, float(suffix[idx] / count - u)))
    return pairs
