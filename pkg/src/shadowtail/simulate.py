"""Seeded samplers, Monte Carlo checks and the bootstrap for the shadow mean.

Uniforms come from numpy's counter-based Philox generator. Every block of
draws and every bootstrap replicate owns a stream keyed by
``SeedSequence(seed, spawn_key=(purpose, index))``, so results are bitwise
identical whatever the number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dual import DualTransform, phi
from .errors import ConvergenceError, DomainError, InsufficientDataError
from .gpd import GpdFit, GpdParams, fit_mle, gpd_quantile
from .shadow import ShadowModel, shadow_mean

BLOCK_SIZE = 1 << 16
MIN_EXCEEDANCES = 30

_DRAW_STREAM = 0
_BOOTSTRAP_STREAM = 1
_SE_STREAM = 2


@dataclass(frozen=True)
class SimConfig:
    seed: int
    n: int
    censor_at: float | None = None

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if not int(self.n) >= 1:
            raise DomainError(f"n must be >= 1, got {self.n}")


@dataclass(frozen=True)
class BootstrapCI:
    point: float
    lower: float
    upper: float
    level: float
    replicates: int
    failed: int = 0


@dataclass(frozen=True)
class ApparentTailResult:
    naive_fit: GpdFit
    dual_fit: GpdFit
    n_kept: int
    n_exceedances: int

    @property
    def xi_gap_in_se(self) -> float:
        """|naive xi - dual xi| in units of the combined standard error."""
        se_n = self.naive_fit.std_errors
        se_d = self.dual_fit.std_errors
        if se_n is None or se_d is None:
            return math.nan
        gap = abs(self.naive_fit.params.xi - self.dual_fit.params.xi)
        return gap / math.hypot(se_n[0], se_d[0])


def _generator(seed: int, purpose: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(purpose, index))
    return np.random.Generator(np.random.Philox(ss))


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def uniforms(seed: int, n: int, workers: int = 1, purpose: int = _DRAW_STREAM) -> np.ndarray:
    """n uniforms on the open interval (0, 1), generated block by block."""
    n_blocks = -(-n // BLOCK_SIZE)

    def block(b):
        size = min(BLOCK_SIZE, n - b * BLOCK_SIZE)
        # k / 2^53 lies in [0, 1); shifting by half a step keeps 0 out
        return _generator(seed, purpose, b).random(size) + 2.0**-54

    return np.concatenate(_map(block, list(range(n_blocks)), workers))


def sample_gpd(params: GpdParams, cfg: SimConfig, workers: int = 1) -> np.ndarray:
    """Inverse-transform GPD draws; reproducible per (seed, n, params)."""
    return gpd_quantile(params, uniforms(cfg.seed, cfg.n, workers))


def _y_from_excess(m: ShadowModel, w: np.ndarray) -> np.ndarray:
    # Y = phi^-1(phi(u) + W) = u - (H - u) expm1(-W / H)
    y = m.u - (m.H - m.u) * np.expm1(-w / m.H)
    # draws whose distance to H is below the float spacing would land on H
    return np.minimum(y, np.nextafter(m.H, -np.inf))


def sample_shadow_y(m: ShadowModel, cfg: SimConfig, workers: int = 1) -> np.ndarray:
    """Draws of Y given Y > u; draws above ``cfg.censor_at`` are dropped."""
    y = _y_from_excess(m, sample_gpd(m.dual_params, cfg, workers))
    if cfg.censor_at is not None:
        if not m.L < cfg.censor_at < m.H:
            raise DomainError("censor_at must lie in (L, H)")
        y = y[y <= cfg.censor_at]
    return y


def apparent_tail_experiment(m: ShadowModel, cfg: SimConfig, workers: int = 1) -> ApparentTailResult:
    """Fit a GPD to censored draws twice: on raw excesses and on dual excesses.

    With the sample censored at M << H, both fits see the same power law,
    and the raw one may suggest xi >= 1 (an infinite mean) even though Y is
    bounded.
    """
    if cfg.censor_at is None:
        raise DomainError("apparent_tail_experiment needs censor_at (the observed maximum M)")
    if not cfg.censor_at <= m.H / 10:
        raise DomainError("apparent_tail_experiment needs M <= H / 10")
    y = sample_shadow_y(m, cfg, workers)
    exc = y[y > m.u]
    if exc.size < MIN_EXCEEDANCES:
        raise InsufficientDataError(
            f"only {exc.size} censored draws exceed u; need {MIN_EXCEEDANCES}"
        )
    t = m.transform
    naive = fit_mle(exc - m.u, threshold=m.u)
    dual = fit_mle(phi(t, exc) - phi(t, m.u), threshold=m.u)
    return ApparentTailResult(naive, dual, int(y.size), int(exc.size))


def _shadow_mean_from_excesses(w: np.ndarray, L: float, H: float, u: float) -> float:
    fit = fit_mle(w, threshold=u)
    if not fit.params.xi > 0:
        raise DomainError("fitted dual tail is not of power-law type")
    return shadow_mean(ShadowModel(fit.params.alpha, fit.params.sigma, L, H, u))


def bootstrap_shadow_mean(
    sample: Sequence[float],
    L: float,
    H: float,
    u: float,
    level: float = 0.95,
    replicates: int = 1000,
    seed: int = 0,
    workers: int = 1,
) -> BootstrapCI:
    """Percentile bootstrap interval for the plug-in shadow mean.

    Only the exceedances of ``u`` are resampled; each replicate refits the
    GPD on the dual excesses. Failed refits are dropped and counted, and more
    than 10% failures is an error.
    """
    if replicates < 100:
        raise DomainError("need at least 100 bootstrap replicates")
    if not 0 < level < 1:
        raise DomainError("level must lie in (0, 1)")
    y = np.asarray(sample, dtype=float)
    exc = np.sort(y[y > u])
    if exc.size < MIN_EXCEEDANCES:
        raise InsufficientDataError(f"need {MIN_EXCEEDANCES} exceedances of u, got {exc.size}")
    t = DualTransform(L, H)
    w = phi(t, exc) - phi(t, u)
    point = _shadow_mean_from_excesses(w, L, H, u)

    def replicate(r):
        rng = _generator(seed, _BOOTSTRAP_STREAM, r)
        resampled = w[rng.integers(0, w.size, w.size)]
        try:
            return _shadow_mean_from_excesses(resampled, L, H, u)
        except (ValueError, ConvergenceError):
            return None

    results = _map(replicate, list(range(replicates)), workers)
    means = np.array([r for r in results if r is not None])
    failed = replicates - means.size
    if failed > 0.1 * replicates:
        raise ConvergenceError(f"{failed} of {replicates} bootstrap refits failed")
    lower, upper = np.quantile(means, [(1 - level) / 2, (1 + level) / 2])
    # the percentile interval need not straddle a skewed point estimate
    return BootstrapCI(
        point=point,
        lower=min(float(lower), point),
        upper=max(float(upper), point),
        level=float(level),
        replicates=int(replicates),
        failed=int(failed),
    )


def bootstrap_standard_error(
    data: np.ndarray,
    statistic: Callable[[np.ndarray], float],
    replicates: int = 50,
    seed: int = 0,
    workers: int = 1,
) -> float:
    """Bootstrap standard error of ``statistic`` (plain resampling with replacement)."""
    data = np.asarray(data, dtype=float)

    def replicate(r):
        rng = _generator(seed, _SE_STREAM, r)
        return statistic(data[rng.integers(0, data.size, data.size)])

    values = np.array(_map(replicate, list(range(replicates)), workers))
    return float(np.std(values, ddof=1))
