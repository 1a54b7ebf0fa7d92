import math

import numpy as np
import pytest
from scipy import stats

from shadowtail.errors import DegenerateSampleError, DomainError, InsufficientDataError
from shadowtail.gpd import GpdParams, empirical_mean_excess, gpd_cdf
from shadowtail.shadow import (
    ShadowModel,
    expected_shortfall,
    mean_excess,
    shadow_mean,
    shadow_moment,
    shadow_quantile,
)
from shadowtail.simulate import (
    BLOCK_SIZE,
    SimConfig,
    apparent_tail_experiment,
    bootstrap_shadow_mean,
    bootstrap_standard_error,
    sample_gpd,
    sample_shadow_y,
    uniforms,
)

M_HALF = ShadowModel(0.5, 1.0, 1.0, 1000.0, 1.0)


@pytest.fixture(scope="module")
def big_sample():
    return sample_shadow_y(M_HALF, SimConfig(seed=2024, n=10_000_000))


def quantile_se(x, p, seed):
    return bootstrap_standard_error(x, lambda d: np.quantile(d, p), replicates=30, seed=seed)


# -- configuration and uniforms ------------------------------------------------------

@pytest.mark.parametrize("seed,n", [(-1, 10), (2**64, 10), (0, 0)])
def test_config_validation(seed, n):
    with pytest.raises(DomainError):
        SimConfig(seed=seed, n=n)


def test_uniforms_open_interval_and_blocks():
    u = uniforms(7, 3 * BLOCK_SIZE + 11)
    assert u.size == 3 * BLOCK_SIZE + 11
    assert u.min() > 0.0 and u.max() < 1.0
    # a prefix does not depend on the total length
    assert np.array_equal(uniforms(7, BLOCK_SIZE + 5)[:BLOCK_SIZE], u[:BLOCK_SIZE])


def test_uniforms_independent_of_workers():
    assert np.array_equal(uniforms(3, 5 * BLOCK_SIZE, workers=1), uniforms(3, 5 * BLOCK_SIZE, workers=4))


# -- GPD draws ------------------------------------------------------------------------

def test_gpd_draws_deterministic():
    cfg = SimConfig(seed=99, n=1000)
    p = GpdParams(0.5, 1.0)
    assert np.array_equal(sample_gpd(p, cfg), sample_gpd(p, cfg))
    assert not np.array_equal(sample_gpd(p, cfg), sample_gpd(p, SimConfig(seed=100, n=1000)))


def test_gpd_draws_ks_bound():
    n = 1_000_000
    p = GpdParams(0.5, 1.0)
    w = np.sort(sample_gpd(p, SimConfig(seed=42, n=n)))
    f = gpd_cdf(p, w)
    i = np.arange(1, n + 1)
    d = max(np.max(i / n - f), np.max(f - (i - 1) / n))
    assert d <= 1.36 / math.sqrt(n) * 1.5


def test_gpd_draws_match_scipy_ks():
    w = sample_gpd(GpdParams(1.3, 2.0), SimConfig(seed=8, n=50_000))
    assert stats.kstest(w, stats.genpareto(c=1.3, scale=2.0).cdf).pvalue > 0.001


def test_gpd_draws_finite_endpoint():
    w = sample_gpd(GpdParams(-0.5, 1.0), SimConfig(seed=1, n=200_000))
    assert w.max() <= 2.0
    assert w.min() >= 0.0


# -- shadow draws ----------------------------------------------------------------------

def test_shadow_draws_bounded(big_sample):
    assert big_sample.size == 10_000_000
    assert big_sample.max() < M_HALF.H
    assert big_sample.min() > M_HALF.u


def test_shadow_draws_deterministic_across_workers():
    cfg = SimConfig(seed=5, n=4 * BLOCK_SIZE + 3)
    assert np.array_equal(sample_shadow_y(M_HALF, cfg, workers=1), sample_shadow_y(M_HALF, cfg, workers=3))


def test_shadow_mean_monte_carlo(big_sample):
    se = big_sample.std(ddof=1) / math.sqrt(big_sample.size)
    assert abs(big_sample.mean() - shadow_mean(M_HALF)) <= 3 * se


def test_second_moment_monte_carlo(big_sample):
    sq = big_sample * big_sample
    se = sq.std(ddof=1) / math.sqrt(sq.size)
    assert abs(sq.mean() - shadow_moment(M_HALF, 2)) <= 3 * se


@pytest.mark.parametrize("p", [0.5, 0.95, 0.99])
def test_quantile_monte_carlo(big_sample, p):
    x = big_sample[:1_000_000]
    assert abs(np.quantile(x, p) - shadow_quantile(M_HALF, p)) <= 3 * quantile_se(x, p, seed=int(p * 100))


@pytest.mark.parametrize("v", [5.0, 50.0, 500.0])
def test_mean_excess_monte_carlo(big_sample, v):
    excess = big_sample[big_sample > v] - v
    se = excess.std(ddof=1) / math.sqrt(excess.size)
    assert abs(excess.mean() - mean_excess(M_HALF, v)) <= 3 * se


def test_expected_shortfall_monte_carlo(big_sample):
    var = shadow_quantile(M_HALF, 0.95)
    tail = big_sample[big_sample > var]
    se = tail.std(ddof=1) / math.sqrt(tail.size)
    assert abs(tail.mean() - expected_shortfall(M_HALF, 0.95)) <= 3 * se


def test_censoring_drops_draws():
    cfg = SimConfig(seed=3, n=100_000, censor_at=10.0)
    y = sample_shadow_y(M_HALF, cfg)
    full = sample_shadow_y(M_HALF, SimConfig(seed=3, n=100_000))
    assert y.max() <= 10.0
    assert np.array_equal(y, full[full <= 10.0])


@pytest.mark.parametrize("m_", [0.5, 1000.0, 2000.0])
def test_censoring_level_validated(m_):
    with pytest.raises(DomainError):
        sample_shadow_y(M_HALF, SimConfig(seed=3, n=10, censor_at=m_))


def test_draws_pinned_below_h_for_heavy_dual_tails():
    m = ShadowModel(0.2, 1.0, 0.0, 50.0, 0.0)
    y = sample_shadow_y(m, SimConfig(seed=0, n=100_000))
    assert y.max() < 50.0


# -- apparent tail ----------------------------------------------------------------------

def apparent(seed, H=1e6):
    m = ShadowModel(0.8, 1.0, 1.0, H, 1.0)
    return m, apparent_tail_experiment(m, SimConfig(seed=seed, n=100_000, censor_at=H / 100))


def test_apparent_tail_looks_infinite_mean():
    m, res = apparent(0)
    assert res.naive_fit.params.xi >= 1.0
    assert res.xi_gap_in_se <= 2.0
    assert shadow_mean(m) < m.H
    assert res.n_exceedances <= res.n_kept <= 100_000


def test_apparent_tail_needs_censoring():
    with pytest.raises(DomainError):
        apparent_tail_experiment(M_HALF, SimConfig(seed=0, n=1000))
    with pytest.raises(DomainError):
        apparent_tail_experiment(M_HALF, SimConfig(seed=0, n=1000, censor_at=500.0))


def test_apparent_tail_needs_exceedances():
    m = ShadowModel(0.8, 1.0, 1.0, 1e6, 1.0)
    with pytest.raises(InsufficientDataError):
        apparent_tail_experiment(m, SimConfig(seed=0, n=20, censor_at=1e4))


def test_apparent_tail_deterministic():
    assert apparent(7)[1] == apparent(7)[1]


# -- bootstrap ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def boot_sample():
    return sample_shadow_y(ShadowModel(1.5, 1.0, 1.0, 1000.0, 1.0), SimConfig(seed=1, n=300))


def test_bootstrap_deterministic(boot_sample):
    a = bootstrap_shadow_mean(boot_sample, 1.0, 1000.0, 1.0, 0.95, 100, seed=3)
    b = bootstrap_shadow_mean(boot_sample, 1.0, 1000.0, 1.0, 0.95, 100, seed=3)
    assert a == b
    assert a.lower <= a.point <= a.upper
    assert a.replicates == 100 and a.level == 0.95


def test_bootstrap_independent_of_workers(boot_sample):
    a = bootstrap_shadow_mean(boot_sample, 1.0, 1000.0, 1.0, 0.9, 100, seed=4, workers=1)
    b = bootstrap_shadow_mean(boot_sample, 1.0, 1000.0, 1.0, 0.9, 100, seed=4, workers=4)
    assert a == b


def test_bootstrap_constant_sample_fails():
    # the point fit already fails, before any replicate is drawn
    with pytest.raises(DegenerateSampleError):
        bootstrap_shadow_mean(np.full(100, 5.0), 1.0, 1000.0, 1.0, 0.95, 100, seed=0)


def test_bootstrap_preconditions(boot_sample):
    with pytest.raises(DomainError):
        bootstrap_shadow_mean(boot_sample, 1.0, 1000.0, 1.0, 0.95, 99)
    with pytest.raises(DomainError):
        bootstrap_shadow_mean(boot_sample, 1.0, 1000.0, 1.0, 1.0, 100)
    with pytest.raises(InsufficientDataError):
        bootstrap_shadow_mean(boot_sample[:20], 1.0, 1000.0, 1.0, 0.95, 100)


@pytest.mark.slow
def test_bootstrap_coverage():
    m = ShadowModel(1.5, 1.0, 1.0, 1000.0, 1.0)
    truth = shadow_mean(m)
    covered = 0
    for trial in range(100):
        y = sample_shadow_y(m, SimConfig(seed=10_000 + trial, n=300))
        ci = bootstrap_shadow_mean(y, 1.0, 1000.0, 1.0, 0.95, 100, seed=trial)
        covered += ci.lower <= truth <= ci.upper
    assert covered >= 90


def test_bootstrap_standard_error_of_mean():
    x = uniforms(11, 20_000)
    se = bootstrap_standard_error(x, np.mean, replicates=200, seed=1)
    assert se == pytest.approx(x.std() / math.sqrt(x.size), rel=0.15)


def test_empirical_mean_excess_of_draws(big_sample):
    # the raw-space pairs are exact pass-throughs of the sample
    x = big_sample[:1000]
    pairs = empirical_mean_excess(x, [10.0])
    assert pairs[0][1] == pytest.approx(float(np.mean(x[x > 10.0] - 10.0)), rel=1e-12)
