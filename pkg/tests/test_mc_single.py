import numpy as np
import pytest

from cmcds.mc_engine import (
    SimConfig,
    SimulationError,
    estimate_premium_leg_mc,
    freezing_bias_estimate,
    simulate_measures,
    simulate_single_family,
    single_family_drift,
    terminal_samples,
)
from cmcds.mc_engine.single_family import frozen_exponent_by_integration
from cmcds.pricer import CmcdsSpec, ModelParams, adjustment_exponent, premium_leg

N = 42


def flat(sigma, rho, **kw):
    return ModelParams.flat(N, sigma, rho, **kw)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(paths=0)
    with pytest.raises(ValueError):
        SimConfig(steps_per_period=0)
    with pytest.raises(ValueError):
        SimConfig(measure=0)
    with pytest.raises(ValueError):
        SimConfig(scheme="milstein")


def test_drift_is_zero_on_own_measure_and_without_correlation(fiat, fiat_rates):
    r0 = fiat_rates.one_period_tilde
    assert single_family_drift(r0, flat(0.4, 0.9), 7, 7, fiat.grid) == 0.0
    assert single_family_drift(r0, flat(0.4, 0.0), 30, 7, fiat.grid) == 0.0
    with pytest.raises(ValueError):
        single_family_drift(r0, flat(0.4, 0.9), 3, 7, fiat.grid)


@pytest.mark.parametrize("corr_index", ["j", "i"])
def test_frozen_drift_integrates_to_pricing_exponent(fiat, fiat_rates, corr_index):
    p = flat(0.45, 0.85, drift_corr_index=corr_index)
    for i, j in [(12, 3), (41, 20), (25, 25)]:
        assert frozen_exponent_by_integration(fiat_rates, p, i, j, fiat.grid) == pytest.approx(
            adjustment_exponent(fiat_rates, p, i, j, fiat.grid), rel=1e-12, abs=1e-15
        )


def test_zero_volatility_paths_are_constant(fiat, fiat_rates):
    st = simulate_single_family(fiat_rates, flat(0.0, 0.9), SimConfig(measure=8, paths=500, batch_size=200), fiat.grid, 20)
    np.testing.assert_allclose(st.mean, fiat_rates.one_period_tilde[8:21], rtol=1e-14)
    assert np.all(st.stderr == 0)
    np.testing.assert_array_equal(st.minimum, st.maximum)


@pytest.mark.parametrize("sigma", [0.2, 0.6])
def test_rates_are_martingales_under_their_own_measure(fiat, fiat_rates, sigma):
    measures = [2, 8, 14, 20]
    stats = simulate_measures(fiat_rates, flat(sigma, 0.9), fiat.grid, measures, 1, SimConfig(paths=100_000, seed=11))
    for j in measures:
        mean, se = stats[j].at(j)
        assert abs(mean - fiat_rates.one_period_tilde[j]) <= 3 * se


def test_uncorrelated_rates_have_no_drift(fiat, fiat_rates):
    st = simulate_single_family(fiat_rates, flat(0.4, 0.0), SimConfig(measure=12, paths=40_000, seed=5), fiat.grid, 24)
    z = (st.mean - fiat_rates.one_period_tilde[12:25]) / st.stderr
    assert np.all(np.abs(z) < 3.5)


@pytest.mark.parametrize("steps", [1, 4])
def test_log_scheme_is_exact_for_driftless_rates(fiat, fiat_rates, steps):
    sig = np.zeros((N, N))
    sig[:, 1:] = np.linspace(0.2, 0.6, N - 1)  # time-varying volatility
    p = ModelParams(sig, np.eye(N))
    j = 10
    x = np.log(terminal_samples(fiat_rates, p, fiat.grid, [j], 1, SimConfig(paths=50_000, steps_per_period=steps))[j][:, 0])
    var = float(np.sum(sig[j, 1:j] ** 2 * np.diff(fiat.grid.times[:j])))
    mean = np.log(fiat_rates.one_period_tilde[j]) - 0.5 * var
    n = len(x)
    assert abs(x.mean() - mean) <= 3 * np.sqrt(var / n)
    assert abs(x.var(ddof=1) - var) <= 3 * var * np.sqrt(2 / (n - 1))


def test_one_step_increments_reproduce_correlation(fiat, fiat_rates):
    rng = np.random.default_rng(3)
    a = rng.normal(size=(N, 3))
    cov = a @ a.T + 0.3 * np.eye(N)
    d = np.sqrt(np.diag(cov))
    rho = cov / np.outer(d, d)
    np.fill_diagonal(rho, 1.0)
    p = ModelParams(np.full(N, 0.3), rho)
    cfg = SimConfig(paths=40_000, steps_per_period=1, seed=9)
    x = np.log(terminal_samples(fiat_rates, p, fiat.grid, [2], 4, cfg)[2])
    sample = np.corrcoef(x, rowvar=False)
    target = rho[2:6, 2:6]
    se = (1 - target**2) / np.sqrt(len(x))
    off = ~np.eye(4, dtype=bool)
    assert np.all(np.abs(sample - target)[off] <= 3 * se[off] + 1e-12)


def test_results_do_not_depend_on_worker_count(fiat, fiat_rates):
    p = flat(0.4, 0.9)
    runs = [
        simulate_measures(fiat_rates, p, fiat.grid, [3, 9], 5, SimConfig(paths=3000, batch_size=700, workers=w, seed=2))
        for w in (1, 3)
    ]
    for j in (3, 9):
        assert runs[0][j].mean.tobytes() == runs[1][j].mean.tobytes()
        assert runs[0][j].stderr.tobytes() == runs[1][j].stderr.tobytes()


def test_seed_changes_results(fiat, fiat_rates):
    p = flat(0.4, 0.9)
    a = simulate_single_family(fiat_rates, p, SimConfig(measure=6, paths=1000, seed=1), fiat.grid, 8)
    b = simulate_single_family(fiat_rates, p, SimConfig(measure=6, paths=1000, seed=2), fiat.grid, 8)
    assert not np.array_equal(a.mean, b.mean)


def test_non_finite_state_is_reported(fiat, fiat_rates):
    p = flat(5.0, 0.9)
    cfg = SimConfig(measure=12, paths=2000, steps_per_period=1, scheme="euler")
    with pytest.raises(SimulationError, match=r"path \d+, step \d+"):
        simulate_single_family(fiat_rates, p, cfg, fiat.grid, 14)


def test_euler_scheme_agrees_with_log_scheme_for_small_steps(fiat, fiat_rates):
    p = flat(0.2, 0.9)
    runs = {
        s: simulate_single_family(fiat_rates, p, SimConfig(measure=10, paths=20_000, steps_per_period=8, scheme=s), fiat.grid, 15)
        for s in ("log-euler", "euler")
    }
    diff = runs["euler"].mean - runs["log-euler"].mean
    assert np.all(np.abs(diff) <= 4 * runs["euler"].stderr)


def test_premium_leg_without_volatility_is_the_plain_leg(fiat, fiat_rates, fiat_pbar):
    spec = CmcdsSpec(0, 8, 5)
    est = estimate_premium_leg_mc(fiat_rates, flat(0.0, 0.9), spec, SimConfig(paths=200), fiat_pbar, fiat.grid)
    plain = premium_leg(fiat_rates, flat(0.0, 0.9), spec, fiat_pbar, fiat.grid, with_convexity=False)
    assert est.value == pytest.approx(plain, rel=1e-14)
    assert est.stderr < 1e-15


def test_premium_leg_without_correlation_matches_plain_leg(fiat, fiat_rates, fiat_pbar):
    spec = CmcdsSpec(0, 12, 6)
    p = flat(0.4, 0.0)
    est = estimate_premium_leg_mc(fiat_rates, p, spec, SimConfig(paths=20_000, seed=4), fiat_pbar, fiat.grid)
    plain = premium_leg(fiat_rates, p, spec, fiat_pbar, fiat.grid, with_convexity=False)
    assert abs(est.value - plain) <= 3 * est.stderr
    assert est.per_period.shape == (12,)
    assert np.sum(est.per_period) == pytest.approx(est.value, rel=1e-12)


def test_freezing_bias(fiat, fiat_rates):
    small, large = flat(0.1, 0.9), flat(0.4, 0.9)
    assert freezing_bias_estimate(fiat_rates, large, 15, 1, fiat.grid) == 0.0
    assert freezing_bias_estimate(fiat_rates, large, 15, 15, fiat.grid) == 0.0
    b_small = freezing_bias_estimate(fiat_rates, small, 30, 15, fiat.grid)
    b_large = freezing_bias_estimate(fiat_rates, large, 30, 15, fiat.grid)
    assert 0 < b_small < b_large
    # leading order is quartic in sigma
    assert 100 < b_large / b_small < 600
