import time
import warnings

import numpy as np
import pytest

from cmcds.market import CdsQuoteSet, MarketDataError, defaultable_bonds
from cmcds.stripping import (
    AdmissibilityWarning,
    StrippingError,
    bisect,
    build_rate_set,
    forward_cds_rate,
    one_period_rate_tilde,
    one_period_rates_from_spot,
    pbar_from_rates,
    pbar_from_tilde_rates,
    period_hazards,
    price_prcds,
    quote_indices,
    spot_rates,
    strip_hazard,
    two_period_rates,
)

from conftest import synthetic_market


def test_par_rate_zeroes_the_contract(fiat):
    d, s = fiat.discount, fiat.survival
    for a, b in [(0, 4), (3, 25), (10, 41)]:
        r = forward_cds_rate(d, s, a, b, 0.6)
        assert abs(price_prcds(d, s, a, b, r, 0.6)) < 1e-15


def test_contract_value_is_linear_in_rate(fiat):
    d, s = fiat.discount, fiat.survival
    v0 = price_prcds(d, s, 0, 20, 0.0, 0.6)
    v1 = price_prcds(d, s, 0, 20, 0.01, 0.6)
    v2 = price_prcds(d, s, 0, 20, 0.02, 0.6)
    assert v2 - v1 == pytest.approx(v1 - v0, rel=1e-12)
    assert v0 < 0


def test_window_and_lgd_checks(fiat):
    with pytest.raises(IndexError):
        forward_cds_rate(fiat.discount, fiat.survival, 5, 5, 0.6)
    with pytest.raises(ValueError):
        price_prcds(fiat.discount, fiat.survival, 0, 4, 0.01, 0.0)


def test_tilde_rate_equals_one_period_rate_under_independence(fiat, fiat_rates):
    k = np.arange(1, 42)
    np.testing.assert_allclose(fiat_rates.one_period_tilde[k], fiat_rates.one_period[k], rtol=1e-12, atol=0)


def test_tilde_rate_hazard_form(fiat):
    q, a = fiat.survival.values, fiat.grid.accruals
    for k in (1, 9, 41):
        assert one_period_rate_tilde(fiat.discount, fiat.survival, k, 0.6) == pytest.approx(
            0.6 / a[k] * (q[k - 1] / q[k] - 1), rel=1e-12
        )


def test_one_period_rates_from_spot_match_tilde(fiat, fiat_rates, fiat_pbar):
    spot = spot_rates(fiat.discount, fiat.survival, 0.6)
    one = one_period_rates_from_spot(spot, fiat_pbar, fiat.grid)
    np.testing.assert_allclose(one[1:], fiat_rates.one_period_tilde[1:], rtol=1e-12)


def test_one_period_rates_from_spot_needs_every_intermediate(fiat, fiat_pbar):
    spot = spot_rates(fiat.discount, fiat.survival, 0.6)
    spot[5] = np.nan
    with pytest.raises(ValueError, match="missing spot rate"):
        one_period_rates_from_spot(spot, fiat_pbar, fiat.grid)


def test_fiat_two_period_rates_breach_where_accruals_grow(fiat, fiat_rates):
    with pytest.warns(AdmissibilityWarning):
        two_period_rates(fiat.discount, fiat.survival, 0.6)
    bad = np.flatnonzero(~fiat_rates.admissible()[2:]) + 2
    assert bad.tolist() == [2, 6]
    alpha = fiat.grid.accruals
    assert all(alpha[i] > alpha[i - 1] for i in bad)


def test_equal_accruals_are_admissible():
    *_, rates = synthetic_market(n=12, slope=0.03)
    assert rates.admissible()[2:].all()


@pytest.mark.parametrize("anchor", [1, 7, 41])
def test_pbar_round_trip_from_one_and_two_period_rates(fiat, fiat_rates, fiat_pbar, anchor):
    rebuilt = pbar_from_rates(fiat_rates, fiat_pbar[anchor], anchor=anchor)
    np.testing.assert_allclose(rebuilt[1:], fiat_pbar[1:], rtol=1e-10)


def test_pbar_round_trip_from_tilde_rates(fiat, fiat_rates, fiat_pbar):
    rebuilt = pbar_from_tilde_rates(fiat_rates, fiat.discount, fiat_pbar[0])
    np.testing.assert_allclose(rebuilt, fiat_pbar, rtol=1e-10)


def test_pbar_from_rates_rejects_degenerate_two_period_rate(fiat_rates):
    two = fiat_rates.two_period.copy()
    two[5] = fiat_rates.one_period[5]
    bad = type(fiat_rates)(fiat_rates.grid, fiat_rates.one_period, fiat_rates.one_period_tilde, two, 0.6)
    with pytest.raises(StrippingError):
        pbar_from_rates(bad, 1.0)


def test_roll_convention_maps_years_to_coupon_dates(fiat):
    idx = quote_indices(fiat.grid, [1, 2, 3, 5, 7, 10])
    assert idx.tolist() == [5, 9, 13, 21, 29, 41]
    assert quote_indices(fiat.grid, [1, 5], rule="nearest").tolist() == [4, 20]
    with pytest.raises(MarketDataError):
        quote_indices(fiat.grid, [1.1], rule="exact")
    with pytest.raises(MarketDataError):
        quote_indices(fiat.grid, [12])


def test_bisect():
    assert bisect(lambda x: x * x - 2, 0, 2) == pytest.approx(np.sqrt(2), abs=1e-12)
    with pytest.raises(StrippingError):
        bisect(lambda x: x * x + 1, 0, 2)


def _par_errors(fiat, surv, rule="roll"):
    idx = quote_indices(fiat.grid, fiat.quotes.maturities, rule)
    return [price_prcds(fiat.discount, surv, 0, int(k), r, 0.6) for k, r in zip(idx, fiat.quotes.mid)]


@pytest.mark.parametrize("interpolation", ["linear", "flat"])
def test_strip_reprices_every_quote(fiat, interpolation):
    _, surv = strip_hazard(fiat.discount, fiat.grid, fiat.quotes, interpolation=interpolation)
    assert max(abs(e) for e in _par_errors(fiat, surv)) <= 1e-10
    assert surv[0] == 1.0
    assert np.all(np.diff(surv.values) <= 0)


def test_strip_matches_reference_survival_curve(fiat):
    t0 = time.perf_counter()
    _, surv = strip_hazard(fiat.discount, fiat.grid, fiat.quotes)
    assert time.perf_counter() - t0 < 1.0
    assert np.max(np.abs(surv.values - fiat.survival.values)) <= 2e-3


def test_flat_hazard_is_visibly_worse_than_linear(fiat):
    _, lin = strip_hazard(fiat.discount, fiat.grid, fiat.quotes, interpolation="linear")
    _, flat = strip_hazard(fiat.discount, fiat.grid, fiat.quotes, interpolation="flat")
    ref = fiat.survival.values
    assert np.max(np.abs(lin.values - ref)) < np.max(np.abs(flat.values - ref))


def test_flat_hazard_period_intensities_are_piecewise_constant(fiat):
    curve, surv = strip_hazard(fiat.discount, fiat.grid, fiat.quotes, interpolation="flat")
    lam = period_hazards(surv)
    idx = quote_indices(fiat.grid, fiat.quotes.maturities)
    # inside each segment the per-period hazard equals the segment intensity
    np.testing.assert_allclose(lam[: idx[0]], curve.lambdas[0], rtol=1e-10)
    np.testing.assert_allclose(lam[idx[0] : idx[1]], curve.lambdas[1], rtol=1e-10)


@pytest.mark.parametrize("interpolation", ["linear", "flat"])
@pytest.mark.parametrize("bumped", [0, 2, 4])
def test_quote_bump_response(fiat, interpolation, bumped):
    q = fiat.quotes
    bid = q.bid.copy()
    ask = q.ask.copy()
    bid[bumped] += 5
    ask[bumped] += 5
    c0, s0 = strip_hazard(fiat.discount, fiat.grid, q, interpolation=interpolation)
    c1, s1 = strip_hazard(fiat.discount, fiat.grid, CdsQuoteSet(q.maturities, bid, ask), interpolation=interpolation)
    idx = quote_indices(fiat.grid, q.maturities)
    k = idx[bumped]
    k_prev = idx[bumped - 1] if bumped else 0
    # the bumped quote sets one new hazard parameter; earlier ones are untouched
    seg = bumped + 1 if interpolation == "linear" else bumped
    fixed = seg if bumped else 0
    np.testing.assert_array_equal(c1.lambdas[:fixed], c0.lambdas[:fixed])
    assert c1.lambdas[seg] > c0.lambdas[seg]
    np.testing.assert_array_equal(s1.values[: k_prev + 1], s0.values[: k_prev + 1])
    assert s1[k] < s0[k]


def test_bracket_failure_is_reported(fiat):
    q = fiat.quotes
    huge = CdsQuoteSet(q.maturities, q.bid * 1000, q.ask * 1000)
    with pytest.raises(StrippingError, match="no root"):
        strip_hazard(fiat.discount, fiat.grid, huge)


def test_build_rate_set_keeps_warnings_quiet(fiat):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rates = build_rate_set(fiat.discount, fiat.survival, 0.6)
    assert np.isnan(rates.one_period[0]) and np.isnan(rates.two_period[1])
    np.testing.assert_allclose(defaultable_bonds(fiat.discount, fiat.survival)[1:] > 0, True)
