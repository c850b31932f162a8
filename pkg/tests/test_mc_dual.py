import numpy as np
import pytest
import sympy as sp

from cmcds.mc_engine import (
    AdmissibilityError,
    BreachRateError,
    DualModelParams,
    PathState,
    SimConfig,
    SimulationError,
    dual_family_drifts,
    simulate_dual_family,
)


def random_params(n, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(2 * n, 3))
    c = a @ a.T + 0.5 * np.eye(2 * n)
    d = np.sqrt(np.diag(c))
    q = c / np.outer(d, d)
    np.fill_diagonal(q, 1.0)
    return DualModelParams(rng.uniform(0.1, 0.5, n), rng.uniform(0.1, 0.5, n), q[:n, :n], q[n:, n:], q[:n, n:])


def toy_state(n=6, position=0.7):
    R = np.array([np.nan] + [0.1 + 0.15 * k + 0.04 * k * k for k in range(n - 1)])
    R2 = np.full(n, np.nan)
    R2[2:] = R[1:-1] + position * 0.5 * (R[2:] - R[1:-1])
    return R, R2


def symbolic_drifts(R_val, R2_val, p, i):
    """Drifts from differentiating the log numeraire ratios built out of bond-ratio products.

    ``alpha_k Pbar_k`` is rebuilt relative to ``alpha_i Pbar_i`` from
    ``alpha_k Pbar_k / (alpha_{k-1} Pbar_{k-1}) = (R_{k-1} - R2_k) / (R2_k - R_k)``;
    the drift of a rate with own numeraire ``N`` under ``C_{i-1,i}`` is
    ``-vol * (Q . DC(ln N / C_{i-1,i}))``.
    """
    n = p.size
    R = sp.symbols(f"R0:{n}")
    S = sp.symbols(f"S0:{n}")
    A = {i: sp.Integer(1)}
    for k in range(i + 1, n):
        A[k] = A[k - 1] * (R[k - 1] - S[k]) / (S[k] - R[k])
    for k in range(i - 1, 0, -1):
        A[k] = A[k + 1] * (S[k + 1] - R[k + 1]) / (R[k] - S[k + 1])
    subs = {R[k]: R_val[k] for k in range(1, n)}
    subs.update({S[k]: R2_val[k] for k in range(2, n)})
    Q = p.total_correlation()

    def drift(f, row, vol):
        dc = np.zeros(2 * n)
        for a in range(1, n):
            dc[a] = float(sp.diff(f, R[a]).subs(subs)) * p.sigma[a] * R_val[a]
            if a >= 2:
                dc[n + a] = float(sp.diff(f, S[a]).subs(subs)) * p.nu[a] * R2_val[a]
        return -vol * (Q[row] @ dc)

    mu = {h: drift(sp.log(A[h]), h, p.sigma[h]) for h in range(max(i - 1, 1), n)}
    phi = {j: drift(sp.log(A[j - 1] + A[j]), n + j, p.nu[j]) for j in range(max(i, 2), n)}
    return mu, phi


@pytest.mark.parametrize("measure", [1, 2, 3, 5])
def test_drifts_match_symbolic_derivation(measure):
    n = 6
    p = random_params(n, seed=measure)
    R, R2 = toy_state(n)
    mu, phi = dual_family_drifts(PathState(0, R, R2), p, measure)
    mu_o, phi_o = symbolic_drifts(R, R2, p, measure)
    for h, v in mu_o.items():
        assert mu[h] == pytest.approx(v, rel=1e-10, abs=1e-13)
    for j, v in phi_o.items():
        assert phi[j] == pytest.approx(v, rel=1e-10, abs=1e-13)


def test_drifts_vectorise_over_paths():
    p = random_params(6)
    R, R2 = toy_state(6)
    R_b = np.stack([R, R * 1.01, R * 0.99])
    R2_b = np.stack([R2, R2 * 1.01, R2 * 0.99])
    mu, phi = dual_family_drifts(PathState(0, R_b, R2_b), p, 2)
    for b in range(3):
        m1, p1 = dual_family_drifts(PathState(0, R_b[b], R2_b[b]), p, 2)
        np.testing.assert_allclose(mu[b], m1, rtol=1e-14)
        np.testing.assert_allclose(phi[b], p1, rtol=1e-14)


def test_own_measure_rate_has_no_drift():
    p = random_params(6)
    R, R2 = toy_state(6)
    mu, _ = dual_family_drifts(PathState(0, R, R2), p, 3)
    assert mu[3] == 0.0
    assert np.isnan(mu[1])


def test_all_zero_parameters_give_zero_drifts():
    n = 6
    z = np.zeros((n, n))
    p = DualModelParams(np.zeros(n), np.zeros(n), np.eye(n), np.eye(n), z)
    R, R2 = toy_state(n)
    mu, phi = dual_family_drifts(PathState(0, R, R2), p, 2)
    assert np.all(mu[1:] == 0) and np.all(phi[2:] == 0)


def test_degenerate_rates_are_rejected():
    p = random_params(6)
    R, R2 = toy_state(6)
    R2[4] = R[3]
    with pytest.raises(SimulationError, match="denominator"):
        dual_family_drifts(PathState(0, R, R2), p, 2)


def test_indefinite_total_correlation_is_rejected():
    n = 3
    with pytest.raises(np.linalg.LinAlgError):
        DualModelParams(np.ones(n), np.ones(n), np.eye(n), np.eye(n), np.full((n, n), 0.9))


def test_inadmissible_initial_rates_are_rejected(fiat, fiat_rates):
    p = DualModelParams.flat(42, 0.1, 0.1, 0.9, 0.9, 0.0)
    with pytest.raises(AdmissibilityError, match=r"\[2, 6\]"):
        simulate_dual_family(fiat_rates, p, SimConfig(measure=1, paths=10), fiat.grid)


def test_zero_volatility_paths_are_constant(steep_annual):
    grid, _, _, rates = steep_annual
    p = DualModelParams.flat(6, 0.0, 0.0, 0.9, 0.9, 0.3)
    res = simulate_dual_family(rates, p, SimConfig(measure=3, paths=500), grid)
    np.testing.assert_allclose(res.mean_R, rates.one_period[res.r_indices], rtol=1e-14)
    np.testing.assert_allclose(res.mean_R2, rates.two_period[res.r2_indices], rtol=1e-14)
    assert res.breaches == 0 and np.all(res.se_R == 0)


def test_independent_shock_families(steep_annual):
    grid, _, _, rates = steep_annual
    n = 6
    p = DualModelParams(np.full(n, 0.02), np.full(n, 0.02), np.eye(n), np.eye(n), np.zeros((n, n)))
    res = simulate_dual_family(rates, p, SimConfig(measure=3, paths=20_000, steps_per_period=1), grid,
                               horizon_index=1, keep_samples=True)
    assert res.breach_rate < 0.01
    dx = np.log(res.samples_R / rates.one_period[res.r_indices])
    dy = np.log(res.samples_R2 / rates.two_period[res.r2_indices])
    corr = np.corrcoef(np.hstack([dx, dy]), rowvar=False)
    nz = dx.shape[1]
    cross = corr[:nz, nz:]
    assert np.all(np.abs(cross) <= 3 / np.sqrt(len(dx)) + 5e-3)


def test_numeraire_rate_is_a_martingale(steep_annual):
    grid, _, _, rates = steep_annual
    p = DualModelParams.flat(6, 0.02, 0.01, 0.9, 0.9, 0.3)
    res = simulate_dual_family(rates, p, SimConfig(measure=4, paths=40_000, seed=8), grid)
    assert res.breach_rate < 0.01
    k = list(res.r_indices).index(4)
    assert abs(res.mean_R[k] - rates.one_period[4]) <= 3 * res.se_R[k]


def test_breach_ceiling_aborts(steep_annual):
    grid, _, _, rates = steep_annual
    p = DualModelParams.flat(6, 0.3, 0.3, 0.9, 0.9, 0.0)
    with pytest.raises(BreachRateError, match="breach rate"):
        simulate_dual_family(rates, p, SimConfig(measure=3, paths=2000), grid, max_breach_rate=0.01)


def test_absorb_policy_flags_paths(steep_annual):
    grid, _, _, rates = steep_annual
    p = DualModelParams.flat(6, 0.3, 0.3, 0.9, 0.9, 0.0)
    res = simulate_dual_family(rates, p, SimConfig(measure=3, paths=2000), grid, policy="absorb", max_breach_rate=1.0)
    assert res.flagged == res.breaches > 0
    assert 0 < res.breach_rate <= 1


def test_state_dependent_nu(steep_annual):
    grid, _, _, rates = steep_annual
    base = DualModelParams.flat(6, 0.02, 0.0, 0.9, 0.9, 0.0)
    calls = []

    def nu(t, R, R2):
        calls.append(t)
        return np.zeros_like(R2)

    p = DualModelParams(base.sigma, nu, base.rho, base.eta, base.theta)
    a = simulate_dual_family(rates, p, SimConfig(measure=3, paths=1000, seed=3), grid)
    b = simulate_dual_family(rates, base, SimConfig(measure=3, paths=1000, seed=3), grid)
    assert calls
    np.testing.assert_array_equal(a.mean_R, b.mean_R)


def test_runs_are_deterministic(steep_annual):
    grid, _, _, rates = steep_annual
    p = DualModelParams.flat(6, 0.02, 0.01, 0.9, 0.9, 0.3)
    runs = [simulate_dual_family(rates, p, SimConfig(measure=3, paths=3000, batch_size=1000, seed=4), grid) for _ in range(2)]
    assert runs[0].mean_R.tobytes() == runs[1].mean_R.tobytes()
    assert runs[0].mean_R2.tobytes() == runs[1].mean_R2.tobytes()
