"""
Two rate families and the admissibility region
==============================================

Modelling one-period rates R_i jointly with two-period rates R_{i-2,i}
determines the defaultable bond ratios without a separate default-free
curve.  The price is a constraint: each two-period rate must stay strictly
between R_{i-1} and the midpoint of R_{i-1} and R_i, or the implied bond
prices stop being positive and decreasing.

This script checks that constraint on the Fiat curve and on two synthetic
curves, then simulates the joint dynamics where the constraint has room.
"""

import numpy as np

from cmcds.fixtures import fiat_market
from cmcds.market import DiscountCurve, SurvivalCurve, TenorGrid
from cmcds.mc_engine import BreachRateError, DualModelParams, SimConfig, simulate_dual_family
from cmcds.stripping import build_rate_set


def synthetic(n, step, r, lam0, slope, lgd=0.6):
    t = np.arange(n) * step
    grid = TenorGrid.from_times(t)
    d = DiscountCurve(grid, np.exp(-r * t))
    s = SurvivalCurve(grid, np.exp(-(lam0 * t + 0.5 * slope * t * t)))
    return grid, build_rate_set(d, s, lgd)


def position(rates):
    """Where each two-period rate sits: 0 at R_{i-1}, 1 at the midpoint."""
    R, R2 = rates.one_period, rates.two_period
    mid = 0.5 * (R[1:-1] + R[2:])
    return (R2[2:] - R[1:-1]) / (mid - R[1:-1])


# On Fiat the accrual fractions change from one period to the next, and that
# pushes two of the time-zero two-period rates outside the region.
market = fiat_market()
fiat = build_rate_set(market.discount, market.survival, market.quotes.lgd)
bad = np.flatnonzero(~fiat.admissible()[2:]) + 2
print("Fiat: inadmissible at grid indices", bad.tolist())

# With equal accruals the time-zero rates are always admissible, but on a
# smooth quarterly curve they hug the midpoint, leaving almost no room.
q_grid, quarterly = synthetic(12, 0.25, 0.03, 0.01, 0.01)
print("quarterly synthetic: position in region", np.round(position(quarterly), 4))

# A steep annual curve leaves a wide margin.
a_grid, annual = synthetic(6, 1.0, 0.05, 0.05, 0.2)
print("steep annual: position in region", np.round(position(annual), 3))

# Simulate under the measure of the one-period annuity ending at T_3, up to
# T_2.  Proposals that leave the region are redrawn (up to 100 times).
params = DualModelParams.flat(len(a_grid), sigma=0.02, nu=0.01, rho=0.5, eta=0.5, theta=0.3)
cfg = SimConfig(measure=3, paths=20_000, steps_per_period=4, seed=7)
res = simulate_dual_family(annual, params, cfg, a_grid)
print(f"\nannual, measure 3: breach rate {res.breach_rate:.4f}, flagged paths {res.flagged}")
for k, i in enumerate(res.r_indices):
    print(f"  R_{i}: start {annual.one_period[i]:.5f}  mean {res.mean_R[k]:.5f} +/- {res.se_R[k]:.1e}")

# R_3 is a martingale under measure 3, so its mean should stay put.  On the
# quarterly curve the same volatilities breach almost every step.
q_params = DualModelParams.flat(len(q_grid), sigma=0.02, nu=0.01, rho=0.5, eta=0.5, theta=0.3)
try:
    simulate_dual_family(quarterly, q_params, SimConfig(measure=5, paths=2000, seed=7), q_grid)
except BreachRateError as exc:
    print("\nquarterly, measure 5:", exc)
