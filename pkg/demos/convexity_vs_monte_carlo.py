"""
Frozen-drift convexity adjustment against Monte Carlo
=====================================================

The closed-form CMCDS premium leg freezes the state-dependent drift of each
one-period rate at its time-zero value.  Here the lognormal one-period rates
are simulated exactly (log scheme, state-dependent drift) under every
payment measure, and the simulated premium leg is set against the formula
for increasing volatility.

Each run uses 1e5 paths and takes roughly 15 seconds.
"""

import time

import numpy as np

from cmcds.fixtures import fiat_market
from cmcds.market import defaultable_bonds
from cmcds.mc_engine import SimConfig, estimate_premium_leg_mc, validate_expectations
from cmcds.pricer import CmcdsSpec, ModelParams, premium_leg
from cmcds.stripping import build_rate_set

PATHS = 100_000
RHO = 0.9

market = fiat_market()
grid = market.grid
rates = build_rate_set(market.discount, market.survival, market.quotes.lgd)
pbar = defaultable_bonds(market.discount, market.survival)
spec = CmcdsSpec(0, 20, 21)
cfg = SimConfig(paths=PATHS, steps_per_period=4, seed=12345)

plain = premium_leg(rates, ModelParams.flat(len(grid), 0.0, 0.0), spec, pbar, grid, with_convexity=False)
print(f"premium leg without convexity: {plain:.6f}\n")
estimates = {}
print(" sigma   formula        MC        SE      z   rows ok   bias-corr |z| max   time")

for sigma in (0.1, 0.2, 0.4):
    p = ModelParams.flat(len(grid), sigma, RHO, market.quotes.lgd)
    t0 = time.perf_counter()
    est = estimates[sigma] = estimate_premium_leg_mc(rates, p, spec, cfg, pbar, grid)
    rows = validate_expectations(rates, p, grid, sorted(est.stats), spec.c, cfg, stats=est.stats)
    elapsed = time.perf_counter() - t0
    ok = sum(r.passed for r in rows)
    worst = max(abs(r.corrected_z_score) for r in rows)
    print(f"{sigma:6.2f} {est.formula:9.6f} {est.value:9.6g} {est.stderr:9.2e} {est.z_score:6.2f} "
          f"{ok:4d}/{len(rows)} {worst:12.2f} {elapsed:9.1f}s")

# At low volatility the formula and the simulation agree to within noise,
# and the expected rates under each measure sit where the freezing-bias
# estimate says they should.  At sigma = 0.4 the simulated leg is clearly
# above the formula, and the bias estimate (which follows the drift along
# the mean path only) no longer accounts for all of the gap.  The gap grows
# with the distance between the fixing measure and the rate's own measure,
# so it is concentrated in the late payments.
est = estimates[0.4]
p = ModelParams.flat(len(grid), 0.4, RHO, market.quotes.lgd)
formula_terms = [premium_leg(rates, p, CmcdsSpec(j - 1, j, spec.c), pbar, grid) for j in range(spec.a + 1, spec.b + 1)]
rel = est.per_period / np.array(formula_terms) - 1.0
print("\nsigma = 0.4: excess of each simulated payment over the formula (%)")
print(np.round(100 * rel, 2))
