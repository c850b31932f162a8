"""Monte Carlo of the one-period-rate (single family) model.

Under the measure of the numeraire ``C_{j-1,j}``, for ``i >= j``

    dRtilde_i = Rtilde_i ( mu_i^j(Rtilde) dt + sigma_i dZ_i ),
    mu_i^j = sigma_i sum_{h=j+1}^{i} rho_{j,h} sigma_h Rtilde_h/(Rtilde_h + lgd/alpha_h).

Paths are advanced in log coordinates with exact diffusion and the drift
evaluated at the start of each step.  The Milstein correction vanishes in log
coordinates, so this scheme is the log-Milstein scheme.  All measures of a
run share one set of Brownian increments (common random numbers).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from ..market import TenorGrid
from ..pricer import (
    CmcdsSpec,
    ModelParams,
    adjustment_exponent,
    annuity_weights,
    convexity_adjusted_expectation,
)
from ..stripping import RateSet
from .cholesky import cholesky
from .rng import batch_generator, batch_slices
from .stats import RunningMoments

SCHEMES = ("log-euler", "euler")


class SimulationError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings.  ``measure`` is ``j`` of the numeraire ``C_{j-1,j}``."""

    measure: int = 1
    paths: int = 100_000
    steps_per_period: int = 4
    seed: int = 12345
    scheme: str = "log-euler"
    batch_size: int = 10_000
    workers: int = 1

    def __post_init__(self):
        if self.paths < 1 or self.steps_per_period < 1 or self.batch_size < 1 or self.workers < 1:
            raise ValueError("paths, steps_per_period, batch_size and workers must be >= 1")
        if self.measure < 1:
            raise ValueError("measure index must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")


def single_family_drift(state, p: ModelParams, i: int, j: int, grid: TenorGrid, period: Optional[int] = None):
    """Drift rate ``mu_i^j`` of ``Rtilde_i`` under measure ``j`` at ``state``.

    ``state`` holds ``Rtilde`` by grid index (extra leading axes allowed).
    ``period`` selects the volatility period for time-varying volatilities.
    """
    if j > i:
        raise ValueError("need j <= i")
    state = np.asarray(state, dtype=float)
    per = 1 if period is None else period
    alpha = grid.accruals
    row = p.corr_row(i, j)
    total = np.zeros(state.shape[:-1])
    for h in range(j + 1, i + 1):
        r = state[..., h]
        total = total + p.rho[row, h] * p.vol(h, per) * r / (r + p.lgd / alpha[h])
    return p.vol(i, per) * total


# ---------------------------------------------------------------- kernel


@numba.njit(cache=True, nogil=True, fastmath={"contract", "afn", "reassoc"})
def _advance(x, level, eps, offsets, sig, dt, loa, coef, corr, use_matrix, first, euler):
    """One step for measures ``first..`` of state ``x[measure, slot, path]``.

    ``level`` is ``exp(x)`` for those measures (computed by numpy, whose
    vectorised exponential is several times faster than a scalar loop).
    ``eps[i, path]`` holds the correlated standard normal shock of rate ``i``.
    Returns ``(measure, path)`` of the first non-finite state, or ``(-1, -1)``.
    """
    n_meas, width, n_paths = x.shape
    sq = np.sqrt(dt)
    g = np.empty((width, n_paths))
    running = np.empty(n_paths)
    for jj in range(first, n_meas):
        base = offsets[jj]
        for m in range(width):
            c = loa[base + m]
            for b in range(n_paths):
                r = level[jj - first, m, b]
                g[m, b] = r / (r + c)
        running[:] = 0.0
        for m in range(width):
            i = base + m
            s_i = sig[i]
            if not use_matrix and m >= 1:
                w = coef[jj, m] * sig[i]
                for b in range(n_paths):
                    running[b] += w * g[m, b]
            for b in range(n_paths):
                if use_matrix:
                    acc = 0.0
                    for n in range(1, m + 1):
                        acc += corr[jj, m, n] * sig[base + n] * g[n, b]
                    drift = s_i * acc
                else:
                    drift = s_i * running[b]
                shock = s_i * sq * eps[i, b]
                if euler:
                    growth = 1.0 + drift * dt + shock
                    step = np.log(growth) if growth > 0 else np.nan
                else:
                    step = (drift - 0.5 * s_i * s_i) * dt + shock
                x[jj, m, b] += step
        for m in range(width):
            for b in range(n_paths):
                if not np.isfinite(x[jj, m, b]):
                    return jj, b
    return -1, -1


# ---------------------------------------------------------------- engine


@dataclass
class _Plan:
    """Static description of a multi-measure run."""

    measures: np.ndarray  # sorted measure indices j
    width: int  # number of rates per measure: j .. j+width-1
    lo: int  # lowest grid index simulated
    hi: int  # highest grid index simulated
    chol: np.ndarray
    step_period: np.ndarray  # period p of each global step
    step_dt: np.ndarray
    horizon_steps: np.ndarray  # steps each measure runs
    sig_by_period: np.ndarray  # (periods+1, hi+1)
    loa: np.ndarray
    coef: np.ndarray
    corr: np.ndarray
    use_matrix: bool
    x0: np.ndarray  # (n_meas, width)


def _make_plan(rates: RateSet, p: ModelParams, grid: TenorGrid, measures, width: int, steps_per_period: int) -> _Plan:
    measures = np.array(sorted(set(int(j) for j in measures)), dtype=np.int64)
    if measures.size == 0 or measures[0] < 1:
        raise ValueError("measures must be grid indices >= 1")
    lo, hi = int(measures[0]), int(measures[-1] + width - 1)
    if hi >= len(grid) or hi >= p.size:
        raise IndexError(f"simulation needs grid index {hi}; grid/params end at {min(len(grid), p.size) - 1}")
    r0 = np.asarray(rates.one_period_tilde, dtype=float)
    if np.any(~(r0[lo : hi + 1] > 0)):
        raise ValueError("initial one-period rates must be positive")
    n_periods = int(measures[-1]) - 1
    times = grid.times
    step_period, step_dt = [], []
    for per in range(1, n_periods + 1):
        dt = (times[per] - times[per - 1]) / steps_per_period
        step_period += [per] * steps_per_period
        step_dt += [dt] * steps_per_period
    sig = np.zeros((n_periods + 2, hi + 1))
    for per in range(n_periods + 2):
        sig[per] = [p.vol(i, max(per, 1)) for i in range(hi + 1)]
    loa = np.zeros(hi + 1)
    loa[1:] = p.lgd / grid.accruals[1 : hi + 1]
    coef = np.zeros((len(measures), width))
    corr = np.zeros((len(measures), width, width))
    for jj, j in enumerate(measures):
        for m in range(width):
            coef[jj, m] = p.rho[j, j + m] if m else 0.0
            for n in range(1, m + 1):
                corr[jj, m, n] = p.rho[p.corr_row(j + m, j), j + n]
    x0 = np.log(np.array([r0[j : j + width] for j in measures]))
    return _Plan(
        measures=measures,
        width=width,
        lo=lo,
        hi=hi,
        chol=cholesky(p.rho[lo : hi + 1, lo : hi + 1]),
        step_period=np.array(step_period, dtype=np.int64),
        step_dt=np.array(step_dt),
        horizon_steps=(measures - 1) * steps_per_period,
        sig_by_period=sig,
        loa=loa,
        coef=coef,
        corr=corr,
        use_matrix=p.drift_corr_index != "j",
        x0=x0,
    )


def _run_batch(plan: _Plan, cfg: SimConfig, batch: int, n_paths: int, stream: int) -> np.ndarray:
    """Terminal rates ``(n_meas, n_paths, width)`` for one batch."""
    rng = batch_generator(cfg.seed, batch, stream)
    x = np.repeat(plan.x0[:, :, None], n_paths, axis=2)
    dim = plan.hi - plan.lo + 1
    eps = np.zeros((plan.hi + 1, n_paths))
    euler = cfg.scheme == "euler"
    first = 0
    for s in range(len(plan.step_dt)):
        while first < len(plan.measures) and plan.horizon_steps[first] <= s:
            first += 1
        xi = rng.standard_normal((cfg.batch_size, dim))[:n_paths]
        eps[plan.lo :] = plan.chol @ xi.T
        per = plan.step_period[s]
        level = np.exp(x[first:])
        bad_m, bad_b = _advance(
            x, level, eps, plan.measures, plan.sig_by_period[per], plan.step_dt[s], plan.loa,
            plan.coef, plan.corr, plan.use_matrix, first, euler,
        )
        if bad_m >= 0:
            path = batch * cfg.batch_size + bad_b
            raise SimulationError(
                f"non-finite state: measure {plan.measures[bad_m]}, path {path}, step {s + 1}"
            )
    return np.exp(x).transpose(0, 2, 1)


def _map_batches(plan, cfg, stream, reducer):
    """Run all batches and feed terminal states to ``reducer`` in batch order."""
    jobs = list(batch_slices(cfg.paths, cfg.batch_size))

    def work(job):
        b, start, stop = job
        return _run_batch(plan, cfg, b, stop - start, stream)

    if cfg.workers == 1:
        for job in jobs:
            reducer(work(job))
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            for out in pool.map(work, jobs):
                reducer(out)


@dataclass
class MeasureStats:
    """Moments of ``Rtilde_i(T_{j-1})`` under measure ``j`` for ``i`` in ``indices``."""

    measure: int
    horizon: float
    indices: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    std: np.ndarray
    minimum: np.ndarray
    maximum: np.ndarray
    paths: int

    def at(self, i: int):
        k = int(np.searchsorted(self.indices, i))
        if k >= len(self.indices) or self.indices[k] != i:
            raise KeyError(i)
        return float(self.mean[k]), float(self.stderr[k])


def simulate_measures(rates: RateSet, p: ModelParams, grid: TenorGrid, measures: Sequence[int], width: int,
                      cfg: SimConfig, stream: int = 0) -> dict:
    """Simulate rates ``j..j+width-1`` to ``T_{j-1}`` under each measure ``j``.

    Returns ``{j: MeasureStats}``.
    """
    plan = _make_plan(rates, p, grid, measures, width, cfg.steps_per_period)
    shape = (len(plan.measures), width)
    moments = RunningMoments(shape)
    lo = np.full(shape, np.inf)
    hi = np.full(shape, -np.inf)

    def reduce(terminal):
        nonlocal lo, hi
        moments.update(terminal.transpose(1, 0, 2))
        lo = np.minimum(lo, terminal.min(axis=1))
        hi = np.maximum(hi, terminal.max(axis=1))

    _map_batches(plan, cfg, stream, reduce)
    out = {}
    for jj, j in enumerate(plan.measures):
        out[int(j)] = MeasureStats(
            measure=int(j),
            horizon=float(grid.times[j - 1]),
            indices=np.arange(j, j + width),
            mean=moments.mean[jj],
            stderr=moments.stderr[jj],
            std=moments.std[jj],
            minimum=lo[jj],
            maximum=hi[jj],
            paths=moments.count,
        )
    return out


def terminal_samples(rates: RateSet, p: ModelParams, grid: TenorGrid, measures: Sequence[int], width: int,
                     cfg: SimConfig, stream: int = 0) -> dict:
    """Terminal ``Rtilde`` samples ``{j: array (paths, width)}`` (for diagnostics and tests)."""
    plan = _make_plan(rates, p, grid, measures, width, cfg.steps_per_period)
    chunks = []
    _map_batches(plan, cfg, stream, chunks.append)
    stacked = np.concatenate(chunks, axis=1)
    return {int(j): stacked[jj] for jj, j in enumerate(plan.measures)}


def simulate_single_family(rates: RateSet, p: ModelParams, cfg: SimConfig, grid: TenorGrid,
                           last: Optional[int] = None) -> MeasureStats:
    """Moments of ``Rtilde_i(T_{j-1})``, ``i = j..last``, under measure ``j = cfg.measure``."""
    j = cfg.measure
    last = min(len(grid), p.size) - 1 if last is None else last
    if last < j:
        raise ValueError("last rate index must be >= measure")
    return simulate_measures(rates, p, grid, [j], last - j + 1, cfg)[j]


# ------------------------------------------------------------ frozen-drift bias


def refined_expectation(rates: RateSet, p: ModelParams, i: int, j: int, grid: TenorGrid, substeps: int = 16) -> float:
    """Deterministic drift-interpolation estimate of ``E^j[Rtilde_i(T_{j-1})]``.

    Instead of freezing the state in the drift at time 0, each ``Rtilde_k``
    follows its own frozen-drift mean path, tilted by the covariance with
    ``Rtilde_i`` (the measure under which ``Rtilde_i`` is the weight):
    ``m_k(u) = Rtilde_k(0) exp((mu_k^j(0) + rho_{i,k} sigma_i sigma_k) u)``.
    The difference to the frozen formula estimates the freezing bias.
    """
    r0 = rates.one_period_tilde
    alpha = grid.accruals
    times = grid.times
    row = p.corr_row(i, j)
    ks = np.arange(j + 1, i + 1)
    if ks.size == 0 or j == 1:
        return float(r0[i])
    exponent = 0.0
    log_m = np.log(r0[ks])
    for per in range(1, j):
        sig = np.array([p.vol(h, per) for h in range(len(r0))])
        frozen = np.array([float(single_family_drift(r0, p, k, j, grid, per)) for k in ks])
        tilt = p.rho[i, ks] * sig[i] * sig[ks]
        dt = (times[per] - times[per - 1]) / substeps
        for _ in range(substeps):
            m0 = np.exp(log_m)
            m1 = np.exp(log_m + (frozen + tilt) * dt)
            g0 = m0 / (m0 + p.lgd / alpha[ks])
            g1 = m1 / (m1 + p.lgd / alpha[ks])
            w = p.rho[row, ks] * sig[i] * sig[ks]
            exponent += 0.5 * dt * float(w @ (g0 + g1))
            log_m = log_m + (frozen + tilt) * dt
    return float(r0[i] * np.exp(exponent))


def freezing_bias_estimate(rates: RateSet, p: ModelParams, i: int, j: int, grid: TenorGrid) -> float:
    return refined_expectation(rates, p, i, j, grid) - convexity_adjusted_expectation(rates, p, i, j, grid)


@dataclass
class ValidationRow:
    j: int
    i: int
    formula_value: float
    mc_mean: float
    mc_se: float
    bias_estimate: float

    @property
    def z_score(self) -> float:
        return (self.mc_mean - self.formula_value) / self.mc_se if self.mc_se > 0 else 0.0

    @property
    def corrected_z_score(self) -> float:
        """Deviation from the formula shifted by the freezing-bias estimate, in standard errors."""
        resid = self.mc_mean - self.formula_value - self.bias_estimate
        return resid / self.mc_se if self.mc_se > 0 else 0.0

    @property
    def tolerance(self) -> float:
        # The simulated mean sits near formula + bias with noise on top, so the
        # two allowances add.  Rows with no randomness (j = 1) still differ from
        # the formula by rounding.
        return 3.0 * self.mc_se + abs(self.bias_estimate) + 1e-12 * abs(self.formula_value)

    @property
    def passed(self) -> bool:
        return abs(self.mc_mean - self.formula_value) <= self.tolerance


def validate_expectations(rates: RateSet, p: ModelParams, grid: TenorGrid, measures: Sequence[int], c: int,
                          cfg: SimConfig, stats: Optional[dict] = None) -> list:
    """Compare simulated ``E^j[Rtilde_i(T_{j-1})]`` with the frozen formula for ``i = j..j+c``."""
    if stats is None:
        stats = simulate_measures(rates, p, grid, measures, c + 1, cfg)
    rows = []
    for j in sorted(stats):
        st = stats[j]
        for n, i in enumerate(st.indices):
            i = int(i)
            rows.append(
                ValidationRow(
                    j=j,
                    i=i,
                    formula_value=convexity_adjusted_expectation(rates, p, i, j, grid),
                    mc_mean=float(st.mean[n]),
                    mc_se=float(st.stderr[n]),
                    bias_estimate=freezing_bias_estimate(rates, p, i, j, grid),
                )
            )
    return rows


# ------------------------------------------------------------- premium leg


@dataclass
class PremiumLegEstimate:
    value: float
    stderr: float
    per_period: np.ndarray  # alpha_j Pbar_j E^j[paid rate], j = a+1..b
    per_period_se: np.ndarray
    formula: float  # frozen-drift premium leg
    paths: int
    stats: dict = field(repr=False, default_factory=dict)

    @property
    def z_score(self) -> float:
        return (self.value - self.formula) / self.stderr if self.stderr > 0 else 0.0


def estimate_premium_leg_mc(rates: RateSet, p: ModelParams, spec: CmcdsSpec, cfg: SimConfig,
                            pbar: np.ndarray, grid: TenorGrid, stream: int = 0) -> PremiumLegEstimate:
    """Monte Carlo CMCDS premium leg with frozen annuity weights.

    Each payment ``j`` is simulated under its own measure to ``T_{j-1}``;
    measures share Brownian increments, so the standard error of the total is
    taken from per-path totals.
    """
    from ..pricer import premium_leg

    spec.validate(grid)
    measures = np.arange(spec.a + 1, spec.b + 1)
    width = spec.c + 1
    plan = _make_plan(rates, p, grid, measures, width, cfg.steps_per_period)
    scale = np.array([grid.accruals[j] * pbar[j] for j in plan.measures])
    weights = np.array([annuity_weights(pbar, grid, j, j + spec.c) for j in plan.measures])
    per_j = RunningMoments((len(plan.measures),))
    total = RunningMoments()
    rate_moments = RunningMoments((len(plan.measures), width))

    def reduce(terminal):
        paid = np.einsum("jbm,jm->bj", terminal, weights) * scale
        per_j.update(paid)
        total.update(paid.sum(axis=1))
        rate_moments.update(terminal.transpose(1, 0, 2))

    _map_batches(plan, cfg, stream, reduce)
    stats = {
        int(j): MeasureStats(int(j), float(grid.times[j - 1]), np.arange(j, j + width), rate_moments.mean[jj],
                             rate_moments.stderr[jj], rate_moments.std[jj], np.full(width, np.nan),
                             np.full(width, np.nan), rate_moments.count)
        for jj, j in enumerate(plan.measures)
    }
    return PremiumLegEstimate(
        value=float(total.mean),
        stderr=float(total.stderr),
        per_period=per_j.mean,
        per_period_se=per_j.stderr,
        formula=premium_leg(rates, p, spec, pbar, grid),
        paths=total.count,
        stats=stats,
    )


def frozen_exponent_by_integration(rates: RateSet, p: ModelParams, i: int, j: int, grid: TenorGrid) -> float:
    """``int_0^{T_{j-1}} mu_i^j(Rtilde(0)) du`` summed period by period."""
    r0 = rates.one_period_tilde
    times = grid.times
    return float(sum(single_family_drift(r0, p, i, j, grid, per) * (times[per] - times[per - 1]) for per in range(1, j)))


__all__ = [
    "SimConfig",
    "SimulationError",
    "MeasureStats",
    "ValidationRow",
    "PremiumLegEstimate",
    "single_family_drift",
    "simulate_single_family",
    "simulate_measures",
    "terminal_samples",
    "validate_expectations",
    "estimate_premium_leg_mc",
    "refined_expectation",
    "freezing_bias_estimate",
    "frozen_exponent_by_integration",
    "adjustment_exponent",
]
