"""Joint simulation of one-period rates ``R_j = R_{j-1,j}`` and two-period
rates ``R2_j = R_{j-2,j}`` under the measure of a single numeraire
``C_{i-1,i}``.

Both families are lognormal with deterministic ``sigma`` and state-dependent
``nu``.  The drifts follow from changing numeraire to ``C_{i-1,i}``, with the
defaultable bond ratios expressed through the rates themselves:

    alpha_k Pbar_k / (alpha_{k-1} Pbar_{k-1}) = (R_{k-1} - R2_k)/(R2_k - R_k).

Writing ``A`` and ``B`` for the two fractions below, the shock drifts are

    mubar_m^{i,h} = sum_{k=i+1}^{h} ( -A_k^m + B_k^m ),
        A_k^m = (rho_{k-1,m} sigma_{k-1} R_{k-1} - theta_{m,k} nu_k R2_k)/(R_{k-1} - R2_k)
        B_k^m = (theta_{m,k} nu_k R2_k - rho_{k,m} sigma_k R_k)/(R2_k - R_k)

and ``phibar_m^{i,j}`` is the same sum up to ``j-1`` with ``Z``/``V``
correlations swapped in, plus two closing terms for ``ln(C_{j-2,j}/C_{j-1,j})``
(with one extra term when ``j = i``, see ``phibar``).
The rate drifts are ``mu_j = sigma_j mubar_j^{i,j}`` and
``phi_j = nu_j phibar_j^{i,j}``.

``R2_j`` must stay strictly between ``R_{j-1}`` and ``(R_{j-1}+R_j)/2`` so that
the implied bond ratios are in ``(0, 1)``; steps that leave this region are
resampled or the path is absorbed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from ..market import TenorGrid
from ..stripping import RateSet
from .cholesky import cholesky
from .rng import batch_generator, batch_slices
from .single_family import SimConfig, SimulationError
from .stats import RunningMoments

MIN_DENOMINATOR = 1e-12
MAX_RETRIES = 100
POLICIES = ("reject", "absorb")


class AdmissibilityError(ValueError):
    pass


class BreachRateError(SimulationError):
    pass


NuSpec = Union[np.ndarray, Callable[[float, np.ndarray, np.ndarray], np.ndarray]]


@dataclass(frozen=True, eq=False)
class DualModelParams:
    """Volatilities and correlations of the joint one-/two-period model.

    Arrays are indexed by grid index ``0..n-1`` (index 0 is unused).  ``nu`` is
    either an array of constants or a callable ``nu(t, R, R2)`` returning
    volatilities with the shape of ``R2``.  The total correlation of
    ``(Z_0..Z_{n-1}, V_0..V_{n-1})`` is ``[[rho, theta], [theta.T, eta]]``
    with ``theta[a, b] = corr(Z_a, V_b)``.
    """

    sigma: np.ndarray
    nu: NuSpec
    rho: np.ndarray
    eta: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=float)
        n = sigma.shape[0]
        mats = {}
        for name in ("rho", "eta", "theta"):
            a = np.array(getattr(self, name), dtype=float)
            if a.shape != (n, n):
                raise ValueError(f"{name} must have shape ({n}, {n})")
            mats[name] = a
        if not callable(self.nu):
            nu = np.array(self.nu, dtype=float)
            if nu.shape != (n,) or np.any(nu < 0):
                raise ValueError(f"nu must be {n} non-negative constants or a callable")
            object.__setattr__(self, "nu", nu)
        if np.any(sigma < 0):
            raise ValueError("volatilities must be non-negative")
        object.__setattr__(self, "sigma", sigma)
        for name, a in mats.items():
            object.__setattr__(self, name, a)
        q = self.total_correlation()
        if not np.allclose(q, q.T, atol=1e-12, rtol=0) or not np.allclose(np.diag(q), 1.0, atol=1e-12, rtol=0):
            raise ValueError("total correlation must be symmetric with unit diagonal")
        cholesky(q)  # raises on an indefinite matrix

    @property
    def size(self) -> int:
        return self.sigma.shape[0]

    def total_correlation(self) -> np.ndarray:
        return np.block([[self.rho, self.theta], [self.theta.T, self.eta]])

    def nu_at(self, t: float, R: np.ndarray, R2: np.ndarray) -> np.ndarray:
        if callable(self.nu):
            out = np.asarray(self.nu(t, R, R2), dtype=float)
            if out.shape != R2.shape:
                raise ValueError(f"nu callable returned shape {out.shape}, expected {R2.shape}")
            return out
        return np.broadcast_to(self.nu, R2.shape)

    @classmethod
    def flat(cls, n: int, sigma: float, nu: float, rho: float, eta: float, theta: float) -> "DualModelParams":
        def block(v, diag):
            a = np.full((n, n), float(v))
            if diag:
                np.fill_diagonal(a, 1.0)
            return a

        return cls(np.full(n, float(sigma)), np.full(n, float(nu)), block(rho, True), block(eta, True), block(theta, False))


@dataclass
class PathState:
    """Rates by grid index; leading axes index paths.  Unused slots are NaN."""

    time_index: int
    R: np.ndarray
    R2: np.ndarray


def admissible(R: np.ndarray, R2: np.ndarray, indices) -> np.ndarray:
    """Whether each ``R2_k`` lies strictly inside its interval, per leading index."""
    ok = np.ones(R.shape[:-1], dtype=bool)
    for k in indices:
        lo_ = R[..., k - 1]
        mid = 0.5 * (R[..., k - 1] + R[..., k])
        ok &= (R2[..., k] > np.minimum(lo_, mid)) & (R2[..., k] < np.maximum(lo_, mid))
    return ok


def _ratio(num, den):
    if np.any(np.abs(den) < MIN_DENOMINATOR):
        raise SimulationError("near-degenerate rates: denominator below 1e-12 in dual drift")
    return num / den


def _z_terms(R, R2, s, nu, p, m, ks):
    """``-A_k^m + B_k^m`` for ``k`` in ``ks`` (last axis)."""
    a = _ratio(p.rho[ks - 1, m] * s[ks - 1] * R[..., ks - 1] - p.theta[m, ks] * nu[..., ks] * R2[..., ks],
               R[..., ks - 1] - R2[..., ks])
    b = _ratio(p.theta[m, ks] * nu[..., ks] * R2[..., ks] - p.rho[ks, m] * s[ks] * R[..., ks],
               R2[..., ks] - R[..., ks])
    return b - a


def _v_terms(R, R2, s, nu, p, m, ks):
    a = _ratio(p.theta[ks - 1, m] * s[ks - 1] * R[..., ks - 1] - p.eta[m, ks] * nu[..., ks] * R2[..., ks],
               R[..., ks - 1] - R2[..., ks])
    b = _ratio(p.eta[m, ks] * nu[..., ks] * R2[..., ks] - p.theta[ks, m] * s[ks] * R[..., ks],
               R2[..., ks] - R[..., ks])
    return b - a


def mubar(state: PathState, p: DualModelParams, i: int, h: int, m: int, nu: np.ndarray) -> np.ndarray:
    """Drift of ``Z_m`` under measure ``h`` relative to measure ``i``.

    For ``h < i`` the relation is inverted: ``mubar^{i,h} = -mubar^{h,i}``.
    """
    R, R2 = state.R, state.R2
    if h < i:
        return -mubar(state, p, h, i, m, nu)
    ks = np.arange(i + 1, h + 1)
    if ks.size == 0:
        return np.zeros(R.shape[:-1])
    return _z_terms(R, R2, p.sigma, nu, p, m, ks).sum(axis=-1)


def phibar(state: PathState, p: DualModelParams, i: int, j: int, m: int, nu: np.ndarray) -> np.ndarray:
    """Drift of ``V_m`` under the measure of ``C_{j-2,j}`` relative to measure ``i`` (``j >= i``)."""
    R, R2, s = state.R, state.R2, p.sigma
    if j < i:
        raise ValueError("phibar needs j >= i")
    ks = np.arange(i + 1, j)
    total = _v_terms(R, R2, s, nu, p, m, ks).sum(axis=-1) if ks.size else np.zeros(R.shape[:-1])
    total = total - _ratio(p.theta[j - 1, m] * s[j - 1] * R[..., j - 1] - p.theta[j, m] * s[j] * R[..., j],
                           R[..., j - 1] - R[..., j])
    total = total + _ratio(p.eta[j, m] * nu[..., j] * R2[..., j] - p.theta[j, m] * s[j] * R[..., j],
                           R2[..., j] - R[..., j])
    if j == i:
        # The sum above presumes j > i, where alpha_{j-1} Pbar_{j-1} / (alpha_i Pbar_i) is a product
        # over k = i+1..j-1.  For j = i that ratio is the inverse bond ratio at i, whose log-diffusion
        # term must be taken out again.
        total = total - _v_terms(R, R2, s, nu, p, m, np.array([i])).sum(axis=-1)
    return total


def _layout(measure: int, n: int):
    """Grid indices of simulated one- and two-period rates under ``measure``."""
    r_idx = np.arange(max(measure - 1, 1), n)
    r2_idx = np.arange(max(measure, 2), n)
    return r_idx, r2_idx


def dual_family_drifts(state: PathState, p: DualModelParams, measure: int, grid: Optional[TenorGrid] = None,
                       t: float = 0.0):
    """Drift rates ``(mu, phi)`` of ``R`` and ``R2`` under the measure of ``C_{measure-1,measure}``.

    Returned arrays have the shape of ``state.R``; entries of rates outside the
    simulated set are NaN.
    """
    n = p.size
    if state.R.shape[-1] != n or state.R2.shape[-1] != n:
        raise ValueError(f"state vectors must have length {n}")
    if grid is not None and len(grid) < n:
        raise ValueError("grid shorter than the parameter vectors")
    r_idx, r2_idx = _layout(measure, n)
    nu = p.nu_at(t, state.R, state.R2)
    mu = np.full(state.R.shape, np.nan)
    phi = np.full(state.R2.shape, np.nan)
    for h in r_idx:
        mu[..., h] = p.sigma[h] * mubar(state, p, measure, int(h), int(h), nu)
    for j in r2_idx:
        phi[..., j] = nu[..., j] * phibar(state, p, measure, int(j), int(j), nu)
    return mu, phi


@dataclass
class DualResult:
    """Horizon statistics of a dual-family run."""

    measure: int
    horizon_index: int
    r_indices: np.ndarray
    r2_indices: np.ndarray
    mean_R: np.ndarray
    se_R: np.ndarray
    mean_R2: np.ndarray
    se_R2: np.ndarray
    paths: int
    breaches: int  # proposals rejected for leaving the admissible region
    flagged: int  # paths absorbed after exhausting retries (or at once under "absorb")
    proposals: int
    samples_R: Optional[np.ndarray] = None
    samples_R2: Optional[np.ndarray] = None

    @property
    def breach_rate(self) -> float:
        return self.breaches / self.proposals if self.proposals else 0.0


def simulate_dual_family(
    rates: RateSet,
    p: DualModelParams,
    cfg: SimConfig,
    grid: TenorGrid,
    horizon_index: Optional[int] = None,
    *,
    policy: str = "reject",
    max_breach_rate: float = 0.05,
    keep_samples: bool = False,
    stream: int = 1,
) -> DualResult:
    """Simulate ``(R, R2)`` under measure ``cfg.measure`` up to ``T_{horizon_index}``.

    The horizon defaults to ``T_{measure-1}``.  Each step uses the log scheme
    with drifts re-evaluated at the current state.  Proposals leaving the
    admissible region are resampled up to 100 times under ``"reject"``; paths
    that still fail, or any failing path under ``"absorb"``, are frozen and
    counted in ``flagged``.  A breach rate above ``max_breach_rate`` aborts.
    """
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}")
    if rates.two_period is None:
        raise ValueError("dual simulation needs two-period rates")
    n = p.size
    if n > len(grid):
        raise ValueError("parameters cover more indices than the grid")
    i_star = cfg.measure
    horizon = i_star - 1 if horizon_index is None else int(horizon_index)
    if not 0 <= horizon < n:
        raise ValueError("horizon index outside the grid")
    r_idx, r2_idx = _layout(i_star, n)
    R0 = np.full(n, np.nan)
    R20 = np.full(n, np.nan)
    R0[r_idx] = rates.one_period[r_idx]
    R20[r2_idx] = rates.two_period[r2_idx]
    if np.any(~(R0[r_idx] > 0)) or np.any(~(R20[r2_idx] > 0)):
        raise ValueError("initial rates must be positive")
    if not admissible(R0, R20, r2_idx):
        bad = [int(k) for k in r2_idx if not admissible(R0, R20, [k])]
        raise AdmissibilityError(f"initial two-period rates outside the admissible interval at indices {bad}")

    dims = np.concatenate([r_idx, n + r2_idx])
    chol = cholesky(p.total_correlation()[np.ix_(dims, dims)])
    nz = len(r_idx)
    times = grid.times
    steps = [(per, (times[per] - times[per - 1]) / cfg.steps_per_period) for per in range(1, horizon + 1)
             for _ in range(cfg.steps_per_period)]

    mom_r = RunningMoments((len(r_idx),))
    mom_r2 = RunningMoments((len(r2_idx),))
    breaches = flagged = proposals = 0
    kept_r, kept_r2 = [], []

    for b, start, stop in batch_slices(cfg.paths, cfg.batch_size):
        rng = batch_generator(cfg.seed, b, stream)
        B = stop - start
        R = np.tile(R0, (B, 1))
        R2 = np.tile(R20, (B, 1))
        alive = np.ones(B, dtype=bool)
        t = 0.0
        for s, (per, dt) in enumerate(steps):
            state = PathState(per - 1, R, R2)
            mu, phi = dual_family_drifts(state, p, i_star, t=t)
            nu = p.nu_at(t, R, R2)
            sig = p.sigma[r_idx]
            drift_x = (mu[:, r_idx] - 0.5 * sig**2) * dt
            drift_y = (phi[:, r2_idx] - 0.5 * nu[:, r2_idx] ** 2) * dt
            vol_x = sig * np.sqrt(dt)
            vol_y = nu[:, r2_idx] * np.sqrt(dt)

            def propose(rows):
                eps = rng.standard_normal((len(rows), len(dims))) @ chol.T
                newR, newR2 = R[rows].copy(), R2[rows].copy()
                newR[:, r_idx] = R[rows][:, r_idx] * np.exp(drift_x[rows] + vol_x * eps[:, :nz])
                newR2[:, r2_idx] = R2[rows][:, r2_idx] * np.exp(drift_y[rows] + vol_y[rows] * eps[:, nz:])
                return newR, newR2

            pending = np.flatnonzero(alive)
            newR, newR2 = R.copy(), R2.copy()
            for attempt in range(MAX_RETRIES + 1):
                if pending.size == 0:
                    break
                with np.errstate(over="ignore", invalid="ignore"):
                    cand_R, cand_R2 = propose(pending)
                proposals += pending.size
                ok = admissible(cand_R, cand_R2, r2_idx) & np.all(np.isfinite(cand_R[:, r_idx]), axis=1)
                newR[pending[ok]] = cand_R[ok]
                newR2[pending[ok]] = cand_R2[ok]
                breaches += int((~ok).sum())
                pending = pending[~ok]
                if policy == "absorb":
                    break
            if pending.size:
                alive[pending] = False
                flagged += pending.size
            R, R2 = newR, newR2
            t += dt
            if proposals and breaches / proposals > max_breach_rate:
                raise BreachRateError(
                    f"admissibility breach rate {breaches / proposals:.4g} exceeds {max_breach_rate} "
                    f"(batch {b}, step {s + 1})"
                )
        mom_r.update(R[:, r_idx])
        mom_r2.update(R2[:, r2_idx])
        if keep_samples:
            kept_r.append(R[:, r_idx])
            kept_r2.append(R2[:, r2_idx])

    return DualResult(
        measure=i_star,
        horizon_index=horizon,
        r_indices=r_idx,
        r2_indices=r2_idx,
        mean_R=mom_r.mean,
        se_R=mom_r.stderr,
        mean_R2=mom_r2.mean,
        se_R2=mom_r2.stderr,
        paths=mom_r.count,
        breaches=breaches,
        flagged=flagged,
        proposals=proposals,
        samples_R=np.concatenate(kept_r) if keep_samples else None,
        samples_R2=np.concatenate(kept_r2) if keep_samples else None,
    )
