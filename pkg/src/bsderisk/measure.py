"""Discrete stochastic exponentials and measure-change machinery.

For integrands phi_z (Brownian) and phi_k (per jump mark), the candidate
density process is the exact per-step Doleans-Dade factorization

  L_{i+1} = L_i * exp(phi_z dW_i - phi_z^2 dt / 2)
                * prod_k (1 + phi_k)^{dN_{k,i}} * exp(-phi_k lambda_k dt),

whose one-step conditional expectation is exactly 1, so L is a discrete-time
martingale by construction and E[L(T)] = 1 up to sampling noise only.
Expectations under the new measure are estimated with self-normalized
importance weights: divide by the sample (or conditional) mean of L(T)
rather than trusting raw weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bsde import RegressionConfig, condexp_at_node
from .errors import EstimatorFailure, SignedDensityFailure
from .market import PathBundle

__all__ = [
    "RNProcess",
    "KazamakiReport",
    "MartingaleReport",
    "GirsanovReport",
    "doleans_dade",
    "kazamaki_check",
    "martingale_diagnostic",
    "weighted_condexp",
    "reweighted_expectation",
    "girsanov_shift_check",
]


@dataclass(frozen=True)
class RNProcess:
    """Candidate Radon-Nikodym density path with its integrands.

    lam      (M, N+1) density path, lam[:, 0] == 1
    phi_z    (M, N)   Brownian integrand on [t_i, t_{i+1})
    phi_jump (M, N, K) per-mark jump integrands
    """

    bundle: PathBundle
    lam: np.ndarray
    phi_z: np.ndarray
    phi_jump: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        return self.lam[:, -1]


def doleans_dade(
    bundle: PathBundle, phi_z: np.ndarray, phi_jump: np.ndarray | None = None
) -> RNProcess:
    """Build the stochastic exponential of int phi_z dW + sum_k int phi_k dN~_k.

    Integrands must be adapted: the value at step i is the one in force on
    [t_i, t_{i+1}). A factor 1 + phi_k <= 0 at a realized jump makes the
    density signed and raises SignedDensityFailure.
    """
    m, n, k = bundle.path_count, bundle.grid.step_count, bundle.mark_count
    dt = bundle.grid.dt
    pz = np.broadcast_to(np.asarray(phi_z, dtype=float), (m, n))
    if phi_jump is None:
        pj = np.zeros((m, n, k))
    else:
        pj = np.broadcast_to(np.asarray(phi_jump, dtype=float), (m, n, k))
    if not (np.all(np.isfinite(pz)) and np.all(np.isfinite(pj))):
        raise ValueError("integrands must be finite")

    if k:
        bad = (1.0 + pj <= 0.0) & (bundle.dn > 0)
        if np.any(bad):
            paths = np.flatnonzero(bad.any(axis=(1, 2)))
            raise SignedDensityFailure(
                f"non-positive per-jump factor at a realized jump on "
                f"{paths.size} paths (first: {paths[:5]})",
                paths=paths,
            )

    lam = np.empty((m, n + 1))
    lam[:, 0] = 1.0
    # the finiteness guard below turns any overflow into a typed failure
    with np.errstate(over="ignore", invalid="ignore"):
        log_diffusion = pz * bundle.dw - 0.5 * pz * pz * dt
        factors = np.exp(log_diffusion)
        if k:
            lam_dt = bundle.model.jump_intensities * dt
            jump_part = (1.0 + pj) ** bundle.dn * np.exp(-pj * lam_dt)
            factors = factors * jump_part.prod(axis=2)
        np.cumprod(factors, axis=1, out=lam[:, 1:])
    if not np.all(np.isfinite(lam)):
        raise EstimatorFailure("density path overflowed to non-finite values")
    return RNProcess(bundle=bundle, lam=lam, phi_z=pz, phi_jump=pj)


@dataclass(frozen=True)
class KazamakiReport:
    """Uniform lower-bound check on jump integrands: phi_k >= -1 + delta."""

    delta: float
    worst_margin: float
    passed: bool


def kazamaki_check(rn: RNProcess, delta: float = 1e-6) -> KazamakiReport:
    """Check the jump integrands stay uniformly above -1 + delta.

    The bound is what certifies the stochastic exponential as a true
    martingale for this jump structure; vacuously true with no marks.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if rn.phi_jump.size == 0:
        return KazamakiReport(delta=delta, worst_margin=np.inf, passed=True)
    worst = float(rn.phi_jump.min() - (-1.0 + delta))
    return KazamakiReport(delta=delta, worst_margin=worst, passed=worst >= 0.0)


@dataclass(frozen=True)
class MartingaleReport:
    """Cross-path mean of the density at every node, against 1."""

    means: np.ndarray
    std_errors: np.ndarray
    k_sigma: float

    @property
    def flagged(self) -> np.ndarray:
        return np.flatnonzero(np.abs(self.means - 1.0) > self.k_sigma * self.std_errors)

    @property
    def passed(self) -> bool:
        return self.flagged.size == 0


def martingale_diagnostic(rn: RNProcess, k_sigma: float = 3.0) -> MartingaleReport:
    m = rn.bundle.path_count
    means = rn.lam.mean(axis=0)
    ses = rn.lam.std(axis=0) / np.sqrt(m)
    return MartingaleReport(means=means, std_errors=ses, k_sigma=k_sigma)


def weighted_condexp(
    bundle: PathBundle,
    weights: np.ndarray,
    payload: np.ndarray,
    node: int = 0,
    config: RegressionConfig = RegressionConfig(),
) -> np.ndarray:
    """Self-normalized weighted conditional mean fit(w * h) / fit(w) at a node.

    Wherever the conditional estimate of the weights is not strictly
    positive the normalization is meaningless and EstimatorFailure is
    raised, listing the offending paths.
    """
    w = np.asarray(weights, dtype=float)
    h = np.asarray(payload, dtype=float)
    if w.shape != (bundle.path_count,) or h.shape != (bundle.path_count,):
        raise ValueError("weights and payload must be per-path vectors")
    if w.size and np.all(w == w[0]):
        # constant weights cancel exactly; keep the unweighted estimator bit-for-bit
        return condexp_at_node(bundle, node, h, config)
    num = condexp_at_node(bundle, node, w * h, config)
    den = condexp_at_node(bundle, node, w, config)
    bad = np.flatnonzero(den <= 0.0)
    if bad.size:
        raise EstimatorFailure(
            f"non-positive weight normalizer on {bad.size} paths (first: {bad[:5]})",
            paths=bad,
        )
    return num / den


def reweighted_expectation(
    rn: RNProcess,
    payload: np.ndarray,
    node: int = 0,
    config: RegressionConfig = RegressionConfig(),
) -> np.ndarray:
    """E under the reweighted measure of a terminal payload, given F_{t_node}.

    Uses terminal weights L(T); the F_t-measurable factor L(t) cancels in
    the self-normalized ratio, so no division by the running density is
    needed. Returns per-path values (constant across paths at node 0).
    """
    return weighted_condexp(rn.bundle, rn.terminal, payload, node, config)


@dataclass(frozen=True)
class GirsanovReport:
    """Reweighted increment means against their predicted drifts, per step."""

    dw_gap: np.ndarray
    dw_se: np.ndarray
    dn_gap: np.ndarray
    dn_se: np.ndarray
    k_sigma: float

    @property
    def worst_z(self) -> float:
        zs = [np.abs(self.dw_gap) / np.where(self.dw_se > 0, self.dw_se, np.inf)]
        if self.dn_gap.size:
            zs.append(np.abs(self.dn_gap) / np.where(self.dn_se > 0, self.dn_se, np.inf))
        return float(max(z.max() for z in zs))

    @property
    def passed(self) -> bool:
        return self.worst_z <= self.k_sigma


def girsanov_shift_check(rn: RNProcess, k_sigma: float = 4.0) -> GirsanovReport:
    """Check the measure change moves increments the way it should.

    Under the reweighted measure, E[dW_i] = E[phi_z(t_i)] dt and
    E[dN_{k,i}] = lambda_k E[1 + phi_k(t_i)] dt, both exactly at the
    discrete level. Gaps are self-normalized weighted means of
    d = increment - predicted drift, with importance-sampling standard
    errors sqrt(sum w_m^2 (d_m - gap)^2) for normalized weights w.
    """
    b = rn.bundle
    n, k = b.grid.step_count, b.mark_count
    dt = b.grid.dt
    w = rn.terminal / rn.terminal.sum()

    def norm_mean_se(d):
        gap = float(w @ d)
        se = float(np.sqrt((w * w) @ ((d - gap) ** 2)))
        return gap, se

    dw_gap = np.empty(n)
    dw_se = np.empty(n)
    dn_gap = np.empty((n, k))
    dn_se = np.empty((n, k))
    lam = b.model.jump_intensities
    for i in range(n):
        dw_gap[i], dw_se[i] = norm_mean_se(b.dw[:, i] - rn.phi_z[:, i] * dt)
        for j in range(k):
            predicted = lam[j] * (1.0 + rn.phi_jump[:, i, j]) * dt
            dn_gap[i, j], dn_se[i, j] = norm_mean_se(b.dn[:, i, j] - predicted)
    return GirsanovReport(
        dw_gap=dw_gap, dw_se=dw_se, dn_gap=dn_gap, dn_se=dn_se, k_sigma=k_sigma
    )
