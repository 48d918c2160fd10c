"""Market state: time grid, arithmetic jump-diffusion model, path bundles, payoffs.

The state process is the arithmetic Ito-Levy dynamic

    dX(t) = mu dt + sigma dW(t) + sum_k zeta_k dN_k(t),

driven by one Brownian motion and K independent Poisson processes with
intensities lambda_k, i.e. a discrete finite-activity Levy measure
nu = sum_k lambda_k delta_{zeta_k}. Every jump integral downstream is a
finite sum over the K marks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedPayoff

__all__ = [
    "TimeGrid",
    "JumpMark",
    "LevyModel",
    "PathBundle",
    "Payoff",
    "AffinePayoff",
    "ExpAffinePayoff",
    "PolynomialPayoff",
    "ClippedPayoff",
    "PortfolioPayoff",
    "build_grid",
    "simulate_paths",
    "terminal_values",
]

_MAX_SEED = 2**64


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition 0 = t_0 < ... < t_N = T."""

    horizon: float
    step_count: int

    def __post_init__(self):
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")
        if self.step_count < 1:
            raise ValueError(f"step_count must be >= 1, got {self.step_count}")

    @property
    def dt(self) -> float:
        return self.horizon / self.step_count

    @property
    def nodes(self) -> np.ndarray:
        # i/N is computed first so t_N == horizon exactly, whatever (T, N) are
        return self.horizon * (np.arange(self.step_count + 1) / self.step_count)


def build_grid(horizon: float, step_count: int) -> TimeGrid:
    """Construct a uniform grid; thin wrapper kept for symmetry with the CLI."""
    return TimeGrid(float(horizon), int(step_count))


@dataclass(frozen=True)
class JumpMark:
    """One atom of the jump measure: fixed size and Poisson intensity."""

    size: float
    intensity: float

    def __post_init__(self):
        if self.size == 0.0 or not math.isfinite(self.size):
            raise ValueError(f"jump size must be nonzero and finite, got {self.size}")
        if not (self.intensity > 0.0 and math.isfinite(self.intensity)):
            raise ValueError(f"jump intensity must be positive, got {self.intensity}")


@dataclass(frozen=True)
class LevyModel:
    """Arithmetic jump diffusion with constant coefficients."""

    x0: float
    mu: float = 0.0
    sigma: float = 0.0
    jumps: tuple[JumpMark, ...] = ()

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        sizes = [j.size for j in self.jumps]
        if len(set(sizes)) != len(sizes):
            raise ValueError("jump mark sizes must be distinct")

    @property
    def mark_count(self) -> int:
        return len(self.jumps)

    @property
    def jump_sizes(self) -> np.ndarray:
        return np.array([j.size for j in self.jumps])

    @property
    def jump_intensities(self) -> np.ndarray:
        return np.array([j.intensity for j in self.jumps])

    def terminal_mean(self, horizon: float) -> float:
        """E[X(T)] = x0 + mu T + sum_k lambda_k zeta_k T."""
        drift = self.mu + sum(j.intensity * j.size for j in self.jumps)
        return self.x0 + drift * horizon

    def terminal_variance(self, horizon: float) -> float:
        """Var[X(T)] = sigma^2 T + sum_k lambda_k zeta_k^2 T."""
        rate = self.sigma**2 + sum(j.intensity * j.size**2 for j in self.jumps)
        return rate * horizon


@dataclass(frozen=True)
class PathBundle:
    """Simulated increments and states on a grid; treated as immutable.

    dw       Brownian increments, shape (M, N)
    dn       Poisson jump counts per mark, shape (M, N, K), integer
    state    X at every node, shape (M, N+1); state[:, 0] == x0
    """

    grid: TimeGrid
    model: LevyModel
    path_count: int
    seed: int
    dw: np.ndarray
    dn: np.ndarray
    state: np.ndarray

    @property
    def mark_count(self) -> int:
        return self.model.mark_count

    @property
    def terminal(self) -> np.ndarray:
        return self.state[:, -1]

    def compensated_dn(self) -> np.ndarray:
        """Jump increments minus their compensator: dN_k - lambda_k dt, shape (M, N, K)."""
        lam = self.model.jump_intensities
        return self.dn - lam[None, None, :] * self.grid.dt


def _stream(seed: int, channel: int, step: int) -> np.random.Generator:
    # one counter-based stream per (channel, step); path m reads slot m, so
    # growing the path count extends a bundle without touching earlier paths
    ss = np.random.SeedSequence(seed, spawn_key=(channel, step))
    return np.random.Generator(np.random.Philox(ss))


def simulate_paths(
    grid: TimeGrid, model: LevyModel, path_count: int, seed: int
) -> PathBundle:
    """Simulate M paths of the arithmetic jump diffusion on the grid.

    Increments are exact in distribution per step (Gaussian and Poisson);
    the state recursion X_{i+1} = X_i + mu dt + sigma dW_i + sum_k zeta_k dN_{k,i}
    is itself exact for this model, so there is no discretization bias in X.

    Reproducibility contract: identical (grid, model, path_count, seed)
    gives a bit-identical bundle; increasing path_count alone extends the
    bundle, leaving existing paths bit-identical.
    """
    if path_count < 1:
        raise ValueError(f"path_count must be >= 1, got {path_count}")
    if not (0 <= seed < _MAX_SEED):
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")

    m, n, k = path_count, grid.step_count, model.mark_count
    dt = grid.dt
    root_dt = math.sqrt(dt)

    dw = np.empty((m, n))
    dn = np.zeros((m, n, k), dtype=np.int64)
    for i in range(n):
        dw[:, i] = _stream(seed, 0, i).standard_normal(m) * root_dt
        for j in range(k):
            lam = model.jumps[j].intensity
            dn[:, i, j] = _stream(seed, 1 + j, i).poisson(lam * dt, m)

    increments = model.mu * dt + model.sigma * dw
    if k:
        increments = increments + dn @ model.jump_sizes
    state = np.empty((m, n + 1))
    state[:, 0] = model.x0
    np.cumsum(increments, axis=1, out=state[:, 1:])
    state[:, 1:] += model.x0

    return PathBundle(grid, model, path_count, seed, dw, dn, state)


# --------------------------------------------------------------------------
# payoffs


class Payoff:
    """Terminal claim xi = f(X(T)) from a closed family of maps f.

    The family is kept closed so the jump derivative f(x + zeta) - f(x) and
    the a.e. slope f'(x) are available without symbolic machinery.
    """

    bounded: bool = False
    components: tuple["Payoff", ...] | None = None

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def slope(self, x: np.ndarray) -> np.ndarray:
        """Almost-everywhere derivative f'(x)."""
        raise NotImplementedError

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.value(x)


@dataclass(frozen=True)
class AffinePayoff(Payoff):
    """f(x) = a + b x."""

    a: float
    b: float

    def value(self, x):
        return self.a + self.b * np.asarray(x, dtype=float)

    def slope(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.b)


@dataclass(frozen=True)
class ExpAffinePayoff(Payoff):
    """f(x) = a * exp(b x)."""

    a: float
    b: float

    def value(self, x):
        return self.a * np.exp(self.b * np.asarray(x, dtype=float))

    def slope(self, x):
        return self.b * self.value(x)


@dataclass(frozen=True)
class PolynomialPayoff(Payoff):
    """f(x) = sum_j coeffs[j] * x^j, degree at most 4 (ascending order)."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        if not 1 <= len(self.coeffs) <= 5:
            raise UnsupportedPayoff(
                f"polynomial payoffs support degree <= 4, got {len(self.coeffs) - 1}"
            )

    def value(self, x):
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.coeffs)

    def slope(self, x):
        deriv = np.polynomial.polynomial.polyder(self.coeffs)
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), deriv)


@dataclass(frozen=True)
class ClippedPayoff(Payoff):
    """f(x) = clip(inner(x), lo, hi); bounded, slope 0 outside the band."""

    inner: Payoff
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"clip bounds must satisfy lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def bounded(self) -> bool:  # type: ignore[override]
        return True

    def value(self, x):
        return np.clip(self.inner.value(x), self.lo, self.hi)

    def slope(self, x):
        v = self.inner.value(x)
        inside = (v > self.lo) & (v < self.hi)
        return np.where(inside, self.inner.slope(x), 0.0)


@dataclass(frozen=True)
class PortfolioPayoff(Payoff):
    """Sum of component payoffs, evaluated in fixed component order.

    The components double as the capital-allocation decomposition
    [eta_1, ..., eta_n]; because evaluation *is* the ordered sum, the
    per-path identity sum_i eta_i(X(T)) = xi(X(T)) holds bit-exactly.
    """

    parts: tuple[Payoff, ...]

    def __post_init__(self):
        if not self.parts:
            raise ValueError("portfolio payoff needs at least one component")

    @property
    def components(self):  # type: ignore[override]
        return self.parts

    @property
    def bounded(self) -> bool:  # type: ignore[override]
        return all(p.bounded for p in self.parts)

    def value(self, x):
        total = self.parts[0].value(x)
        for p in self.parts[1:]:
            total = total + p.value(x)
        return total

    def slope(self, x):
        total = self.parts[0].slope(x)
        for p in self.parts[1:]:
            total = total + p.slope(x)
        return total


def terminal_values(bundle: PathBundle, payoff: Payoff) -> np.ndarray:
    """Evaluate xi = f(X(T)) on every path, shape (M,)."""
    with np.errstate(over="ignore", invalid="ignore"):
        out = payoff.value(bundle.terminal)
    if not np.all(np.isfinite(out)):
        bad = np.flatnonzero(~np.isfinite(out))
        raise UnsupportedPayoff(
            f"payoff produced non-finite values on {bad.size} paths (first: {bad[:5]})"
        )
    return out
