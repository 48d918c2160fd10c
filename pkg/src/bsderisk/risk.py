"""Dynamic and static risk measures induced by the backward equations.

The dynamic risk of a claim xi is rho_t(xi) = Y(t) where (Y, Z, Ups) solves
the BSDE with terminal value -xi; with a y-free driver this makes rho
translation-invariant (rho(xi + m) = rho(xi) - m) and normalizes
rho_T(xi) = -xi exactly. The entropic driver admits the closed form
rho_t(xi) = (1/gamma) ln E[ e^{-gamma xi} | F_t ], used both as an
independent cross-check and as a cheap engine mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .bsde import BsdeSolution, RegressionConfig, condexp_at_node, solve_bsde
from .drivers import Driver
from .errors import EstimatorFailure, RootFailure
from .market import PathBundle, Payoff, terminal_values

__all__ = [
    "RiskEngine",
    "CoherentStaticResult",
    "AxiomRow",
    "AxiomReport",
    "dynamic_risk",
    "risk_solution",
    "entropic_closed_form",
    "entropic_coherent_static",
    "axiom_suite",
]

MODES = ("bsde", "entropic-closed-form")


@dataclass(frozen=True)
class RiskEngine:
    """A bundle, a driver and an evaluation mode, packaged for reuse."""

    bundle: PathBundle
    driver: Driver
    config: RegressionConfig = RegressionConfig()
    mode: str = "bsde"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.driver.mark_count != self.bundle.mark_count:
            raise ValueError(
                f"driver has {self.driver.mark_count} marks, "
                f"bundle has {self.bundle.mark_count}"
            )
        if self.mode == "entropic-closed-form":
            if self.driver.family != "entropic" or self.driver.unscaled_jump_exponent:
                raise ValueError(
                    "entropic-closed-form mode requires a canonical entropic driver"
                )


def _claim_values(bundle: PathBundle, xi) -> np.ndarray:
    if isinstance(xi, Payoff):
        return terminal_values(bundle, xi)
    values = np.asarray(xi, dtype=float)
    if values.shape != (bundle.path_count,):
        raise ValueError(
            f"claim values must have shape ({bundle.path_count},), got {values.shape}"
        )
    return values


def risk_solution(engine: RiskEngine, xi) -> BsdeSolution:
    """Full backward solution of the risk BSDE (terminal -xi)."""
    values = _claim_values(engine.bundle, xi)
    return solve_bsde(engine.bundle, engine.driver, -values, engine.config)


def dynamic_risk(engine: RiskEngine, xi, node: int = 0) -> np.ndarray:
    """Per-path rho_{t_node}(xi); constant across paths at node 0.

    ``xi`` may be a Payoff or a per-path value vector (so shifted and mixed
    claims can be priced without constructing payoff objects).
    """
    values = _claim_values(engine.bundle, xi)
    if not 0 <= node <= engine.bundle.grid.step_count:
        raise ValueError(f"node {node} outside grid")
    if engine.mode == "entropic-closed-form":
        return entropic_closed_form(
            engine.driver.alpha, values, node, engine.bundle, engine.config
        )
    solution = solve_bsde(engine.bundle, engine.driver, -values, engine.config)
    return solution.y[:, node].copy()


def entropic_closed_form(
    gamma: float,
    xi_values: np.ndarray,
    node: int,
    bundle: PathBundle,
    config: RegressionConfig = RegressionConfig(),
) -> np.ndarray:
    """(1/gamma) ln E[e^{-gamma xi} | F_{t_node}], estimated pathwise.

    The exponential is shifted by min(xi) before conditioning so the
    regression never overflows; the shift is undone in log space.
    """
    if not (gamma > 0.0 and math.isfinite(gamma)):
        raise ValueError(f"gamma must be positive and finite, got {gamma}")
    xi = _claim_values(bundle, xi_values)
    c = float(xi.min())
    w = np.exp(-gamma * (xi - c))
    fitted = condexp_at_node(bundle, node, w, config)
    bad = np.flatnonzero(fitted <= 0.0)
    if bad.size:
        raise EstimatorFailure(
            f"conditional estimate of e^(-gamma xi) non-positive on {bad.size} "
            f"paths (first: {bad[:5]})",
            paths=bad,
        )
    return np.log(fitted) / gamma - c


# --------------------------------------------------------------------------
# static entropic-coherent measure


@dataclass(frozen=True)
class CoherentStaticResult:
    level: float
    gamma: float | None
    rho: float
    degenerate: bool
    entropy_gap: float

    def __iter__(self):  # allow gamma_c, rho = entropic_coherent_static(...)
        yield self.gamma
        yield self.rho


def _relative_entropy(gamma: float, xi: np.ndarray) -> float:
    """H(gamma) = gamma m'(gamma)/m(gamma) - ln m(gamma) for m = E[e^{-gamma xi}];
    the relative entropy of the tilted measure, increasing in gamma."""
    c = float(xi.min())
    w = np.exp(-gamma * (xi - c))
    mean_w = w.mean()
    tilted_mean = float((xi * w).sum() / w.sum())
    log_m = math.log(mean_w) - gamma * c
    return -gamma * tilted_mean - log_m


def entropic_coherent_static(
    level: float,
    xi_values: np.ndarray,
    gamma_lo: float = 1e-6,
    gamma_hi: float = 1e3,
) -> CoherentStaticResult:
    """Static coherent risk inf_{gamma>0} [ level/gamma + (1/gamma) ln E e^{-gamma xi} ].

    The minimizer gamma_c is the root of the stationarity condition
    H(gamma) = level, where H is the relative entropy of the exponentially
    tilted measure; H is increasing, so the root is bracketed and found with
    a guarded Brent search on [gamma_lo, gamma_hi]. A degenerate
    (constant) claim short-circuits to rho = -xi with a flag.
    """
    if not (level > 0.0 and math.isfinite(level)):
        raise ValueError(f"level must be positive and finite, got {level}")
    xi = np.asarray(xi_values, dtype=float)
    if xi.ndim != 1 or xi.size < 1:
        raise ValueError("xi_values must be a nonempty vector")
    if not np.all(np.isfinite(xi)):
        raise ValueError("xi_values must be finite")

    if float(xi.max() - xi.min()) == 0.0:
        return CoherentStaticResult(
            level=level, gamma=None, rho=float(-xi[0]), degenerate=True, entropy_gap=0.0
        )

    def objective(g: float) -> float:
        return _relative_entropy(g, xi) - level

    lo, hi = gamma_lo, min(1.0, gamma_hi)
    if objective(lo) > 0.0:
        raise RootFailure(
            f"relative entropy at gamma={lo} already exceeds level {level}"
        )
    while objective(hi) < 0.0:
        hi *= 2.0
        if hi > gamma_hi:
            raise RootFailure(
                f"no bracketing gamma <= {gamma_hi} reaches entropy level {level}"
            )
    gamma_c = float(brentq(objective, lo, hi, xtol=1e-12, rtol=8.9e-16))

    c = float(xi.min())
    log_m = math.log(np.exp(-gamma_c * (xi - c)).mean()) - gamma_c * c
    rho = level / gamma_c + log_m / gamma_c
    return CoherentStaticResult(
        level=level,
        gamma=gamma_c,
        rho=float(rho),
        degenerate=False,
        entropy_gap=float(objective(gamma_c)),
    )


# --------------------------------------------------------------------------
# axiom suite


@dataclass(frozen=True)
class AxiomRow:
    axiom: str
    case: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance


@dataclass(frozen=True)
class AxiomReport:
    rows: tuple[AxiomRow, ...]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def worst(self) -> AxiomRow:
        return max(self.rows, key=lambda r: r.residual - r.tolerance)


DEFAULT_AXIOM_TOLERANCES = {
    "monotonicity": 5e-3,
    "translation": 5e-3,
    "terminal": 0.0,
    "convexity": 1e-2,
    "scaling": 1e-2,
    "subadditivity": 1e-2,
}


def axiom_suite(
    engine: RiskEngine,
    xi,
    increment=None,
    partner=None,
    shifts=(1.0,),
    scales=(2.0,),
    mix_weights=(0.5,),
    tolerances: dict | None = None,
) -> AxiomReport:
    """Empirical residuals of the risk-measure axioms on common paths.

    All evaluations reuse the engine's bundle, so comparisons are common
    random numbers throughout. Checked: monotonicity against xi plus a
    nonnegative increment, translation for each constant shift, the
    terminal identity rho_T(xi) = -xi, then convexity (convex drivers) or
    positive homogeneity plus subadditivity (positively homogeneous
    drivers). Scaling rows use the relative tolerance
    tol * (1 + |rho_0(xi)|).
    """
    tol = dict(DEFAULT_AXIOM_TOLERANCES)
    tol.update(tolerances or {})
    xi_v = _claim_values(engine.bundle, xi)
    m = engine.bundle.path_count

    if increment is None:
        inc = np.full(m, 0.5)
    else:
        inc = _claim_values(engine.bundle, increment)
    if np.any(inc < 0.0):
        raise ValueError("monotonicity increment must be nonnegative pathwise")

    rho = dynamic_risk(engine, xi_v)[0]
    rows = []

    higher = dynamic_risk(engine, xi_v + inc)[0]
    rows.append(
        AxiomRow("monotonicity", "xi vs xi+increment",
                 max(0.0, float(higher - rho)), tol["monotonicity"])
    )

    for shift in shifts:
        shifted = dynamic_risk(engine, xi_v + shift)[0]
        rows.append(
            AxiomRow("translation", f"m={shift:g}",
                     abs(float(shifted - (rho - shift))), tol["translation"])
        )

    terminal = dynamic_risk(engine, xi_v, node=engine.bundle.grid.step_count)
    term_resid = float(np.abs(terminal + xi_v).max())
    term_tol = tol["terminal"] if engine.mode == "bsde" else max(tol["terminal"], 1e-10)
    rows.append(AxiomRow("terminal", "rho_T(xi) = -xi", term_resid, term_tol))

    if engine.driver.positively_homogeneous:
        for k in scales:
            scaled = dynamic_risk(engine, k * xi_v)[0]
            rows.append(
                AxiomRow("scaling", f"k={k:g}",
                         abs(float(scaled - k * rho)),
                         tol["scaling"] * (1.0 + abs(rho)))
            )
        other = xi_v * 0.0 if partner is None else _claim_values(engine.bundle, partner)
        rho_other = dynamic_risk(engine, other)[0]
        rho_sum = dynamic_risk(engine, xi_v + other)[0]
        rows.append(
            AxiomRow("subadditivity", "xi, partner",
                     max(0.0, float(rho_sum - rho - rho_other)),
                     tol["subadditivity"])
        )
    elif engine.driver.convex_in_controls:
        other = xi_v * 0.0 if partner is None else _claim_values(engine.bundle, partner)
        rho_other = dynamic_risk(engine, other)[0]
        for w in mix_weights:
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"mix weight must be in [0, 1], got {w}")
            mixed = dynamic_risk(engine, w * xi_v + (1.0 - w) * other)[0]
            rows.append(
                AxiomRow("convexity", f"w={w:g}",
                         max(0.0, float(mixed - w * rho - (1.0 - w) * rho_other)),
                         tol["convexity"])
            )

    return AxiomReport(rows=tuple(rows))
