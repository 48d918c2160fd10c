"""Driver (generator) families for the backward equations.

All families are deterministic, y-free maps of the controls (z, upsilon),
with upsilon in R^K holding the jump control at each mark. Two families are
provided plus the entropic special case:

  quadratic-exponential   g(z, u) = ell(z, u) + (alpha/2) z^2
                                     + (1/alpha) sum_k (e^{alpha u_k} - 1 - alpha u_k) lambda_k
  entropic                the qexp family at alpha = gamma, ell = 0
  sublinear               g(z, u) = max_j ( a_j z + sum_k b_{j,k} u_k lambda_k )

Jump partial derivatives use the per-mark density convention: partial_upsilon
returns the derivative of the integrand at mark k, not of the lambda_k-weighted
sum, which is what the measure-change integrands downstream require
(e.g. e^{alpha u_k} - 1 for the qexp family).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LinearForm",
    "Driver",
    "SampleBox",
    "GrowthBoundReport",
    "LipschitzReport",
    "HomogeneityReport",
    "make_qexp_driver",
    "make_entropic_driver",
    "make_sublinear_driver",
    "check_growth_bound",
    "check_local_lipschitz",
    "check_positive_homogeneity",
]


@dataclass(frozen=True)
class LinearForm:
    """ell(z, u) = const + z_coef * z + sum_k jump_coefs[k] * u_k * lambda_k."""

    z_coef: float = 0.0
    jump_coefs: tuple[float, ...] = ()
    const: float = 0.0


ZERO_FORM = LinearForm()


def _as_upsilon(upsilon, mark_count: int) -> np.ndarray:
    u = np.asarray(upsilon, dtype=float)
    if mark_count == 0:
        if u.size == 0:
            return u.reshape(u.shape if u.shape else (0,))
        raise ValueError("driver has no jump marks but upsilon is nonempty")
    if u.shape[-1] != mark_count:
        raise ValueError(
            f"upsilon last axis must have size {mark_count}, got shape {u.shape}"
        )
    return u


@dataclass(frozen=True)
class Driver:
    """A driver bound to the jump intensities of its market.

    Evaluation and partials are vectorized: z has any shape S, upsilon has
    shape S + (K,), and results have shape S (partial_upsilon: S + (K,)).
    """

    family: str
    intensities: tuple[float, ...]
    alpha: float | None = None
    linear: LinearForm = ZERO_FORM
    forms: tuple[LinearForm, ...] = ()
    convex_in_controls: bool = True
    positively_homogeneous: bool = False
    unscaled_jump_exponent: bool = False

    @property
    def mark_count(self) -> int:
        return len(self.intensities)

    # drivers in these families do not depend on (t, y); the backward solver
    # therefore calls them with the controls only
    def __call__(self, z, upsilon) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        u = _as_upsilon(upsilon, self.mark_count)
        lam = np.asarray(self.intensities)
        if self.family in ("qexp", "entropic"):
            a = self.alpha
            out = np.full(z.shape, self.linear.const, dtype=float)
            out += self.linear.z_coef * z
            out += 0.5 * a * z * z
            if self.mark_count:
                b = np.asarray(self.linear.jump_coefs)
                out += (u * b * lam).sum(axis=-1)
                if self.unscaled_jump_exponent:
                    j = np.exp(u) - a * u - 1.0
                else:
                    j = np.exp(a * u) - 1.0 - a * u
                out += (j * lam).sum(axis=-1) / a
            return out
        if self.family == "sublinear":
            return self._scores(z, u, lam).max(axis=-1)
        raise ValueError(f"unknown driver family {self.family!r}")

    def _scores(self, z, u, lam) -> np.ndarray:
        a = np.array([f.z_coef for f in self.forms])
        scores = z[..., None] * a
        if self.mark_count:
            bw = np.array([f.jump_coefs for f in self.forms]) * lam  # (J, K)
            scores = scores + u @ bw.T
        return scores

    def partial_z(self, z, upsilon) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        u = _as_upsilon(upsilon, self.mark_count)
        if self.family in ("qexp", "entropic"):
            return self.linear.z_coef + self.alpha * z
        lam = np.asarray(self.intensities)
        idx = self._scores(z, u, lam).argmax(axis=-1)  # ties: lowest index
        return np.array([f.z_coef for f in self.forms])[idx]

    def partial_upsilon(self, z, upsilon) -> np.ndarray:
        """Per-mark density derivative, shape S + (K,)."""
        z = np.asarray(z, dtype=float)
        u = _as_upsilon(upsilon, self.mark_count)
        if self.mark_count == 0:
            return np.zeros(z.shape + (0,))
        if self.family in ("qexp", "entropic"):
            a = self.alpha
            b = np.asarray(self.linear.jump_coefs)
            if self.unscaled_jump_exponent:
                core = np.exp(u) / a - 1.0
            else:
                core = np.exp(a * u) - 1.0
            return b + core
        lam = np.asarray(self.intensities)
        idx = self._scores(z, u, lam).argmax(axis=-1)
        return np.array([f.jump_coefs for f in self.forms])[idx]


def _check_intensities(intensities) -> tuple[float, ...]:
    lam = tuple(float(v) for v in intensities)
    if any(not (v > 0.0 and math.isfinite(v)) for v in lam):
        raise ValueError(f"intensities must be positive and finite, got {lam}")
    return lam


def _check_form(form: LinearForm, mark_count: int, name: str) -> LinearForm:
    coefs = tuple(float(c) for c in form.jump_coefs)
    if len(coefs) != mark_count:
        raise ValueError(
            f"{name} has {len(coefs)} jump coefficients for {mark_count} marks"
        )
    return LinearForm(float(form.z_coef), coefs, float(form.const))


def make_qexp_driver(
    alpha: float, linear: LinearForm | None = None, intensities=()
) -> Driver:
    """Quadratic-exponential driver with curvature alpha and linear part ell."""
    if not (alpha > 0.0 and math.isfinite(alpha)):
        raise ValueError(f"alpha must be positive and finite, got {alpha}")
    lam = _check_intensities(intensities)
    ell = _check_form(linear or ZERO_FORM, len(lam), "linear part")
    return Driver(family="qexp", intensities=lam, alpha=float(alpha), linear=ell)


def make_entropic_driver(
    gamma: float, intensities=(), unscaled_jump_exponent: bool = False
) -> Driver:
    """Entropic driver: the qexp family at alpha = gamma with no linear part.

    ``unscaled_jump_exponent`` switches the jump term to the variant
    (1/gamma) sum_k (e^{u_k} - gamma u_k - 1) lambda_k, which coincides with
    the canonical form only at gamma = 1. It exists for side-by-side
    comparison and is never the default.
    """
    if not (gamma > 0.0 and math.isfinite(gamma)):
        raise ValueError(f"gamma must be positive and finite, got {gamma}")
    lam = _check_intensities(intensities)
    return Driver(
        family="entropic",
        intensities=lam,
        alpha=float(gamma),
        linear=LinearForm(0.0, (0.0,) * len(lam), 0.0),
        unscaled_jump_exponent=bool(unscaled_jump_exponent),
    )


def make_sublinear_driver(forms, intensities=()) -> Driver:
    """Pointwise max of finitely many linear forms; positively homogeneous.

    Every jump coefficient must exceed -1 so the induced per-jump density
    factors 1 + b_{j,k} stay positive (Kazamaki admissibility).
    """
    lam = _check_intensities(intensities)
    checked = []
    for j, f in enumerate(forms):
        f = _check_form(f, len(lam), f"form {j}")
        if f.const != 0.0:
            raise ValueError(f"form {j} has a constant term; sublinear forms must be homogeneous")
        if any(b <= -1.0 for b in f.jump_coefs):
            raise ValueError(
                f"form {j} jump coefficients must be > -1, got {f.jump_coefs}"
            )
        checked.append(f)
    if not checked:
        raise ValueError("sublinear driver needs at least one form")
    return Driver(
        family="sublinear",
        intensities=lam,
        forms=tuple(checked),
        positively_homogeneous=True,
    )


# --------------------------------------------------------------------------
# sampled assumption checks


@dataclass(frozen=True)
class SampleBox:
    """Uniform sampling box |y| <= y_max, |z| <= z_max, |u_k| <= upsilon_max."""

    y_max: float = 1.0
    z_max: float = 5.0
    upsilon_max: float = 2.0

    def sample(self, count: int, mark_count: int, seed: int):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        y = rng.uniform(-self.y_max, self.y_max, count)
        z = rng.uniform(-self.z_max, self.z_max, count)
        u = rng.uniform(-self.upsilon_max, self.upsilon_max, (count, mark_count))
        return y, z, u


@dataclass(frozen=True)
class GrowthBoundReport:
    samples: int
    violations: int
    worst_margin: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def check_growth_bound(
    driver: Driver,
    box: SampleBox = SampleBox(),
    bound_alpha: float | None = None,
    bound_beta: float = 0.0,
    bound_ell: float = 0.0,
    samples: int = 4096,
    seed: int = 0,
) -> GrowthBoundReport:
    """Sampled two-sided quadratic-exponential growth check.

    Tests, over a box of (y, z, upsilon) samples, that

      -ell - beta |y| - (alpha/2) z^2 - sum_k j_alpha(-u_k) lambda_k
        <= g(z, u) <=
       ell + beta |y| + (alpha/2) z^2 + sum_k j_alpha(u_k) lambda_k

    with j_alpha(u) = e^{alpha u} - 1 - alpha u. ``bound_alpha`` defaults to
    the driver's own curvature (required for sublinear drivers). Margins
    within -1e-12 count as satisfied so exact-equality cases pass.
    """
    alpha = bound_alpha if bound_alpha is not None else driver.alpha
    if alpha is None or not alpha > 0.0:
        raise ValueError("growth bound needs a positive alpha")
    y, z, u = box.sample(samples, driver.mark_count, seed)
    lam = np.asarray(driver.intensities)
    g = driver(z, u)
    quad = bound_ell + bound_beta * np.abs(y) + 0.5 * alpha * z * z
    if driver.mark_count:
        j_up = (np.exp(alpha * u) - 1.0 - alpha * u) * lam
        j_dn = (np.exp(-alpha * u) - 1.0 + alpha * u) * lam
        upper = quad + j_up.sum(axis=1)
        lower = -quad - j_dn.sum(axis=1)
    else:
        upper = quad
        lower = -quad
    margin = np.minimum(upper - g, g - lower)
    worst = float(margin.min())
    violations = int(np.count_nonzero(margin < -1e-12))
    return GrowthBoundReport(samples=samples, violations=violations, worst_margin=worst)


@dataclass(frozen=True)
class LipschitzReport:
    pairs: int
    max_ratio: float
    witness: tuple = field(default=())


def check_local_lipschitz(
    driver: Driver,
    level: float = 1.0,
    z_max: float = 5.0,
    pairs: int = 4096,
    seed: int = 0,
) -> LipschitzReport:
    """Estimate the smallest K_M in the local Lipschitz bound on a level set.

    Ratio maximized over sampled pairs confined to |y|, |u_k| <= level:

        |g(z,u) - g(z',u')| /
        ( |y-y'| + ||u-u'||_nu + (1 + |z| + |z'| + ||u||_nu + ||u'||_nu) |z-z'| )

    with ||u||_nu = sqrt(sum_k u_k^2 lambda_k). Half the pairs differ in z
    only, with magnitudes sampled log-uniformly toward zero, so the supremum
    of the ratio is approached for drivers whose steepest normalized slope
    sits at the origin (e.g. linear ones).
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    k = driver.mark_count
    lam = np.asarray(driver.intensities)

    def nu_norm(u):
        if k == 0:
            return np.zeros(u.shape[0])
        return np.sqrt((u * u * lam).sum(axis=1))

    half = pairs // 2
    # pairs differing in every coordinate
    y1 = rng.uniform(-level, level, half)
    y2 = rng.uniform(-level, level, half)
    z1 = rng.uniform(-z_max, z_max, half)
    z2 = rng.uniform(-z_max, z_max, half)
    u1 = rng.uniform(-level, level, (half, k))
    u2 = rng.uniform(-level, level, (half, k))
    # z-only pairs at log-uniform magnitudes, shared (y, u)
    rest = pairs - half
    mag = np.exp(rng.uniform(math.log(1e-4), math.log(max(z_max, 1e-3)), rest))
    sgn = rng.choice([-1.0, 1.0], rest)
    z3 = mag * sgn
    z4 = -z3
    y3 = rng.uniform(-level, level, rest)
    u3 = rng.uniform(-level, level, (rest, k)) * rng.uniform(0.0, 1.0, (rest, 1))

    ya = np.concatenate([y1, y3])
    yb = np.concatenate([y2, y3])
    za = np.concatenate([z1, z3])
    zb = np.concatenate([z2, z4])
    ua = np.concatenate([u1, u3], axis=0)
    ub = np.concatenate([u2, u3], axis=0)

    dg = np.abs(driver(za, ua) - driver(zb, ub))
    na, nb = nu_norm(ua), nu_norm(ub)
    du = nu_norm(ua - ub)
    denom = (
        np.abs(ya - yb)
        + du
        + (1.0 + np.abs(za) + np.abs(zb) + na + nb) * np.abs(za - zb)
    )
    ok = denom > 0
    ratio = dg[ok] / denom[ok]
    i = int(ratio.argmax())
    idx = np.flatnonzero(ok)[i]
    witness = (float(ya[idx]), float(za[idx]), float(yb[idx]), float(zb[idx]))
    return LipschitzReport(pairs=pairs, max_ratio=float(ratio.max()), witness=witness)


@dataclass(frozen=True)
class HomogeneityReport:
    scales: tuple[float, ...]
    residuals: tuple[float, ...]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(r <= self.tolerance for r in self.residuals)


def check_positive_homogeneity(
    driver: Driver,
    box: SampleBox = SampleBox(),
    scales=(0.5, 2.0, 7.0),
    samples: int = 2048,
    seed: int = 0,
    tolerance: float = 1e-12,
) -> HomogeneityReport:
    """Max |g(c z, c u) - c g(z, u)| over sampled controls, per scale c > 0."""
    _, z, u = box.sample(samples, driver.mark_count, seed)
    g = driver(z, u)
    residuals = []
    for c in scales:
        if not c > 0.0:
            raise ValueError(f"scales must be positive, got {c}")
        residuals.append(float(np.abs(driver(c * z, c * u) - c * g).max()))
    return HomogeneityReport(
        scales=tuple(float(c) for c in scales),
        residuals=tuple(residuals),
        tolerance=tolerance,
    )
