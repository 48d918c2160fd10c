"""Scenario configs and task pipelines behind the CLI.

A scenario is a JSON document (UTF-8) with the blocks below; dotted paths
(e.g. ``model.sigma``) address individual keys for command-line overrides.

    scenario_id   string, [A-Za-z0-9_.-]+
    task          simulate | solve | risk | allocate | verify (optional;
                  the CLI subcommand takes precedence)
    grid          {"horizon": 1.0, "steps": 50}
    mc            {"paths": 200000, "seed": 20240901}
    model         {"x0": 0.0, "mu": 0.1, "sigma": 0.3,
                   "jumps": [{"size": -0.2, "intensity": 1.5}]}
    driver        {"family": "entropic", "gamma": 2.0}
                  | {"family": "qexp", "alpha": 2.0, "z_coef": 0.0,
                     "jump_coefs": [...], "const": 0.0}
                  | {"family": "sublinear",
                     "forms": [{"z_coef": 0.3, "jump_coefs": [0.1]}, ...]}
    payoff        {"family": "affine", "a": 0.0, "b": 1.0}
                  | {"family": "exp_affine", "a": 1.0, "b": 1.0}
                  | {"family": "polynomial", "coeffs": [...]}
                  with optional "clip": {"lo": ..., "hi": ...} and optional
                  "decomposition": [payoff, ...] (the claim is then their
                  exact pathwise sum)
    method        {"degree": 3, "ridge": 1e-8, "jump_count_features": false,
                   "z_clip": 10.0, "upsilon_clip": 5.0, "fd_step": null,
                   "quad_nodes": 16, "risk_mode": "bsde", "tolerances": {}}
    verify        {"checks": [...], "phi_z": 0.5, "phi_jumps": [...],
                   "level": 0.1, "beta": 1.0}

Every block a task needs must be present (referential completeness);
unknown keys anywhere are validation errors naming the offending field.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .allocation import build_allocation_report
from .bsde import RegressionConfig, residual_replay, solve_bsde
from .drivers import Driver, LinearForm, make_entropic_driver, make_qexp_driver, make_sublinear_driver
from .errors import ConfigParseError, ConfigValidationError
from .malliavin import clark_ocone, entropic_controls, gamma_exponential_check
from .market import (
    AffinePayoff,
    ClippedPayoff,
    ExpAffinePayoff,
    JumpMark,
    LevyModel,
    PathBundle,
    Payoff,
    PolynomialPayoff,
    PortfolioPayoff,
    TimeGrid,
    build_grid,
    simulate_paths,
    terminal_values,
)
from .measure import doleans_dade, girsanov_shift_check, kazamaki_check, martingale_diagnostic
from .reporting import Row, RunReport
from .risk import (
    RiskEngine,
    axiom_suite,
    dynamic_risk,
    entropic_closed_form,
    entropic_coherent_static,
)

__all__ = ["ScenarioConfig", "load_config", "apply_overrides", "build_scenario", "run_scenario"]

TASKS = ("simulate", "solve", "risk", "allocate", "verify")
VERIFY_CHECKS = (
    "moments", "doleans", "closed_form", "clark_ocone", "axioms",
    "entropic_identity", "coherent_static",
)
_ID_PATTERN = re.compile(r"^[A-Za-z0-9_.-]+$")

DEFAULT_TOLERANCES = {
    "mean_sigmas": 4.0,
    "variance_sigmas": 4.0,
    "replay_sigmas": 3.0,
    "closed_form": None,        # resolved per model: 5e-3 diffusive, 1e-2 with jumps
    "doleans_pathwise": 1e-12,
    "martingale_sigmas": 3.0,
    "girsanov_sigmas": 4.0,
    "clark_ocone": 2e-2,
    "fd_measure_gap": 2e-2,
    "fd_measure_sigmas": 4.0,
    "full_allocation": 1e-2,
    "identity_gap": None,       # resolved per model: 3e-2 diffusive, 5e-2 with jumps
    "control_formulas": 3e-2,
    "scaling_identity": 1e-8,
    "entropy_identity": 1e-6,
}


@dataclass
class MethodOptions:
    regression: RegressionConfig = field(default_factory=RegressionConfig)
    fd_step: float | None = None
    quad_nodes: int = 16
    risk_mode: str = "bsde"
    tolerances: dict = field(default_factory=dict)

    def tolerance(self, name: str, fallback=None):
        value = self.tolerances.get(name, DEFAULT_TOLERANCES.get(name))
        return fallback if value is None else value


@dataclass
class VerifyOptions:
    checks: tuple[str, ...]
    phi_z: float = 0.5
    phi_jumps: tuple[float, ...] = ()
    level: float = 0.1
    beta: float = 1.0


@dataclass
class ScenarioConfig:
    scenario_id: str
    task: str
    grid: TimeGrid
    model: LevyModel
    paths: int
    seed: int
    method: MethodOptions
    driver: Driver | None = None
    payoff: Payoff | None = None
    verify: VerifyOptions | None = None
    resolved: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# parsing and validation


def load_config(path) -> dict:
    """Parse the JSON config file; syntax problems raise ConfigParseError."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigParseError(f"cannot read config {p}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{p}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigParseError(f"{p}: config root must be an object")
    return raw


def apply_overrides(raw: dict, assignments) -> dict:
    """Apply ``key.path=value`` overrides; values parse as JSON, else strings."""
    for item in assignments or ():
        if "=" not in item:
            raise ConfigValidationError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigValidationError(f"override path {key!r} crosses non-object {part!r}")
            node = nxt
        node[parts[-1]] = value
    return raw


class _Block:
    """Cursor into one config object that tracks consumed keys."""

    def __init__(self, data: dict, path: str):
        if not isinstance(data, dict):
            raise ConfigValidationError(f"{path} must be an object")
        self.data = data
        self.path = path
        self.seen: set[str] = set()

    def take(self, key: str, kind, required: bool = True, default=None):
        self.seen.add(key)
        if key not in self.data:
            if required:
                raise ConfigValidationError(f"missing required field {self.path}.{key}")
            return default
        value = self.data[key]
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigValidationError(f"{self.path}.{key} must be a number")
            return float(value)
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigValidationError(f"{self.path}.{key} must be an integer")
            return value
        if kind is bool:
            if not isinstance(value, bool):
                raise ConfigValidationError(f"{self.path}.{key} must be a boolean")
            return value
        if kind is str:
            if not isinstance(value, str):
                raise ConfigValidationError(f"{self.path}.{key} must be a string")
            return value
        if kind is list:
            if not isinstance(value, list):
                raise ConfigValidationError(f"{self.path}.{key} must be a list")
            return value
        if kind is dict:
            if not isinstance(value, dict):
                raise ConfigValidationError(f"{self.path}.{key} must be an object")
            return value
        raise AssertionError(kind)

    def finish(self):
        unknown = set(self.data) - self.seen
        if unknown:
            name = sorted(unknown)[0]
            raise ConfigValidationError(f"unknown field {self.path}.{name}")


def _build_model(block: _Block) -> LevyModel:
    x0 = block.take("x0", float)
    mu = block.take("mu", float, required=False, default=0.0)
    sigma = block.take("sigma", float, required=False, default=0.0)
    jumps = []
    for i, entry in enumerate(block.take("jumps", list, required=False, default=[])):
        jb = _Block(entry, f"{block.path}.jumps[{i}]")
        size = jb.take("size", float)
        intensity = jb.take("intensity", float)
        jb.finish()
        try:
            jumps.append(JumpMark(size=size, intensity=intensity))
        except ValueError as exc:
            raise ConfigValidationError(f"{block.path}.jumps[{i}]: {exc}") from exc
    block.finish()
    try:
        return LevyModel(x0=x0, mu=mu, sigma=sigma, jumps=tuple(jumps))
    except ValueError as exc:
        raise ConfigValidationError(f"{block.path}: {exc}") from exc


def _build_driver(block: _Block, intensities: tuple[float, ...]) -> Driver:
    mark_count = len(intensities)
    family = block.take("family", str)
    try:
        if family == "entropic":
            gamma = block.take("gamma", float)
            unscaled = block.take("unscaled_jump_exponent", bool, required=False, default=False)
            block.finish()
            return make_entropic_driver(gamma, intensities, unscaled_jump_exponent=unscaled)
        if family == "qexp":
            alpha = block.take("alpha", float)
            z_coef = block.take("z_coef", float, required=False, default=0.0)
            jump_coefs = block.take("jump_coefs", list, required=False, default=[0.0] * mark_count)
            const = block.take("const", float, required=False, default=0.0)
            block.finish()
            form = LinearForm(z_coef=z_coef, jump_coefs=tuple(float(c) for c in jump_coefs), const=const)
            return make_qexp_driver(alpha, form, intensities)
        if family == "sublinear":
            forms = []
            for i, entry in enumerate(block.take("forms", list)):
                fb = _Block(entry, f"{block.path}.forms[{i}]")
                z_coef = fb.take("z_coef", float, required=False, default=0.0)
                jump_coefs = fb.take("jump_coefs", list, required=False, default=[0.0] * mark_count)
                fb.finish()
                forms.append(LinearForm(z_coef=z_coef, jump_coefs=tuple(float(c) for c in jump_coefs)))
            block.finish()
            return make_sublinear_driver(forms, intensities)
    except ValueError as exc:
        raise ConfigValidationError(f"{block.path}: {exc}") from exc
    raise ConfigValidationError(
        f"{block.path}.family must be entropic, qexp or sublinear, got {family!r}"
    )


def _build_single_payoff(block: _Block) -> Payoff:
    family = block.take("family", str)
    try:
        if family == "affine":
            payoff: Payoff = AffinePayoff(a=block.take("a", float), b=block.take("b", float))
        elif family == "exp_affine":
            payoff = ExpAffinePayoff(a=block.take("a", float), b=block.take("b", float))
        elif family == "polynomial":
            coeffs = block.take("coeffs", list)
            payoff = PolynomialPayoff(coeffs=tuple(float(c) for c in coeffs))
        else:
            raise ConfigValidationError(
                f"{block.path}.family must be affine, exp_affine or polynomial, got {family!r}"
            )
        clip = block.take("clip", dict, required=False)
        if clip is not None:
            cb = _Block(clip, f"{block.path}.clip")
            lo = cb.take("lo", float)
            hi = cb.take("hi", float)
            cb.finish()
            payoff = ClippedPayoff(inner=payoff, lo=lo, hi=hi)
    except ValueError as exc:
        raise ConfigValidationError(f"{block.path}: {exc}") from exc
    return payoff


def _poly_coeffs(payoff: Payoff) -> tuple[float, ...] | None:
    if isinstance(payoff, AffinePayoff):
        return (payoff.a, payoff.b)
    if isinstance(payoff, PolynomialPayoff):
        return payoff.coeffs
    return None


def _build_payoff(block: _Block) -> Payoff:
    decomposition = block.take("decomposition", list, required=False)
    has_family = "family" in block.data
    if decomposition is None and not has_family:
        raise ConfigValidationError(f"{block.path} needs a family or a decomposition")

    components = []
    if decomposition is not None:
        if not decomposition:
            raise ConfigValidationError(f"{block.path}.decomposition must be nonempty")
        for i, entry in enumerate(decomposition):
            cb = _Block(entry, f"{block.path}.decomposition[{i}]")
            components.append(_build_single_payoff(cb))
            cb.finish()

    if has_family:
        outer = _build_single_payoff(block)
        block.finish()
        if decomposition is None:
            return outer
        # a stated family alongside a decomposition must agree symbolically
        outer_coeffs = _poly_coeffs(outer)
        part_coeffs = [_poly_coeffs(c) for c in components]
        if outer_coeffs is None or any(pc is None for pc in part_coeffs):
            raise ConfigValidationError(
                f"{block.path}: family plus decomposition is only checkable for "
                "affine/polynomial components; drop the family"
            )
        width = max(len(outer_coeffs), *(len(pc) for pc in part_coeffs))
        total = np.zeros(width)
        for pc in part_coeffs:
            total[: len(pc)] += pc
        stated = np.zeros(width)
        stated[: len(outer_coeffs)] = outer_coeffs
        if not np.allclose(total, stated, rtol=0.0, atol=1e-12):
            raise ConfigValidationError(
                f"{block.path}.decomposition does not sum to the stated family coefficients"
            )
        return PortfolioPayoff(parts=tuple(components))

    block.finish()
    return PortfolioPayoff(parts=tuple(components))


def _build_method(block: _Block | None) -> MethodOptions:
    if block is None:
        return MethodOptions()
    degree = block.take("degree", int, required=False, default=3)
    ridge = block.take("ridge", float, required=False, default=1e-8)
    jump_features = block.take("jump_count_features", bool, required=False, default=False)
    z_clip = block.take("z_clip", float, required=False, default=10.0)
    upsilon_clip = block.take("upsilon_clip", float, required=False, default=5.0)
    fd_step = block.take("fd_step", float, required=False)
    quad_nodes = block.take("quad_nodes", int, required=False, default=16)
    risk_mode = block.take("risk_mode", str, required=False, default="bsde")
    tolerances = block.take("tolerances", dict, required=False, default={})
    block.finish()
    for name in tolerances:
        if name not in DEFAULT_TOLERANCES:
            raise ConfigValidationError(f"{block.path}.tolerances.{name} is not a known tolerance")
    if risk_mode not in ("bsde", "entropic-closed-form"):
        raise ConfigValidationError(f"{block.path}.risk_mode must be bsde or entropic-closed-form")
    if quad_nodes < 1:
        raise ConfigValidationError(f"{block.path}.quad_nodes must be >= 1")
    if fd_step is not None and not fd_step > 0.0:
        raise ConfigValidationError(f"{block.path}.fd_step must be positive")
    try:
        regression = RegressionConfig(
            degree=degree, ridge=ridge, jump_count_features=jump_features,
            z_clip=z_clip, upsilon_clip=upsilon_clip,
        )
    except ValueError as exc:
        raise ConfigValidationError(f"{block.path}: {exc}") from exc
    return MethodOptions(
        regression=regression, fd_step=fd_step, quad_nodes=quad_nodes,
        risk_mode=risk_mode, tolerances=dict(tolerances),
    )


def _build_verify(block: _Block | None, mark_count: int) -> VerifyOptions | None:
    if block is None:
        return None
    checks = block.take("checks", list)
    for c in checks:
        if c not in VERIFY_CHECKS:
            raise ConfigValidationError(
                f"{block.path}.checks contains unknown check {c!r}; "
                f"known: {', '.join(VERIFY_CHECKS)}"
            )
    phi_z = block.take("phi_z", float, required=False, default=0.5)
    phi_jumps = block.take("phi_jumps", list, required=False, default=[0.5] * mark_count)
    level = block.take("level", float, required=False, default=0.1)
    beta = block.take("beta", float, required=False, default=1.0)
    block.finish()
    if len(phi_jumps) != mark_count:
        raise ConfigValidationError(
            f"{block.path}.phi_jumps must have one entry per jump mark ({mark_count})"
        )
    if not level > 0.0:
        raise ConfigValidationError(f"{block.path}.level must be positive")
    return VerifyOptions(
        checks=tuple(checks),
        phi_z=phi_z,
        phi_jumps=tuple(float(p) for p in phi_jumps),
        level=level,
        beta=beta,
    )


def build_scenario(raw: dict, task: str | None = None, seed: int | None = None) -> ScenarioConfig:
    """Validate a parsed config and construct all domain objects."""
    top = _Block(raw, "config")
    scenario_id = top.take("scenario_id", str)
    if not _ID_PATTERN.match(scenario_id):
        raise ConfigValidationError(
            "config.scenario_id must match [A-Za-z0-9_.-]+ for stable file names"
        )
    config_task = top.take("task", str, required=False)
    effective_task = task or config_task
    if effective_task is None:
        raise ConfigValidationError("config.task missing and no subcommand given")
    if effective_task not in TASKS:
        raise ConfigValidationError(f"config.task must be one of {TASKS}, got {effective_task!r}")
    if task and config_task and task != config_task:
        raise ConfigValidationError(
            f"config.task is {config_task!r} but the {task!r} subcommand was invoked"
        )

    gb = _Block(top.take("grid", dict), "config.grid")
    horizon = gb.take("horizon", float)
    steps = gb.take("steps", int)
    gb.finish()
    try:
        grid = build_grid(horizon, steps)
    except ValueError as exc:
        raise ConfigValidationError(f"config.grid: {exc}") from exc

    mb = _Block(top.take("mc", dict), "config.mc")
    paths = mb.take("paths", int)
    cfg_seed = mb.take("seed", int)
    mb.finish()
    if paths < 1:
        raise ConfigValidationError("config.mc.paths must be >= 1")
    effective_seed = cfg_seed if seed is None else seed
    if not 0 <= effective_seed < 2**64:
        raise ConfigValidationError("config.mc.seed must be a 64-bit unsigned integer")

    model = _build_model(_Block(top.take("model", dict), "config.model"))
    intensities = tuple(float(j.intensity) for j in model.jumps)

    driver_raw = top.take("driver", dict, required=False)
    driver = None
    if driver_raw is not None:
        driver = _build_driver(_Block(driver_raw, "config.driver"), intensities)

    payoff_raw = top.take("payoff", dict, required=False)
    payoff = None
    if payoff_raw is not None:
        payoff = _build_payoff(_Block(payoff_raw, "config.payoff"))

    method_raw = top.take("method", dict, required=False)
    method = _build_method(
        _Block(method_raw, "config.method") if method_raw is not None else None)
    verify_raw = top.take("verify", dict, required=False)
    verify = _build_verify(
        _Block(verify_raw, "config.verify") if verify_raw is not None else None,
        model.mark_count,
    )
    top.finish()

    # referential completeness per task
    needs_driver = effective_task in ("solve", "risk", "allocate")
    needs_payoff = effective_task in ("solve", "risk", "allocate")
    if effective_task == "verify":
        if verify is None:
            raise ConfigValidationError("config.verify block is required for the verify task")
        driver_checks = {"closed_form", "axioms", "entropic_identity", "coherent_static"}
        payoff_checks = {"closed_form", "clark_ocone", "axioms",
                         "entropic_identity", "coherent_static"}
        needs_driver = bool(driver_checks & set(verify.checks))
        needs_payoff = bool(payoff_checks & set(verify.checks))
    if needs_driver and driver is None:
        raise ConfigValidationError(f"config.driver is required for the {effective_task} task")
    if needs_payoff and payoff is None:
        raise ConfigValidationError(f"config.payoff is required for the {effective_task} task")
    if effective_task == "allocate" and payoff is not None and payoff.components is None:
        raise ConfigValidationError("config.payoff.decomposition is required for the allocate task")
    if method.risk_mode == "entropic-closed-form" and driver is not None:
        if driver.family != "entropic" or driver.unscaled_jump_exponent:
            raise ConfigValidationError(
                "config.method.risk_mode entropic-closed-form requires an entropic driver"
            )

    resolved = json.loads(json.dumps(raw))
    resolved.setdefault("mc", {})["seed"] = effective_seed
    resolved["task"] = effective_task
    return ScenarioConfig(
        scenario_id=scenario_id,
        task=effective_task,
        grid=grid,
        model=model,
        paths=paths,
        seed=effective_seed,
        method=method,
        driver=driver,
        payoff=payoff,
        verify=verify,
        resolved=resolved,
    )


# --------------------------------------------------------------------------
# task pipelines


def _moment_rows(cfg: ScenarioConfig, bundle: PathBundle, flag: bool) -> list[Row]:
    sid = cfg.scenario_id
    x = bundle.terminal
    m = bundle.path_count
    mean = float(x.mean())
    se_mean = float(x.std() / math.sqrt(m))
    mean_ref = cfg.model.terminal_mean(cfg.grid.horizon)
    var = float(x.var(ddof=1))
    centered = x - mean
    m4 = float(np.mean(centered**4))
    se_var = float(math.sqrt(max(m4 - var**2, 0.0) / m))
    var_ref = cfg.model.terminal_variance(cfg.grid.horizon)
    k_mean = cfg.method.tolerance("mean_sigmas")
    k_var = cfg.method.tolerance("variance_sigmas")
    rows = [
        Row(sid, "terminal_mean", mean, se_mean),
        Row(sid, "terminal_mean_analytic", mean_ref),
        Row(sid, "terminal_variance", var, se_var),
        Row(sid, "terminal_variance_analytic", var_ref),
    ]
    if flag:
        rows.append(Row(
            sid, "terminal_mean_gap", abs(mean - mean_ref), se_mean,
            check=f"mean_within_{k_mean:g}_se",
            passed=abs(mean - mean_ref) <= k_mean * se_mean,
        ))
        rows.append(Row(
            sid, "terminal_variance_gap", abs(var - var_ref), se_var,
            check=f"variance_within_{k_var:g}_se",
            passed=abs(var - var_ref) <= k_var * se_var,
        ))
    return rows


def _task_simulate(cfg: ScenarioConfig, bundle: PathBundle) -> list[Row]:
    return _moment_rows(cfg, bundle, flag=True)


def _solution_rows(cfg: ScenarioConfig, solution, label: str) -> list[Row]:
    sid = cfg.scenario_id
    m = cfg.paths
    se = float(solution.y[:, 1].std() / math.sqrt(m)) if cfg.grid.step_count >= 1 else 0.0
    replay = residual_replay(solution, k_sigma=cfg.method.tolerance("replay_sigmas"))
    with np.errstate(invalid="ignore", divide="ignore"):
        z_scores = np.abs(replay.means) / np.where(replay.std_errors > 0, replay.std_errors, np.inf)
    worst = float(z_scores.max()) if z_scores.size else 0.0
    return [
        Row(sid, label, solution.y0, se),
        Row(sid, f"{label}_clamped_z", float(solution.clamped_z)),
        Row(sid, f"{label}_clamped_upsilon", float(solution.clamped_upsilon)),
        Row(sid, f"{label}_replay_worst_z", worst,
            check=f"replay_within_{cfg.method.tolerance('replay_sigmas'):g}_se",
            passed=replay.flagged.size == 0),
    ]


def _task_solve(cfg: ScenarioConfig, bundle: PathBundle) -> list[Row]:
    xi = terminal_values(bundle, cfg.payoff)
    solution = solve_bsde(bundle, cfg.driver, xi, cfg.method.regression)
    return _solution_rows(cfg, solution, "y0")


def _closed_form_default(cfg: ScenarioConfig) -> float:
    return 5e-3 if cfg.model.mark_count == 0 else 1e-2


def _task_risk(cfg: ScenarioConfig, bundle: PathBundle) -> list[Row]:
    sid = cfg.scenario_id
    engine = RiskEngine(bundle, cfg.driver, cfg.method.regression, mode=cfg.method.risk_mode)
    xi = terminal_values(bundle, cfg.payoff)
    rows: list[Row] = []
    if cfg.method.risk_mode == "bsde":
        solution = solve_bsde(bundle, cfg.driver, -xi, cfg.method.regression)
        rho0 = solution.y0
        se = float(solution.y[:, 1].std() / math.sqrt(cfg.paths))
        rows.append(Row(sid, "rho0", rho0, se))
        terminal_gap = float(np.abs(solution.y[:, -1] + xi).max())
        rows.append(Row(sid, "terminal_identity_gap", terminal_gap,
                        check="terminal_identity_exact", passed=terminal_gap == 0.0))
    else:
        rho = dynamic_risk(engine, xi)
        rho0 = float(rho[0])
        rows.append(Row(sid, "rho0", rho0))
    if cfg.driver.family == "entropic" and not cfg.driver.unscaled_jump_exponent:
        closed = float(entropic_closed_form(
            cfg.driver.alpha, xi, 0, bundle, cfg.method.regression)[0])
        tol = cfg.method.tolerance("closed_form", _closed_form_default(cfg))
        rows.append(Row(sid, "rho0_closed_form", closed))
        rows.append(Row(sid, "rho0_closed_form_gap", abs(rho0 - closed),
                        check=f"closed_form_within_{tol:g}",
                        passed=abs(rho0 - closed) <= tol))
    return rows


def _task_allocate(cfg: ScenarioConfig, bundle: PathBundle) -> list[Row]:
    sid = cfg.scenario_id
    engine = RiskEngine(bundle, cfg.driver, cfg.method.regression)
    report = build_allocation_report(
        engine,
        cfg.payoff,
        step=cfg.method.fd_step,
        node_count=cfg.method.quad_nodes,
        tolerance=cfg.method.tolerance("full_allocation"),
    )
    gap_tol = cfg.method.tolerance("fd_measure_gap")
    gap_sigmas = cfg.method.tolerance("fd_measure_sigmas")
    rows = [Row(sid, "rho0", report.rho.value, report.rho.se)]
    for i, (fd, mv, shap) in enumerate(zip(report.fd, report.measure, report.shapley)):
        rows.append(Row(sid, f"alloc_fd_{i}", fd.value, fd.se))
        rows.append(Row(sid, f"alloc_measure_{i}", mv.value, mv.se))
        rows.append(Row(sid, f"alloc_shapley_{i}", shap.value, shap.se))
        pooled = math.sqrt(fd.se**2 + mv.se**2)
        bound = max(gap_tol, gap_sigmas * pooled)
        gap = report.fd_measure_gaps[i]
        rows.append(Row(sid, f"alloc_gap_{i}", gap, pooled,
                        check=f"fd_vs_measure_{i}", passed=gap <= bound))
    rows.append(Row(sid, "allocation_residual", report.check.residual, report.check.pooled_se,
                    check=f"full_allocation_within_{report.check.tolerance:g}",
                    passed=report.check.passed))
    return rows


def _verify_doleans(cfg: ScenarioConfig, bundle: PathBundle) -> list[Row]:
    sid = cfg.scenario_id
    v = cfg.verify
    m, n, k = cfg.paths, cfg.grid.step_count, cfg.model.mark_count
    phi_z = np.full((m, n), v.phi_z)
    phi_j = np.broadcast_to(np.array(v.phi_jumps), (m, n, k)).copy()
    rn = doleans_dade(bundle, phi_z, phi_j)

    # closed form for constant integrands, evaluated at every node
    t = bundle.grid.dt * np.arange(n + 1)
    w = np.concatenate([np.zeros((m, 1)), np.cumsum(bundle.dw, axis=1)], axis=1)
    log_ref = v.phi_z * w - 0.5 * v.phi_z**2 * t
    for j in range(k):
        counts = np.concatenate(
            [np.zeros((m, 1)), np.cumsum(bundle.dn[:, :, j], axis=1)], axis=1)
        lam = cfg.model.jumps[j].intensity
        log_ref += counts * math.log1p(v.phi_jumps[j]) - v.phi_jumps[j] * lam * t
    gap = float(np.abs(rn.lam - np.exp(log_ref)).max())
    tol = cfg.method.tolerance("doleans_pathwise")

    kaz = kazamaki_check(rn)
    mart = martingale_diagnostic(rn, k_sigma=cfg.method.tolerance("martingale_sigmas"))
    gir = girsanov_shift_check(rn, k_sigma=cfg.method.tolerance("girsanov_sigmas"))
    return [
        Row(sid, "doleans_closed_form_gap", gap,
            check=f"doleans_pathwise_within_{tol:g}", passed=gap <= tol),
        Row(sid, "kazamaki_margin", kaz.worst_margin,
            check="kazamaki", passed=kaz.passed),
        Row(sid, "martingale_worst_gap", float(np.abs(mart.means - 1.0).max()),
            check=f"martingale_within_{mart.k_sigma:g}_se", passed=mart.passed),
        Row(sid, "girsanov_worst_z", gir.worst_z,
            check=f"girsanov_within_{gir.k_sigma:g}_se", passed=gir.passed),
    ]


def _verify_entropic_identity(cfg: ScenarioConfig, bundle: PathBundle) -> list[Row]:
    sid = cfg.scenario_id
    if cfg.driver.family != "entropic" or cfg.driver.unscaled_jump_exponent:
        raise ConfigValidationError(
            "verify check entropic_identity requires an entropic driver")
    gamma = cfg.driver.alpha
    beta = cfg.verify.beta
    gap_tol = cfg.method.tolerance(
        "identity_gap", 3e-2 if cfg.model.mark_count == 0 else 5e-2)
    ctl_tol = cfg.method.tolerance("control_formulas")
    reg = cfg.method.regression

    report = gamma_exponential_check(bundle, cfg.payoff, gamma, beta, reg)
    controls = entropic_controls(bundle, cfg.payoff, gamma, beta, reg)
    xi = terminal_values(bundle, cfg.payoff)
    solution = solve_bsde(bundle, cfg.driver, -beta * xi, reg)
    z_gap = float(np.sqrt(np.mean((solution.z - controls.z) ** 2)))
    rows = [
        Row(sid, "gamma_exponential_gap", report.max_gap,
            check=f"gamma_exponential_within_{gap_tol:g}", passed=report.max_gap <= gap_tol),
        Row(sid, "controls_z_l2_gap", z_gap,
            check=f"controls_z_within_{ctl_tol:g}", passed=z_gap <= ctl_tol),
    ]
    if cfg.model.mark_count:
        rows.append(Row(sid, "gamma_exponential_gap_linearized", report.max_gap_linearized))
        u_gap = float(np.sqrt(np.mean((solution.upsilon - controls.upsilon) ** 2)))
        rows.append(Row(sid, "controls_upsilon_l2_gap", u_gap,
                        check=f"controls_upsilon_within_{ctl_tol:g}",
                        passed=u_gap <= ctl_tol))
    return rows


def _verify_coherent_static(cfg: ScenarioConfig, bundle: PathBundle) -> list[Row]:
    sid = cfg.scenario_id
    xi = terminal_values(bundle, cfg.payoff)
    level = cfg.verify.level
    result = entropic_coherent_static(level, xi)
    rows = [
        Row(sid, "coherent_gamma", result.gamma if result.gamma is not None else float("nan")),
        Row(sid, "coherent_rho", result.rho),
    ]
    if result.degenerate:
        rows.append(Row(sid, "coherent_degenerate", 1.0,
                        check="degenerate_claim", passed=True))
        return rows
    ent_tol = cfg.method.tolerance("entropy_identity")
    rows.append(Row(sid, "coherent_entropy_gap", abs(result.entropy_gap),
                    check=f"entropy_identity_within_{ent_tol:g}",
                    passed=abs(result.entropy_gap) <= ent_tol))
    scale_tol = cfg.method.tolerance("scaling_identity")
    for beta in (0.5, 2.0):
        scaled = entropic_coherent_static(level, beta * xi)
        gap = abs(scaled.rho - beta * result.rho)
        rows.append(Row(sid, f"coherent_scaling_gap_beta_{beta:g}", gap,
                        check=f"scaling_identity_within_{scale_tol:g}",
                        passed=gap <= scale_tol))
    return rows


def _task_verify(cfg: ScenarioConfig, bundle: PathBundle) -> list[Row]:
    sid = cfg.scenario_id
    rows: list[Row] = []
    for check in cfg.verify.checks:
        if check == "moments":
            rows.extend(_moment_rows(cfg, bundle, flag=True))
        elif check == "doleans":
            rows.extend(_verify_doleans(cfg, bundle))
        elif check == "closed_form":
            if cfg.driver.family != "entropic" or cfg.driver.unscaled_jump_exponent:
                raise ConfigValidationError("verify check closed_form requires an entropic driver")
            xi = terminal_values(bundle, cfg.payoff)
            solution = solve_bsde(bundle, cfg.driver, -xi, cfg.method.regression)
            closed = float(entropic_closed_form(
                cfg.driver.alpha, xi, 0, bundle, cfg.method.regression)[0])
            tol = cfg.method.tolerance("closed_form", _closed_form_default(cfg))
            gap = abs(solution.y0 - closed)
            rows.append(Row(sid, "rho0_closed_form_gap", gap,
                            check=f"closed_form_within_{tol:g}", passed=gap <= tol))
        elif check == "clark_ocone":
            co = clark_ocone(bundle, cfg.payoff, cfg.method.regression)
            tol = cfg.method.tolerance("clark_ocone")
            rows.append(Row(sid, "clark_ocone_residual", co.residual,
                            check=f"clark_ocone_within_{tol:g}",
                            passed=co.residual <= tol))
        elif check == "axioms":
            engine = RiskEngine(bundle, cfg.driver, cfg.method.regression,
                                mode=cfg.method.risk_mode)
            report = axiom_suite(engine, cfg.payoff)
            for row in report.rows:
                rows.append(Row(sid, f"axiom_{row.axiom}_{row.case}".replace(" ", "_"),
                                row.residual, check=row.axiom, passed=row.passed))
        elif check == "entropic_identity":
            rows.extend(_verify_entropic_identity(cfg, bundle))
        elif check == "coherent_static":
            rows.extend(_verify_coherent_static(cfg, bundle))
    return rows


_TASK_RUNNERS = {
    "simulate": _task_simulate,
    "solve": _task_solve,
    "risk": _task_risk,
    "allocate": _task_allocate,
    "verify": _task_verify,
}


def run_scenario(cfg: ScenarioConfig, wall_seconds: float | None = None) -> RunReport:
    """Execute the scenario's task pipeline and assemble the report."""
    bundle = simulate_paths(cfg.grid, cfg.model, cfg.paths, cfg.seed)
    rows = _TASK_RUNNERS[cfg.task](cfg, bundle)
    provenance = {
        "scenario_id": cfg.scenario_id,
        "task": cfg.task,
        "seed": cfg.seed,
        "version": __version__,
        "config": cfg.resolved,
    }
    if wall_seconds is not None:
        provenance["wall_seconds"] = wall_seconds
    return RunReport(scenario_id=cfg.scenario_id, rows=rows, provenance=provenance)
