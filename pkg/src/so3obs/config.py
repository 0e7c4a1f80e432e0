"""Run configuration: a YAML file with four top-level sections.

Schema (every key optional unless noted; unknown keys are rejected)::

    scenario:
      builtin: paper_example        # or omit and give the custom keys below
      duration: 10.0                # s
      h: 1.0e-3                     # observer step, s
      references:                   # custom only, at least two entries
        - weight: 2.0
          fixed: [0, 0, 1]
        - weight: 1.0
          landmark: [5, 0, 1]       # seen from a waypoint path
          waypoints: {times: [0, 10], positions: [[0, 0, 0], [10, 0, 0]]}
        - weight: 1.0
          rotating: {initial: [1, 0, 0], rate: [0, 0, 0.1]}
      truth:                        # custom only
        rates: [[1, 0, 0], [0, 0, 1]]   # R(t) = R0 exp(t w1^) exp(t w2^) ...
        r0_rotvec: [0, 0, 0]
        gamma: [0.1, 0.2, -0.1]
      initial:
        r_bar_rotvec: [1.5708, 0, 0]  # Rbar(0) = exp(hat(r_bar_rotvec))
        gamma_bar: [0, 0, 0]
      noise: {gyro_std: 0.0, direction_angle_std: 0.0}
    gains:                          # omitted or "auto" means the auto policy
      k_r: 2.53
      k_gamma: 1.65
      # or: policy: auto, epsilon: 0.9
    bounds:
      grid_step: 1.0e-3
      horizon: 10.0                 # defaults to the scenario duration
      a: 0.45                       # defaults to epsilon / 2 = 0.45
      b_gamma_factor: 1.65          # B_gamma = factor * |gamma|, or
      b_gamma: 2.475                # an absolute value (not both)
      mu_fraction: 0.9
    output:
      trace: trace.csv
      certificate: certificate.json
      decimate: 1
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from .certificate import DEFAULT_MU_FRACTION, ProblemConstants, auto_gains, build_certificate
from .errors import ConfigError
from .observer import ObserverGains
from .refset import (
    FixedDirection,
    LandmarkDirection,
    ReferenceDirection,
    ReferenceSet,
    RotatingDirection,
    WaypointPath,
    spectral_bounds,
)
from .scenario import NoiseModel, ScenarioConfig, exponential_product_truth, paper_example, rate_bound
from .so3 import exp_so3

__all__ = ["RunConfig", "Setup", "load_config", "parse_config", "build_setup", "EXAMPLE_K_GAMMA"]

# gain printed alongside the auto policy in the reference example
EXAMPLE_K_GAMMA = 1.65
DEFAULT_EPSILON = 0.9
DEFAULT_B_GAMMA_FACTOR = 1.65

_SECTIONS = {"scenario", "gains", "bounds", "output"}
_SCENARIO_KEYS = {"builtin", "duration", "h", "references", "truth", "initial", "noise"}
_GAIN_KEYS = {"k_r", "k_gamma", "policy", "epsilon"}
_BOUND_KEYS = {"grid_step", "horizon", "a", "b_gamma_factor", "b_gamma", "mu_fraction"}
_OUTPUT_KEYS = {"trace", "certificate", "decimate"}
_REF_KEYS = {"weight", "fixed", "landmark", "waypoints", "rotating"}
_TRUTH_KEYS = {"rates", "r0_rotvec", "gamma"}
_INITIAL_KEYS = {"r_bar_rotvec", "gamma_bar"}
_NOISE_KEYS = {"gyro_std", "direction_angle_std"}


def _mapping(value, where, allowed):
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(value).__name__}")
    unknown = set(value) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    return value


def _number(value, where, positive=False, nonnegative=False):
    # YAML 1.1 reads "1e-3" (no dot) as a string, so strings are coerced too
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a number, got {value!r}") from None
    if not np.isfinite(x):
        raise ConfigError(f"{where}: must be finite")
    if positive and not x > 0.0:
        raise ConfigError(f"{where}: must be positive")
    if nonnegative and x < 0.0:
        raise ConfigError(f"{where}: must be nonnegative")
    return x


def _vector(value, where, shape=(3,)):
    try:
        v = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected numbers") from None
    if v.shape != shape or not np.all(np.isfinite(v)):
        raise ConfigError(f"{where}: expected shape {shape}, got {v.shape}")
    return v


@dataclass
class RunConfig:
    """Validated configuration, still in plain values."""

    builtin: Optional[str] = None
    duration: float = 10.0
    h: float = 1e-3
    references: list = field(default_factory=list)
    truth: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)
    noise: dict = field(default_factory=dict)
    gains: Optional[dict] = None
    epsilon: float = DEFAULT_EPSILON
    grid_step: float = 1e-3
    horizon: Optional[float] = None
    a: Optional[float] = None
    b_gamma_factor: Optional[float] = None
    b_gamma: Optional[float] = None
    mu_fraction: float = DEFAULT_MU_FRACTION
    trace: Optional[str] = None
    certificate: Optional[str] = None
    decimate: int = 1

    @property
    def auto(self):
        return self.gains is None


def _parse_reference(entry, where):
    entry = _mapping(entry, where, _REF_KEYS)
    weight = _number(entry.get("weight", 1.0), f"{where}.weight", positive=True)
    kinds = [k for k in ("fixed", "landmark", "rotating") if k in entry]
    if len(kinds) != 1:
        raise ConfigError(f"{where}: need exactly one of fixed, landmark, rotating")
    kind = kinds[0]
    if kind == "fixed":
        v = _vector(entry["fixed"], f"{where}.fixed")
        if not np.linalg.norm(v) > 0:
            raise ConfigError(f"{where}.fixed: zero vector")
        return ReferenceDirection(weight, FixedDirection(v))
    if kind == "rotating":
        rot = _mapping(entry["rotating"], f"{where}.rotating", {"initial", "rate"})
        if "initial" not in rot:
            raise ConfigError(f"{where}.rotating: missing initial")
        init = _vector(rot["initial"], f"{where}.rotating.initial")
        if not np.linalg.norm(init) > 0:
            raise ConfigError(f"{where}.rotating.initial: zero vector")
        rate = _vector(rot.get("rate", [0, 0, 0]), f"{where}.rotating.rate")
        return ReferenceDirection(weight, RotatingDirection(init, rate))
    if "waypoints" not in entry:
        raise ConfigError(f"{where}: landmark needs waypoints")
    wp = _mapping(entry["waypoints"], f"{where}.waypoints", {"times", "positions"})
    times = np.asarray(wp.get("times", []), dtype=float)
    if times.ndim != 1 or len(times) < 1 or np.any(np.diff(times) <= 0):
        raise ConfigError(f"{where}.waypoints.times: need increasing times")
    pos = _vector(wp.get("positions"), f"{where}.waypoints.positions", (len(times), 3))
    landmark = _vector(entry["landmark"], f"{where}.landmark")
    return ReferenceDirection(weight, LandmarkDirection(landmark, WaypointPath(times, pos)))


def parse_config(data):
    """Validate a parsed YAML document into a :class:`RunConfig`."""
    root = _mapping(data, "config", _SECTIONS)
    cfg = RunConfig()
    sc = _mapping(root.get("scenario"), "scenario", _SCENARIO_KEYS)
    cfg.builtin = sc.get("builtin")
    if cfg.builtin is not None and cfg.builtin != "paper_example":
        raise ConfigError(f"scenario.builtin: unknown scenario {cfg.builtin!r}")
    if cfg.builtin is None and ("references" not in sc or "truth" not in sc):
        if not sc:
            cfg.builtin = "paper_example"
        else:
            raise ConfigError("scenario: custom scenarios need references and truth")
    if cfg.builtin is not None and ("references" in sc or "truth" in sc):
        raise ConfigError("scenario: builtin cannot be combined with references or truth")
    cfg.duration = _number(sc.get("duration", 10.0), "scenario.duration", positive=True)
    cfg.h = _number(sc.get("h", 1e-3), "scenario.h", positive=True)
    if cfg.builtin is None:
        refs = sc["references"]
        if not isinstance(refs, list) or len(refs) < 2:
            raise ConfigError("scenario.references: need a list of at least two entries")
        cfg.references = [_parse_reference(e, f"scenario.references[{i}]") for i, e in enumerate(refs)]
        tr = _mapping(sc["truth"], "scenario.truth", _TRUTH_KEYS)
        rates = np.asarray(tr.get("rates", []), dtype=float)
        if rates.ndim != 2 or rates.shape[-1] != 3:
            raise ConfigError("scenario.truth.rates: expected a list of 3-vectors")
        cfg.truth = {
            "rates": rates,
            "r0": exp_so3(_vector(tr.get("r0_rotvec", [0, 0, 0]), "scenario.truth.r0_rotvec")),
            "gamma": _vector(tr.get("gamma", [0, 0, 0]), "scenario.truth.gamma"),
        }
    ini = _mapping(sc.get("initial"), "scenario.initial", _INITIAL_KEYS)
    if "r_bar_rotvec" in ini:
        cfg.initial["r_bar"] = exp_so3(_vector(ini["r_bar_rotvec"], "scenario.initial.r_bar_rotvec"))
    if "gamma_bar" in ini:
        cfg.initial["gamma_bar"] = _vector(ini["gamma_bar"], "scenario.initial.gamma_bar")
    nz = _mapping(sc.get("noise"), "scenario.noise", _NOISE_KEYS)
    cfg.noise = {k: _number(v, f"scenario.noise.{k}", nonnegative=True) for k, v in nz.items()}

    gains = root.get("gains")
    if gains is None or gains == "auto":
        cfg.gains = None
    else:
        gains = _mapping(gains, "gains", _GAIN_KEYS)
        policy = gains.get("policy", "auto" if not ({"k_r", "k_gamma"} & set(gains)) else "fixed")
        if policy == "auto":
            if {"k_r", "k_gamma"} & set(gains):
                raise ConfigError("gains: policy auto cannot be combined with k_r or k_gamma")
            cfg.gains = None
            eps = _number(gains.get("epsilon", DEFAULT_EPSILON), "gains.epsilon")
            if not 0.0 < eps < 1.0:
                raise ConfigError("gains.epsilon: must lie in (0, 1)")
            cfg.epsilon = eps
        elif policy == "fixed":
            missing = {"k_r", "k_gamma"} - set(gains)
            if missing:
                raise ConfigError(f"gains: missing {sorted(missing)}")
            cfg.gains = {
                "k_r": _number(gains["k_r"], "gains.k_r", nonnegative=True),
                "k_gamma": _number(gains["k_gamma"], "gains.k_gamma", nonnegative=True),
            }
        else:
            raise ConfigError(f"gains.policy: unknown policy {policy!r}")

    bd = _mapping(root.get("bounds"), "bounds", _BOUND_KEYS)
    cfg.grid_step = _number(bd.get("grid_step", 1e-3), "bounds.grid_step", positive=True)
    if "horizon" in bd:
        cfg.horizon = _number(bd["horizon"], "bounds.horizon", positive=True)
    if "a" in bd:
        cfg.a = _number(bd["a"], "bounds.a")
        if not 0.0 < cfg.a < 0.5:
            raise ConfigError("bounds.a: must lie in (0, 1/2)")
    if "b_gamma" in bd and "b_gamma_factor" in bd:
        raise ConfigError("bounds: give b_gamma or b_gamma_factor, not both")
    if "b_gamma" in bd:
        cfg.b_gamma = _number(bd["b_gamma"], "bounds.b_gamma", nonnegative=True)
    if "b_gamma_factor" in bd:
        cfg.b_gamma_factor = _number(bd["b_gamma_factor"], "bounds.b_gamma_factor", nonnegative=True)
    cfg.mu_fraction = _number(bd.get("mu_fraction", DEFAULT_MU_FRACTION), "bounds.mu_fraction")
    if not 0.0 < cfg.mu_fraction < 1.0:
        raise ConfigError("bounds.mu_fraction: must lie in (0, 1)")

    out = _mapping(root.get("output"), "output", _OUTPUT_KEYS)
    cfg.trace = out.get("trace")
    cfg.certificate = out.get("certificate")
    dec = out.get("decimate", 1)
    if isinstance(dec, bool) or not isinstance(dec, int) or dec < 1:
        raise ConfigError("output.decimate: must be a positive integer")
    cfg.decimate = dec
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    return parse_config(data)


@dataclass
class Setup:
    """Everything a command needs, built from a :class:`RunConfig`."""

    scenario: ScenarioConfig
    spectral: object
    consts: ProblemConstants
    gains: ObserverGains
    certificate: object
    auto: bool
    notes: list = field(default_factory=list)


def build_setup(cfg, seed=None):
    """Construct the scenario, grid constants, gains and certificate."""
    if cfg.builtin == "paper_example":
        base = paper_example(cfg.h)
        truth, refs = base.truth, base.references
        r_bar0, g_bar0 = base.initial_r_bar, base.initial_gamma_bar
    else:
        truth = exponential_product_truth(cfg.truth["rates"], cfg.truth["gamma"], cfg.truth["r0"])
        refs = ReferenceSet(cfg.references)
        r_bar0, g_bar0 = np.eye(3), np.zeros(3)
    r_bar0 = cfg.initial.get("r_bar", r_bar0)
    g_bar0 = cfg.initial.get("gamma_bar", g_bar0)
    noise = None
    if any(v > 0 for v in cfg.noise.values()) or (cfg.noise and seed is not None):
        noise = NoiseModel(seed=0 if seed is None else int(seed), **cfg.noise)
    scenario = ScenarioConfig(truth, refs, cfg.duration, cfg.h, r_bar0, g_bar0, noise)

    horizon = cfg.duration if cfg.horizon is None else cfg.horizon
    spectral = spectral_bounds(refs, 0.0, horizon, cfg.grid_step)
    b_omega = rate_bound(truth, 0.0, horizon, cfg.grid_step)
    gamma_norm = float(np.linalg.norm(truth.gamma))
    if cfg.b_gamma is not None:
        b_gamma = cfg.b_gamma
    else:
        factor = DEFAULT_B_GAMMA_FACTOR if cfg.b_gamma_factor is None else cfg.b_gamma_factor
        b_gamma = factor * gamma_norm
    notes = []
    if cfg.auto:
        gains, a_auto = auto_gains(spectral, b_gamma, cfg.epsilon, cfg.a)
        a = a_auto
        notes.append(
            f"auto gains: k_r = 2 d / (c1^2 eps) = {gains.k_r!r}, "
            f"k_gamma = B_gamma^2 / (a c1 eps) = {gains.k_gamma!r} (eps = {cfg.epsilon!r}, a = {a!r})"
        )
        if cfg.builtin == "paper_example" and cfg.b_gamma is None and cfg.b_gamma_factor is None:
            msg = (
                f"the reference example prints k_gamma = {EXAMPLE_K_GAMMA}, which does not follow "
                f"from the auto policy (it gives {gains.k_gamma:.4g}); set gains explicitly to use it"
            )
            notes.append("warning: " + msg)
            warnings.warn(msg, stacklevel=2)
    else:
        gains = ObserverGains(cfg.gains["k_r"], cfg.gains["k_gamma"])
        a = 0.5 * cfg.epsilon if cfg.a is None else cfg.a
    consts = ProblemConstants(spectral.c1, spectral.c2, spectral.d, b_omega, b_gamma, a)
    cert = build_certificate(consts, gains, cfg.mu_fraction)
    cert.notes.append(f"grid estimates on [0, {horizon!r}] with step {cfg.grid_step!r}")
    return Setup(scenario, spectral, consts, gains, cert, cfg.auto, notes)
