import warnings

import numpy as np
import pytest
import yaml

from so3obs.config import EXAMPLE_K_GAMMA, build_setup, load_config, parse_config
from so3obs.errors import ConfigError

CUSTOM = """
scenario:
  duration: 2.0
  h: 1e-2
  references:
    - {weight: 2.0, fixed: [0, 0, 1]}
    - {weight: 1.0, rotating: {initial: [1, 0, 0], rate: [0, 0, 0.1]}}
    - weight: 1.0
      landmark: [5, 3, 1]
      waypoints: {times: [0, 2], positions: [[0, 0, 0], [1, 0, 0]]}
  truth: {rates: [[0.3, 0, 0]], gamma: [0.05, -0.05, 0.02]}
  initial: {r_bar_rotvec: [0.3, 0, 0]}
gains: {k_r: 3.0, k_gamma: 2.0}
bounds: {a: 0.4, b_gamma_factor: 1.0, grid_step: 1e-3}
output: {decimate: 10}
"""


def _parse(text):
    return parse_config(yaml.safe_load(text))


def test_defaults_are_paper_example():
    cfg = parse_config(None)
    assert cfg.builtin == "paper_example" and cfg.auto
    assert cfg.h == 1e-3 and cfg.duration == 10.0 and cfg.mu_fraction == 0.9


def test_custom_parses_and_builds():
    cfg = _parse(CUSTOM)
    assert cfg.h == 0.01 and cfg.grid_step == 0.001  # "1e-2" is a string in YAML 1.1
    setup = build_setup(cfg)
    assert len(setup.scenario.references) == 3
    assert setup.scenario.n_steps == 200
    assert setup.consts.b_gamma == pytest.approx(np.linalg.norm([0.05, -0.05, 0.02]))
    assert setup.certificate.valid
    assert any("grid estimates" in n for n in setup.certificate.notes)


@pytest.mark.parametrize(
    "text, match",
    [
        ("bogus: 1", "unknown key"),
        ("scenario: {builtin: paper_example, speed: 3}", "unknown key"),
        ("gains: {k_r: 1, k_gamma: 1, kp: 2}", "unknown key"),
        ("bounds: {grid: 1}", "unknown key"),
        ("output: {path: x}", "unknown key"),
        ("scenario: {builtin: other}", "unknown scenario"),
        ("scenario: {duration: -1}", "custom scenarios need"),
        ("scenario: {builtin: paper_example, duration: -1}", "positive"),
        ("scenario: {builtin: paper_example, h: fast}", "expected a number"),
        ("gains: {k_r: 1}", "missing"),
        ("gains: {policy: auto, k_r: 1}", "cannot be combined"),
        ("gains: {policy: magic}", "unknown policy"),
        ("gains: {epsilon: 1.5}", "epsilon"),
        ("gains: {k_r: -1, k_gamma: 1}", "nonnegative"),
        ("bounds: {a: 0.5}", "bounds.a"),
        ("bounds: {b_gamma: 1, b_gamma_factor: 2}", "not both"),
        ("bounds: {mu_fraction: 1}", "mu_fraction"),
        ("output: {decimate: 0}", "decimate"),
        ("output: {decimate: 1.5}", "decimate"),
        ("[1, 2]", "expected a mapping"),
    ],
)
def test_rejections(text, match):
    with pytest.raises(ConfigError, match=match):
        _parse(text)


@pytest.mark.parametrize(
    "ref, match",
    [
        ("{weight: 1, fixed: [0, 0]}", "shape"),
        ("{weight: 0, fixed: [0, 0, 1]}", "positive"),
        ("{weight: 1}", "exactly one"),
        ("{weight: 1, fixed: [0, 0, 1], rotating: {initial: [1, 0, 0]}}", "exactly one"),
        ("{weight: 1, landmark: [1, 2, 3]}", "waypoints"),
        ("{weight: 1, landmark: [1, 2, 3], waypoints: {times: [1, 0], positions: [[0,0,0],[1,0,0]]}}", "increasing"),
        ("{weight: 1, fixed: [0, 0, 0]}", "zero vector"),
        ("{weight: 1, colour: red, fixed: [0, 0, 1]}", "unknown key"),
    ],
)
def test_reference_rejections(ref, match):
    text = f"scenario: {{references: [{ref}, {{fixed: [1, 0, 0]}}], truth: {{rates: [[0, 0, 0]]}}}}"
    with pytest.raises(ConfigError, match=match):
        _parse(text)


def test_builtin_conflicts_with_custom_keys():
    with pytest.raises(ConfigError, match="builtin cannot"):
        _parse("scenario: {builtin: paper_example, references: [], truth: {}}")


def test_auto_policy_reproduces_formula_and_warns():
    cfg = parse_config({"scenario": {"builtin": "paper_example"}})
    with pytest.warns(UserWarning, match=str(EXAMPLE_K_GAMMA)):
        setup = build_setup(cfg)
    b = setup.spectral
    assert setup.gains.k_r == pytest.approx(2 * b.d / (b.c1**2 * 0.9))
    assert setup.gains.k_gamma == pytest.approx((1.65 * 1.5) ** 2 / (0.45 * b.c1 * 0.9))
    assert setup.consts.a == 0.45
    assert setup.certificate.valid


def test_explicit_gains_and_absolute_b_gamma():
    cfg = _parse("gains: {k_r: 2.53, k_gamma: 1.65}\nbounds: {b_gamma: 0.5}")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        setup = build_setup(cfg)
    assert setup.consts.b_gamma == 0.5 and setup.consts.a == 0.45
    assert setup.gains.k_gamma == 1.65


def test_noise_seed_applies():
    cfg = _parse("scenario: {builtin: paper_example, noise: {gyro_std: 0.01}}\ngains: {k_r: 3, k_gamma: 20}")
    assert build_setup(cfg, seed=42).scenario.noise.seed == 42


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario: [unclosed\n")
    with pytest.raises(ConfigError, match="cannot parse"):
        load_config(bad)
