import io

import numpy as np
import pytest

from so3obs.errors import NonMonotoneTime, ParseError
from so3obs.observer import ObserverGains
from so3obs.refset import directions_at
from so3obs.scenario import (
    ESTIMATE_COLUMNS,
    TRACE_COLUMNS,
    NoiseModel,
    ReplayLog,
    ScenarioConfig,
    exponential_product_truth,
    kinematic_residual,
    load_replay,
    paper_example,
    rate_bound,
    run,
    run_replay,
    synthesize_frame,
    synthesize_log,
    write_replay,
)
from so3obs.so3 import exp_so3, random_rotations

E1, E3 = np.eye(3)[0], np.eye(3)[2]
EXAMPLE_GAINS = ObserverGains(2.53, 1.65)


def test_paper_example_setup(example_config):
    refs = example_config.references
    s = directions_at(refs, np.array([0.0, 3.7, 10.0]))
    assert np.allclose(s[:, 2], E3)
    assert np.allclose(s[0, 0], np.array([5.0, 0.0, 1.0]) / np.sqrt(26.0), atol=1e-15)
    assert np.allclose(refs.weights, [1.0, 1.0, 2.0])
    assert np.allclose(example_config.truth.omega_fn(0.0), [2.0, 0.0, 1.0])
    assert np.allclose(example_config.truth.gamma, [1.0, 0.5, -1.0])
    assert np.allclose(example_config.initial_r_bar, exp_so3([np.pi / 2, 0, 0]))
    assert np.array_equal(example_config.initial_gamma_bar, np.zeros(3))
    assert example_config.duration == 10.0 and example_config.n_steps == 10000


def test_paper_truth_attitude_formula(example_config):
    t = 0.83
    hat_e1 = exp_so3(t * E1)
    expected = hat_e1 @ exp_so3(t * E3) @ hat_e1
    assert np.allclose(example_config.truth.attitude_fn(t), expected, atol=1e-15)


def test_kinematic_consistency(rng, example_config):
    ts = rng.uniform(0.0, 10.0, 100)
    assert kinematic_residual(example_config.truth, ts).max() < 1e-4
    rates = rng.standard_normal((3, 3))
    truth = exponential_product_truth(rates, np.zeros(3), random_rotations(rng))
    assert kinematic_residual(truth, ts).max() < 1e-4


def test_rate_bound_covers_samples(rng, example_config):
    b = rate_bound(example_config.truth, 0.0, 10.0, 1e-3)
    assert b == pytest.approx(np.sqrt(5.0), abs=1e-12)
    ts = rng.uniform(0, 10, 1000)
    assert np.linalg.norm(example_config.truth.omega_fn(ts), axis=-1).max() <= b + 1e-12


def test_frame_noise_off(rng, example_config):
    truth = exponential_product_truth([np.zeros(3)], [0.1, 0.2, 0.3])
    f = synthesize_frame(truth, example_config.references, 2.0)
    assert np.allclose(f.b, f.s, atol=1e-15)
    assert np.allclose(f.omega_z, [0.1, 0.2, 0.3])
    for t in rng.uniform(0, 10, 50):
        f = synthesize_frame(example_config.truth, example_config.references, t)
        assert np.abs(np.linalg.norm(f.b, axis=-1) - 1).max() <= 1e-12
        assert np.abs(np.linalg.norm(f.s, axis=-1) - 1).max() <= 1e-12


def test_frame_noise_is_deterministic(example_config):
    noise = NoiseModel(gyro_std=0.01, direction_angle_std=0.02, seed=11)
    a = synthesize_frame(example_config.truth, example_config.references, 1.25, noise)
    b = synthesize_frame(example_config.truth, example_config.references, 1.25, noise)
    c = synthesize_frame(example_config.truth, example_config.references, 1.25, noise, rng_seed=12)
    clean = synthesize_frame(example_config.truth, example_config.references, 1.25)
    assert a.omega_z.tobytes() == b.omega_z.tobytes() and a.b.tobytes() == b.b.tobytes()
    assert not np.array_equal(a.b, c.b)
    assert not np.array_equal(a.omega_z, clean.omega_z)
    assert np.abs(np.linalg.norm(a.b, axis=-1) - 1).max() <= 1e-12


def _short(cfg, duration, **kw):
    return ScenarioConfig(cfg.truth, cfg.references, duration, cfg.observer_h,
                          kw.get("r_bar", cfg.initial_r_bar), kw.get("gamma_bar", cfg.initial_gamma_bar),
                          kw.get("noise"))


def test_run_from_exact_estimate(example_config):
    cfg = _short(example_config, 2.0, r_bar=np.eye(3), gamma_bar=example_config.truth.gamma)
    tr = run(cfg, EXAMPLE_GAINS)
    assert len(tr) == 2001
    assert tr.er_norm.max() <= 1e-9 and tr.egamma_norm.max() <= 1e-9


def test_run_with_gains_off_keeps_bias_error(example_config):
    tr = run(_short(example_config, 1.0), ObserverGains(0.0, 0.0))
    assert np.allclose(tr.egamma_norm, 1.5, atol=0)


def test_run_columns_without_certificate(example_trace):
    for name in ("v0", "v", "envelope", "in_domain"):
        assert np.isnan(example_trace.column(name)).all()
    assert example_trace.t[-1] == pytest.approx(10.0, abs=1e-12)
    assert example_trace.er_norm[0] == pytest.approx(2.0, abs=1e-14)


def test_run_rejects_foreign_certificate(example_config):
    from so3obs.certificate import ProblemConstants, build_certificate

    cert = build_certificate(ProblemConstants(1, 4, 1.14, 2.24, 2.475, 0.45), ObserverGains(3, 20))
    with pytest.raises(ValueError):
        run(_short(example_config, 0.1), EXAMPLE_GAINS, cert)


def test_noisy_run_is_bitwise_deterministic(example_config):
    noise = NoiseModel(gyro_std=0.01, direction_angle_std=0.01, seed=3)
    cfg = _short(example_config, 0.5, noise=noise)
    bufs = []
    for _ in range(2):
        buf = io.StringIO()
        run(cfg, EXAMPLE_GAINS).to_csv(buf)
        bufs.append(buf.getvalue())
    assert bufs[0] == bufs[1]


def test_csv_format(example_trace):
    buf = io.StringIO()
    example_trace.to_csv(buf, decimate=1000)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert len(lines) == 1 + 11
    first = lines[1].split(",")
    assert first[0] == "0.0" and first[2] == "2.0" and first[5] == ""  # v0 empty without certificate
    assert float(lines[-1].split(",")[0]) == pytest.approx(10.0)


def _small_log(cfg, n=20, dt=0.05, truth=True):
    log = synthesize_log(cfg, dt * np.arange(n))
    if not truth:
        log = ReplayLog(log.frames, np.full_like(log.truth_r, np.nan), np.full_like(log.truth_gamma, np.nan))
    return log


def test_replay_file_round_trip(tmp_path, example_config):
    log = _small_log(example_config)
    path = tmp_path / "log.csv"
    write_replay(path, log)
    text = path.read_text()
    path.write_text("# recorded by a test\n\n" + text)
    back = load_replay(path)
    assert np.array_equal(back.times, log.times)
    assert np.array_equal(back.truth_r, log.truth_r)
    for a, b in zip(back.frames, log.frames):
        assert np.array_equal(a.omega_z, b.omega_z) and np.array_equal(a.b, b.b) and np.array_equal(a.w, b.w)
    header = text.splitlines()[0].split(",")
    assert header[:12] == ["t", "wx", "wy", "wz", "n", "s1x", "s1y", "s1z", "b1x", "b1y", "b1z", "w1"]
    assert header[-12:] == [f"r{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3)] + ["gx", "gy", "gz"]


def test_replay_without_truth(tmp_path, example_config):
    path = tmp_path / "log.csv"
    write_replay(path, _small_log(example_config, truth=False))
    assert "r11" not in path.read_text().splitlines()[0]
    tr = run_replay(load_replay(path), EXAMPLE_GAINS, example_config.initial_state())
    assert np.isnan(tr.er_norm).all()
    assert np.isfinite(tr.column("rb11")).all() and np.isfinite(tr.column("gbz")).all()
    buf = io.StringIO()
    tr.to_csv(buf, columns=TRACE_COLUMNS + ESTIMATE_COLUMNS)
    row = buf.getvalue().splitlines()[1].split(",")
    assert row[2] == "" and row[len(TRACE_COLUMNS)] != ""


def test_replay_zero_order_hold(example_config):
    log = _small_log(example_config, n=11, dt=0.1)
    tr = run_replay(log, EXAMPLE_GAINS, example_config.initial_state(), h=0.025)
    assert len(tr) == 41
    # error columns only where a frame with truth sits on the sample
    assert np.isfinite(tr.er_norm[::4]).all()
    assert np.isnan(np.delete(tr.er_norm, np.arange(0, 41, 4))).all()


def test_replay_is_bitwise_deterministic(example_config):
    log = _small_log(example_config)
    outs = []
    for _ in range(2):
        buf = io.StringIO()
        run_replay(log, EXAMPLE_GAINS, example_config.initial_state()).to_csv(buf)
        outs.append(buf.getvalue())
    assert outs[0] == outs[1]


@pytest.fixture
def good_log_text(example_config):
    buf = io.StringIO()
    write_replay(buf, _small_log(example_config, n=5))
    return buf.getvalue()


def _write(tmp_path, text):
    p = tmp_path / "log.csv"
    p.write_text(text)
    return p


@pytest.mark.parametrize("text", ["", "# only a comment\n\n"])
def test_replay_empty(tmp_path, text):
    with pytest.raises(ParseError):
        load_replay(_write(tmp_path, text))


def test_replay_header_only(tmp_path, good_log_text):
    with pytest.raises(ParseError, match="line 1"):
        load_replay(_write(tmp_path, good_log_text.splitlines()[0] + "\n"))


def test_replay_bad_number_reports_line(tmp_path, good_log_text):
    lines = good_log_text.splitlines()
    fields = lines[3].split(",")
    fields[1] = "oops"
    lines[3] = ",".join(fields)
    with pytest.raises(ParseError, match="line 4") as exc:
        load_replay(_write(tmp_path, "\n".join(lines) + "\n"))
    assert exc.value.line == 4


def test_replay_short_row(tmp_path, good_log_text):
    lines = good_log_text.splitlines()
    lines[2] = ",".join(lines[2].split(",")[:-3])
    with pytest.raises(ParseError, match="line 3"):
        load_replay(_write(tmp_path, "\n".join(lines)))


def test_replay_non_monotone(tmp_path, good_log_text):
    lines = good_log_text.splitlines()
    lines[3], lines[4] = lines[4], lines[3]
    with pytest.raises(NonMonotoneTime, match="line 5"):
        load_replay(_write(tmp_path, "\n".join(lines)))


def test_replay_missing_and_partial_columns(tmp_path, good_log_text):
    lines = good_log_text.splitlines()
    header = lines[0].split(",")
    with pytest.raises(ParseError, match="missing column 'wx'"):
        load_replay(_write(tmp_path, "\n".join([lines[0].replace("wx", "wq")] + lines[1:])))
    cut = [",".join(line.split(",")[:-1]) for line in lines]
    assert header[-1] == "gz"
    with pytest.raises(ParseError, match="all present or all absent"):
        load_replay(_write(tmp_path, "\n".join(cut)))
    fields = lines[2].split(",")
    fields[-1] = ""
    with pytest.raises(ParseError, match="partial truth"):
        load_replay(_write(tmp_path, "\n".join(lines[:2] + [",".join(fields)] + lines[3:])))


def test_replay_non_unit_direction(tmp_path, good_log_text):
    lines = good_log_text.splitlines()
    fields = lines[1].split(",")
    fields[8] = "2.0"  # b1x
    with pytest.raises(ParseError, match="line 2"):
        load_replay(_write(tmp_path, "\n".join([lines[0], ",".join(fields)] + lines[2:])))
