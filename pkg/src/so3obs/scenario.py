"""Ground truth, synthetic measurements, simulation runs and log replay."""

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .certificate import lyapunov_sample
from .errors import NonMonotoneTime, ParseError
from .observer import MeasurementFrame, ObserverState, integrate
from .refset import (
    FixedDirection,
    LandmarkDirection,
    LinearPath,
    ReferenceDirection,
    ReferenceSet,
    directions_at,
    g_matrix,
)
from .so3 import exp_so3, psi, vee

__all__ = [
    "TruthModel",
    "NoiseModel",
    "ScenarioConfig",
    "ErrorTrace",
    "ReplayLog",
    "exponential_product_truth",
    "paper_truth",
    "paper_references",
    "paper_example",
    "kinematic_residual",
    "rate_bound",
    "synthesize_frame",
    "frame_source",
    "run",
    "synthesize_log",
    "write_replay",
    "load_replay",
    "run_replay",
    "TRACE_COLUMNS",
    "ESTIMATE_COLUMNS",
]

TRACE_COLUMNS = (
    "t",
    "psi",
    "er_norm",
    "egamma_norm",
    "z_norm",
    "v0",
    "v",
    "envelope",
    "ortho_residual",
    "in_domain",
)
ESTIMATE_COLUMNS = tuple(f"rb{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3)) + ("gbx", "gby", "gbz")
TRUTH_COLUMNS = tuple(f"r{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3)) + ("gx", "gy", "gz")


@dataclass(frozen=True)
class TruthModel:
    """True attitude ``R(t)``, body rate ``Omega(t)`` and the constant gyro bias.

    Both functions accept scalar or array time.
    """

    attitude_fn: Callable
    omega_fn: Callable
    gamma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float).reshape(3))


@dataclass(frozen=True)
class NoiseModel:
    gyro_std: float = 0.0
    direction_angle_std: float = 0.0
    seed: int = 0


@dataclass
class ScenarioConfig:
    truth: TruthModel
    references: ReferenceSet
    duration: float
    observer_h: float
    initial_r_bar: np.ndarray
    initial_gamma_bar: np.ndarray
    noise: Optional[NoiseModel] = None

    def __post_init__(self):
        if not self.duration > 0.0 or not self.observer_h > 0.0:
            raise ValueError("duration and observer_h must be positive")
        self.initial_r_bar = np.asarray(self.initial_r_bar, dtype=float)
        self.initial_gamma_bar = np.asarray(self.initial_gamma_bar, dtype=float).reshape(3)

    @property
    def n_steps(self):
        return int(round(self.duration / self.observer_h))

    def initial_state(self):
        return ObserverState(self.initial_r_bar, self.initial_gamma_bar)


def exponential_product_truth(rates, gamma, r0=None):
    """Truth ``R(t) = R0 exp(t hat(w_1)) ... exp(t hat(w_m))`` with its exact body rate.

    The body rate is ``Omega(t) = sum_k (P_k(t))^T w_k``, where ``P_k`` is
    the product of the factors to the right of ``k``.
    """
    rates = [np.asarray(w, dtype=float) for w in rates]
    r0 = np.eye(3) if r0 is None else np.asarray(r0, dtype=float)

    def attitude(t):
        t = np.asarray(t, dtype=float)
        r = np.broadcast_to(r0, t.shape + (3, 3))
        for w in rates:
            r = r @ exp_so3(t[..., None] * w)
        return r

    def omega(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (3,))
        right = np.broadcast_to(np.eye(3), t.shape + (3, 3))
        for w in reversed(rates):
            out = out + np.einsum("...ji,j->...i", right, w)
            right = exp_so3(t[..., None] * w) @ right
        return out

    return TruthModel(attitude, omega, gamma)


def paper_truth():
    """``R(t) = exp(t e1^) exp(t e3^) exp(t e1^)`` with bias ``(1, 0.5, -1)``.

    The body rate is the closed form, which is checked against finite
    differences of ``R(t)``.
    """
    e1, e3 = np.eye(3)[0], np.eye(3)[2]
    base = exponential_product_truth([e1, e3, e1], gamma=[1.0, 0.5, -1.0])

    def omega(t):
        t = np.asarray(t, dtype=float)
        st, ct = np.sin(t), np.cos(t)
        return np.stack([1.0 + ct, st - st * ct, ct + st**2], axis=-1)

    return TruthModel(base.attitude_fn, omega, base.gamma)


def paper_references():
    """Landmarks (5, 0, 1) and (7, -2, 0) seen from ``x(t) = (t, 0, 0)``, plus gravity."""
    path = LinearPath([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    return ReferenceSet(
        [
            ReferenceDirection(1.0, LandmarkDirection([5.0, 0.0, 1.0], path)),
            ReferenceDirection(1.0, LandmarkDirection([7.0, -2.0, 0.0], path)),
            ReferenceDirection(2.0, FixedDirection([0.0, 0.0, 1.0])),
        ]
    )


def paper_example(observer_h=1e-3):
    return ScenarioConfig(
        truth=paper_truth(),
        references=paper_references(),
        duration=10.0,
        observer_h=observer_h,
        initial_r_bar=exp_so3([0.5 * np.pi, 0.0, 0.0]),
        initial_gamma_bar=np.zeros(3),
    )


def kinematic_residual(truth, t, step=1e-5):
    """``|(R^T dR/dt)^vee - Omega|`` with ``dR/dt`` by central difference."""
    t = np.asarray(t, dtype=float)
    dr = (truth.attitude_fn(t + step) - truth.attitude_fn(t - step)) / (2.0 * step)
    body = vee(np.swapaxes(truth.attitude_fn(t), -1, -2) @ dr, check=False)
    return np.linalg.norm(body - truth.omega_fn(t), axis=-1)


def rate_bound(truth, t0, t1, step):
    """Grid maximum of ``|Omega(t)|``, sampled like the spectral bounds."""
    n = int(np.floor((t1 - t0) / step + 1e-9)) + 1
    ts = np.append(t0 + step * np.arange(n), t1)
    return float(np.linalg.norm(truth.omega_fn(ts), axis=-1).max())


def _time_key(t):
    return int(round(float(t) * 1e9))


def synthesize_frame(truth, refs, t, noise=None, rng_seed=None):
    """Measurements at ``t``: ``Omega_z = Omega + gamma`` and ``b_i = R^T s_i``.

    With a noise model, gyro noise is isotropic Gaussian. Each ``b_i`` is then
    turned by a random rotation whose angle is Gaussian, and renormalized. The
    draw depends only on ``(seed, t)``, so repeated queries at one instant agree.
    """
    s = directions_at(refs, t)
    r = truth.attitude_fn(t)
    b = s @ r  # rows are (R^T s_i)^T
    omega_z = truth.omega_fn(t) + truth.gamma
    if _noisy(noise):
        seed = noise.seed if rng_seed is None else rng_seed
        rng = np.random.default_rng([int(seed), _time_key(t)])
        omega_z = omega_z + noise.gyro_std * rng.standard_normal(3)
        if noise.direction_angle_std > 0.0:
            axes = rng.standard_normal(b.shape)
            axes /= np.linalg.norm(axes, axis=-1, keepdims=True)
            angles = noise.direction_angle_std * rng.standard_normal(b.shape[0])
            rots = exp_so3(angles[:, None] * axes)
            b = np.einsum("nij,nj->ni", rots, b)
    b = b / np.linalg.norm(b, axis=-1, keepdims=True)
    # directions were checked by directions_at and b_i is a rotated unit vector
    return MeasurementFrame.trusted(float(t), omega_z, s, b, refs.weights)


def frame_source(config):
    """Frame callback for :func:`integrate`, memoizing the last few instants.

    The integrator asks for ``t + h/2`` twice and revisits ``t + h`` on the next step.
    """
    truth, refs, noise = config.truth, config.references, config.noise
    cache = {}

    def frame_fn(tau):
        frame = cache.get(tau)
        if frame is None:
            if len(cache) > 8:
                cache.clear()
            frame = cache[tau] = synthesize_frame(truth, refs, tau, noise)
        return frame

    return frame_fn


def _noisy(noise):
    return noise is not None and (noise.gyro_std > 0.0 or noise.direction_angle_std > 0.0)


def _noiseless_frames(truth, refs, times):
    """Noiseless frames at many instants in one vectorized pass."""
    s = directions_at(refs, times)
    r = truth.attitude_fn(times)
    b = np.einsum("kni,kij->knj", s, r)
    b /= np.linalg.norm(b, axis=-1, keepdims=True)
    omega_z = truth.omega_fn(times) + truth.gamma
    w = refs.weights
    return [
        MeasurementFrame.trusted(times[k], omega_z[k], s[k], b[k], w) for k in range(len(times))
    ]


def _batched_source(config, h, n_steps):
    """Like :func:`frame_source`, with noiseless stage frames precomputed in bulk."""
    if _noisy(config.noise):
        return frame_source(config)
    ts = h * np.arange(n_steps + 1)
    times = np.concatenate([ts, ts[:-1] + 0.5 * h])
    frames = _noiseless_frames(config.truth, config.references, times)
    index = {float(t): f for t, f in zip(times, frames)}
    fallback = frame_source(config)

    def frame_fn(tau):
        frame = index.get(float(tau))
        return fallback(tau) if frame is None else frame

    return frame_fn


@dataclass
class ErrorTrace:
    """Sampled observer run. Columns without truth or certificate hold NaN."""

    t: np.ndarray
    psi: np.ndarray
    er_norm: np.ndarray
    egamma_norm: np.ndarray
    z_norm: np.ndarray
    v0: np.ndarray
    v: np.ndarray
    envelope: np.ndarray
    ortho_residual: np.ndarray
    in_domain: np.ndarray
    projected: np.ndarray
    r_bar: np.ndarray = field(repr=False)
    gamma_bar: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.t)

    def column(self, name):
        if name in TRACE_COLUMNS:
            return np.asarray(getattr(self, name), dtype=float)
        if name in ESTIMATE_COLUMNS:
            k = ESTIMATE_COLUMNS.index(name)
            if k < 9:
                return self.r_bar[:, k // 3, k % 3]
            return self.gamma_bar[:, k - 9]
        raise KeyError(name)

    def to_csv(self, path_or_buf, columns=TRACE_COLUMNS, decimate=1):
        """Write selected columns; NaN becomes an empty cell, floats use ``repr``."""
        cols = [self.column(c) for c in columns]
        own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
        fh = open(path_or_buf, "w", newline="", encoding="utf-8") if own else path_or_buf
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for k in range(0, len(self.t), decimate):
                w.writerow(_fmt(c[k], name) for c, name in zip(cols, columns))
        finally:
            if own:
                fh.close()


def _fmt(x, name=None):
    x = float(x)
    if math.isnan(x):
        return ""
    if name == "in_domain":
        return str(int(x))
    return repr(x)


def _assemble(integ, truth_r, truth_g, g, certificate, valid=None):
    """Build the trace; ``valid`` masks samples whose truth is known."""
    n = len(integ.t)
    cols = {name: np.full(n, np.nan) for name in TRACE_COLUMNS[1:-2] + ("in_domain",)}
    if truth_r is not None:
        valid = np.ones(n, dtype=bool) if valid is None else valid
        cols["psi"] = psi(g, truth_r, integ.r_bar)
        cols["er_norm"] = np.linalg.norm(truth_r - integ.r_bar, axis=(-2, -1))
        cols["egamma_norm"] = np.linalg.norm(truth_g - integ.gamma_bar, axis=-1)
        cols["z_norm"] = np.hypot(cols["er_norm"], cols["egamma_norm"])
        if certificate is not None:
            # the envelope is anchored at the first sample, when its truth is known
            z0 = float(cols["z_norm"][0]) if valid[0] else None
            ls = lyapunov_sample(
                certificate.consts, certificate.gains, certificate.mu, g, truth_r,
                integ.r_bar, truth_g, integ.gamma_bar, integ.t - integ.t[0],
                cert=certificate, z0_norm=z0,
            )
            cols["v0"], cols["v"], cols["envelope"] = ls.v0, ls.v, ls.envelope
            limit = 2.0 * certificate.consts.a * certificate.consts.c1
            cols["in_domain"] = (ls.v0 < limit).astype(float)
        for name in cols:
            cols[name] = np.where(valid, cols[name], np.nan)
    return ErrorTrace(
        t=integ.t,
        ortho_residual=integ.ortho_residual,
        projected=integ.projected,
        r_bar=integ.r_bar,
        gamma_bar=integ.gamma_bar,
        **cols,
    )


def run(config, gains, certificate=None):
    """Simulate the observer on ``config`` and sample errors at every step.

    ``v0``, ``v``, ``envelope`` and ``in_domain`` need ``certificate``, because
    they depend on ``mu``, ``a`` and ``c1``; without it they are NaN.
    """
    if certificate is not None and (
        certificate.gains.k_r != gains.k_r or certificate.gains.k_gamma != gains.k_gamma
    ):
        raise ValueError("certificate was built for different gains")
    h, n = config.observer_h, config.n_steps
    integ = integrate(config.initial_state(), _batched_source(config, h, n), gains, 0.0, h, n)
    truth_r = config.truth.attitude_fn(integ.t)
    truth_g = np.broadcast_to(config.truth.gamma, (len(integ.t), 3))
    g = g_matrix(config.references, integ.t)
    return _assemble(integ, truth_r, truth_g, g, certificate)


@dataclass
class ReplayLog:
    """Recorded frames; truth arrays hold NaN on rows without truth."""

    frames: List[MeasurementFrame]
    truth_r: np.ndarray
    truth_gamma: np.ndarray

    def __post_init__(self):
        ts = self.times
        if len(ts) and np.any(np.diff(ts) <= 0.0):
            k = int(np.argmax(np.diff(ts) <= 0.0)) + 1
            raise NonMonotoneTime(f"timestamp {ts[k]!r} does not increase", line=None)

    @property
    def times(self):
        return np.array([f.t for f in self.frames])

    @property
    def has_truth(self):
        return np.all(np.isfinite(self.truth_r), axis=(-2, -1)) & np.all(
            np.isfinite(self.truth_gamma), axis=-1
        )


def synthesize_log(config, times, bias=None):
    """Frames and truth sampled from ``config`` at ``times``.

    ``bias`` replaces the truth model's gyro bias.
    """
    truth = config.truth
    if bias is not None:
        truth = TruthModel(truth.attitude_fn, truth.omega_fn, bias)
    times = np.asarray(times, dtype=float)
    if _noisy(config.noise):
        frames = [synthesize_frame(truth, config.references, t, config.noise) for t in times]
    else:
        frames = _noiseless_frames(truth, config.references, times)
    truth_r = truth.attitude_fn(times)
    truth_g = np.broadcast_to(truth.gamma, (len(times), 3)).copy()
    return ReplayLog(frames, truth_r, truth_g)


def write_replay(path_or_buf, log):
    """Write a replay log as CSV with one ``s, b, w`` block per direction."""
    n_max = max(len(f.w) for f in log.frames)
    header = ["t", "wx", "wy", "wz", "n"]
    for i in range(1, n_max + 1):
        header += [f"s{i}x", f"s{i}y", f"s{i}z", f"b{i}x", f"b{i}y", f"b{i}z", f"w{i}"]
    has_truth = log.has_truth
    with_truth = bool(np.any(has_truth))
    if with_truth:
        header += list(TRUTH_COLUMNS)
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", newline="", encoding="utf-8") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k, f in enumerate(log.frames):
            row = [repr(f.t)] + [repr(float(x)) for x in f.omega_z] + [str(len(f.w))]
            for s, b, wi in f.pairs:
                row += [repr(float(x)) for x in s] + [repr(float(x)) for x in b] + [repr(float(wi))]
            row += [""] * (7 * (n_max - len(f.w)))
            if with_truth:
                if has_truth[k]:
                    row += [repr(float(x)) for x in log.truth_r[k].ravel()]
                    row += [repr(float(x)) for x in log.truth_gamma[k]]
                else:
                    row += [""] * 12
            w.writerow(row)
    finally:
        if own:
            fh.close()


def _floats(fields, line):
    try:
        return [float(x) for x in fields]
    except ValueError as exc:
        raise ParseError(f"bad number ({exc})", line) from None


def load_replay(path):
    """Parse a replay CSV. ``#`` lines are skipped; the first other line is the header."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    rows = []
    for lineno, line in enumerate(io.StringIO(text), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        rows.append((lineno, next(csv.reader([line]))))
    if not rows:
        raise ParseError("empty replay log", 1)
    header_line, header = rows[0]
    header = [h.strip() for h in header]
    col = {name: k for k, name in enumerate(header)}
    for name in ("t", "wx", "wy", "wz", "n"):
        if name not in col:
            raise ParseError(f"missing column {name!r}", header_line)
    has_truth_cols = all(c in col for c in TRUTH_COLUMNS)
    if not has_truth_cols and any(c in col for c in TRUTH_COLUMNS):
        raise ParseError("truth columns must be all present or all absent", header_line)
    if len(rows) == 1:
        raise ParseError("replay log has a header but no frames", header_line)

    frames, truth_r, truth_g = [], [], []
    last_t = -math.inf
    for lineno, row in rows[1:]:
        row = [c.strip() for c in row]
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
        get = lambda name: row[col[name]]
        t, wx, wy, wz = _floats([get("t"), get("wx"), get("wy"), get("wz")], lineno)
        try:
            n = int(get("n"))
        except ValueError:
            raise ParseError(f"bad direction count {get('n')!r}", lineno) from None
        if n < 2:
            raise ParseError(f"need at least 2 directions, got {n}", lineno)
        s, b, w = [], [], []
        for i in range(1, n + 1):
            names = [f"s{i}x", f"s{i}y", f"s{i}z", f"b{i}x", f"b{i}y", f"b{i}z", f"w{i}"]
            missing = [c for c in names if c not in col]
            if missing:
                raise ParseError(f"missing column {missing[0]!r} for n={n}", lineno)
            vals = _floats([get(c) for c in names], lineno)
            s.append(vals[0:3])
            b.append(vals[3:6])
            w.append(vals[6])
        if not t > last_t:
            raise NonMonotoneTime(f"timestamp {t!r} not after {last_t!r}", lineno)
        last_t = t
        try:
            frames.append(MeasurementFrame(t, [wx, wy, wz], s, b, w))
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        cells = [get(c) for c in TRUTH_COLUMNS] if has_truth_cols else [""] * 12
        if all(c == "" for c in cells):
            truth_r.append(np.full((3, 3), np.nan))
            truth_g.append(np.full(3, np.nan))
        elif any(c == "" for c in cells):
            raise ParseError("partial truth columns", lineno)
        else:
            vals = _floats(cells, lineno)
            truth_r.append(np.reshape(vals[:9], (3, 3)))
            truth_g.append(vals[9:])
    return ReplayLog(frames, np.array(truth_r), np.array(truth_g))


def run_replay(log, gains, initial_state, h=None, certificate=None):
    """Run the observer on a recorded log, holding each frame until the next one.

    ``h`` defaults to the first measurement period. Error columns are filled
    only at samples that coincide with a frame carrying truth.
    """
    times = log.times
    if len(times) < 2:
        raise ParseError("replay needs at least two frames")
    h = float(times[1] - times[0]) if h is None else float(h)
    tol = 1e-9 * max(h, 1e-12)
    frames = log.frames

    def frame_fn(tau):
        k = int(np.searchsorted(times, tau + tol, side="right")) - 1
        return frames[max(k, 0)]

    t0 = float(times[0])
    n_steps = int(math.floor((times[-1] - t0) / h + 1e-9))
    integ = integrate(initial_state, frame_fn, gains, t0, h, n_steps)

    idx = np.searchsorted(times, integ.t + tol, side="right") - 1
    idx = np.clip(idx, 0, len(times) - 1)
    aligned = np.abs(times[idx] - integ.t) <= tol
    ok = aligned & log.has_truth[idx]
    g = np.array([frames[k].g_matrix() for k in idx])
    if not np.any(ok):
        return _assemble(integ, None, None, g, certificate)
    truth_r = np.where(ok[:, None, None], log.truth_r[idx], np.eye(3))
    truth_g = np.where(ok[:, None], log.truth_gamma[idx], 0.0)
    return _assemble(integ, truth_r, truth_g, g, certificate, valid=ok)
