"""Monte-Carlo checks: random lemma sweeps and random certified scenarios.

Every lemma check returns a margin per sample. Larger than zero means the
inequality (or equality) is violated beyond its tolerance.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .certificate import ProblemConstants, build_certificate, roa_check
from .errors import RankDeficient
from .linalg import eigvalsh3
from .observer import ObserverGains
from .refset import FixedDirection, ReferenceDirection, ReferenceSet, RotatingDirection, spectral_bounds
from .scenario import ScenarioConfig, exponential_product_truth, rate_bound, run
from .so3 import (
    e_r_matrix,
    e_r_measurements,
    exp_so3,
    lemma1_check,
    psi,
    q_inequality_terms,
    random_rotations,
    rotation_angle,
)

__all__ = [
    "LEMMA_TOL",
    "CHECKS",
    "SweepResult",
    "lemma_sweep",
    "random_unit",
    "random_psd_g",
    "fd_derivative",
    "CertifiedScenario",
    "random_certified_scenario",
    "RunChecks",
    "check_certified_run",
]

LEMMA_TOL = 1e-9
CHUNK = 20000

CHECKS = (
    "lemma1",
    "er2",
    "psi_lower",
    "psi_upper",
    "er_lower",
    "er_upper",
    "q_ineq_1",
    "q_ineq_2",
    "q_ineq_3",
    "er_dual_form",
)


def random_unit(rng, shape):
    v = rng.standard_normal(tuple(shape) + (3,))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def random_psd_g(rng, count, n_max=5, min_lambda2=1e-3):
    """Random ``G = sum w_i s_i s_i^T`` with rank >= 2, plus its weights and directions.

    Every sample uses ``n_max`` slots. Slots past a drawn count ``n`` in
    ``[2, n_max]`` get zero weight.
    """
    n = rng.integers(2, n_max + 1, size=count)
    w = rng.uniform(0.1, 3.0, size=(count, n_max)) * (np.arange(n_max) < n[:, None])
    s = random_unit(rng, (count, n_max))
    g = np.einsum("kn,kni,knj->kij", w, s, s)
    # resample the rare near-parallel draws
    bad = eigvalsh3(g)[:, 1] < min_lambda2
    while np.any(bad):
        k = int(bad.sum())
        s[bad] = random_unit(rng, (k, n_max))
        g[bad] = np.einsum("kn,kni,knj->kij", w[bad], s[bad], s[bad])
        bad = eigvalsh3(g)[:, 1] < min_lambda2
    return g, w, s


def _chunk_margins(seed, count, corrupt_e_r_sign=False):
    rng = np.random.default_rng(seed)
    out = {}

    # equality <G(I-Q), I-Q> = 2 (tr G - v^T G v)(1 - cos t) for symmetric G
    a = rng.standard_normal((count, 3, 3)) * rng.uniform(0.1, 5.0, size=(count, 1, 1))
    g_sym = 0.5 * (a + np.swapaxes(a, -1, -2))
    q = random_rotations(rng, count)
    lhs, rhs = lemma1_check(g_sym, q)
    out["lemma1"] = np.abs(lhs - rhs) - LEMMA_TOL * (1.0 + np.abs(lhs))

    er2_q = np.sum((np.eye(3) - q) ** 2, axis=(-2, -1))
    out["er2"] = np.abs(er2_q - 4.0 * (1.0 - np.cos(rotation_angle(q)))) - 1e-10

    g, w, s = random_psd_g(rng, count)
    r = random_rotations(rng, count)
    r_bar = random_rotations(rng, count)
    lam = eigvalsh3(g)
    c1 = lam[:, 0] + lam[:, 1]
    c2 = lam[:, 1] + lam[:, 2]
    er2 = np.sum((r - r_bar) ** 2, axis=(-2, -1))
    ps = psi(g, r, r_bar)
    tol = LEMMA_TOL * (1.0 + ps)
    out["psi_lower"] = 0.25 * c1 * er2 - ps - tol
    out["psi_upper"] = ps - 0.25 * c2 * er2 - tol

    e_mat = e_r_matrix(g, r, r_bar)
    b = np.einsum("kji,knj->kni", r, s)  # b_i = R^T s_i
    e_meas = e_r_measurements(w, s, b, r_bar)
    if corrupt_e_r_sign:
        e_meas = -e_meas
    nrm = np.sum(e_mat * e_mat, axis=-1)
    tol = LEMMA_TOL * (1.0 + nrm)
    out["er_lower"] = 0.5 * c1**2 * (1.0 - er2 / 8.0) * er2 - nrm - tol
    out["er_upper"] = nrm - 0.5 * c2**2 * er2 - tol
    scale = 1.0 + np.linalg.norm(e_mat, axis=-1)
    out["er_dual_form"] = np.max(np.abs(e_mat - e_meas), axis=-1) - 1e-10 * scale

    x = rng.standard_normal((count, 3)) * rng.uniform(0.1, 10.0, size=(count, 1))
    y = rng.standard_normal((count, 3)) * rng.uniform(0.1, 10.0, size=(count, 1))
    q2 = r @ np.swapaxes(r_bar, -1, -2)
    er_norm = np.linalg.norm(np.eye(3) - q2, axis=(-2, -1))
    res = q_inequality_terms(q2, x, y, er_norm)
    nx = np.linalg.norm(x, axis=-1)
    ny = np.linalg.norm(y, axis=-1)
    out["q_ineq_1"] = res.r1 - LEMMA_TOL * (1.0 + nx**2)
    out["q_ineq_2"] = res.r2 - LEMMA_TOL * (1.0 + nx * ny)
    out["q_ineq_3"] = res.r3 - LEMMA_TOL * (1.0 + nx)

    worst = {}
    for name in CHECKS:
        k = int(np.argmax(out[name]))
        sample = {"index": k}
        if name == "lemma1":
            sample.update(g=g_sym[k].tolist(), q=q[k].tolist())
        elif name == "er2":
            sample.update(q=q[k].tolist())
        elif name.startswith("q_ineq"):
            sample.update(q=q2[k].tolist(), x=x[k].tolist(), y=y[k].tolist())
        else:
            sample.update(g=g[k].tolist(), r=r[k].tolist(), r_bar=r_bar[k].tolist())
        worst[name] = (float(out[name][k]), sample)
    return worst


@dataclass
class SweepResult:
    count: int
    seed: int
    worst_margin: dict = field(default_factory=dict)
    worst_sample: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(m <= 0.0 for m in self.worst_margin.values())

    def failures(self):
        return [name for name, m in self.worst_margin.items() if m > 0.0]


def lemma_sweep(seed, count, jobs=1, corrupt_e_r_sign=False):
    """Run every lemma check on ``count`` random samples.

    Samples are drawn in fixed-size chunks with spawned seeds, so the result
    is the same for any ``jobs``.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    sizes = [CHUNK] * (count // CHUNK) + ([count % CHUNK] if count % CHUNK else [])
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    args = [(sq, n, corrupt_e_r_sign) for sq, n in zip(seeds, sizes)]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(_chunk_margins, *zip(*args)))
    else:
        parts = [_chunk_margins(*a) for a in args]
    result = SweepResult(count=count, seed=seed)
    for name in CHECKS:
        m, sample = max((p[name] for p in parts), key=lambda ms: ms[0])
        result.worst_margin[name] = m
        result.worst_sample[name] = sample
    return result


def fd_derivative(y, h):
    """Fourth-order finite-difference derivative of uniformly sampled ``y``.

    Five-point central stencil inside, five-point one-sided stencils at the
    two samples nearest each end.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 5:
        return np.gradient(y, h)
    d = np.empty(n)
    d[2:-2] = (y[:-4] - 8.0 * y[1:-3] + 8.0 * y[3:-1] - y[4:]) / (12.0 * h)
    fwd = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12.0 * h)
    fwd1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / (12.0 * h)
    d[0] = fwd @ y[:5]
    d[1] = fwd1 @ y[:5]
    d[-1] = -(fwd @ y[::-1][:5])
    d[-2] = -(fwd1 @ y[::-1][:5])
    return d


@dataclass
class CertifiedScenario:
    config: ScenarioConfig
    gains: ObserverGains
    consts: ProblemConstants
    certificate: object
    kind: str


def random_certified_scenario(rng, kind="constant", duration=8.0, h=5e-3, grid_step=1e-3,
                              max_tries=200):
    """Draw a scenario with a valid certificate and a start inside the certified set.

    ``kind`` is ``"constant"`` (fixed references) or ``"slow"`` (each
    reference rotating at up to 0.3 rad/s). The constants are grid estimates,
    padded slightly because a grid can miss the true extremum.
    """
    for _ in range(max_tries):
        n = int(rng.integers(2, 4))
        dirs0 = random_unit(rng, (n,))
        weights = rng.uniform(0.5, 2.0, size=n)
        if kind == "constant":
            fns = [FixedDirection(v) for v in dirs0]
        elif kind == "slow":
            rates = random_unit(rng, (n,)) * rng.uniform(0.02, 0.3, size=(n, 1))
            fns = [RotatingDirection(v, wr) for v, wr in zip(dirs0, rates)]
        else:
            raise ValueError(f"unknown scenario kind {kind!r}")
        refs = ReferenceSet([ReferenceDirection(w, f) for w, f in zip(weights, fns)])
        try:
            sb = spectral_bounds(refs, 0.0, duration, grid_step)
        except RankDeficient:
            continue
        if sb.lambda2_min < 0.2:
            continue

        body_rates = random_unit(rng, (2,)) * rng.uniform(0.0, 1.0, size=(2, 1))
        gamma = random_unit(rng, ()) * rng.uniform(0.1, 1.0)
        truth = exponential_product_truth(body_rates, gamma, r0=random_rotations(rng))

        c1, c2 = 0.999 * sb.c1, 1.001 * sb.c2
        d = 1.01 * sb.d + 1e-9 if sb.d > 0 else 0.0
        b_omega = 1.01 * rate_bound(truth, 0.0, duration, grid_step)
        a = float(rng.uniform(0.2, 0.45))
        b_gamma = float(np.linalg.norm(gamma))
        consts = ProblemConstants(c1, c2, d, b_omega, b_gamma, a)
        k_r = float(rng.uniform(1.5, 4.0) * max(2.0 * d / c1**2, 0.5))
        k_gamma = float(rng.uniform(1.2, 3.0) * b_gamma**2 / (a * c1))
        gains = ObserverGains(k_r, k_gamma)
        cert = build_certificate(consts, gains)
        if not cert.valid:
            continue

        # split a fraction of the 2 a c1 budget between attitude and bias error
        budget = float(rng.uniform(0.1, 0.95)) * 2.0 * a * c1
        share = float(rng.uniform(0.05, 0.95))
        r0 = truth.attitude_fn(0.0)
        g0 = np.einsum("n,ni,nj->ij", weights, np.array([f(0.0) for f in fns]),
                       np.array([f(0.0) for f in fns]))
        u = random_unit(rng, ())
        spread = np.trace(g0) - u @ g0 @ u
        one_minus_cos = min(share * budget / spread, 2.0)
        angle = math.acos(1.0 - one_minus_cos)
        r_bar0 = exp_so3(angle * u).T @ r0  # Q = R Rbar^T = exp(angle u)
        e_g0 = random_unit(rng, ()) * math.sqrt(2.0 * k_gamma * (1.0 - share) * budget)
        config = ScenarioConfig(truth, refs, duration, h, r_bar0, gamma - e_g0)
        psi0 = float(psi(g0, r0, r_bar0))
        if not roa_check(consts, gains, psi0, float(np.linalg.norm(e_g0))):
            continue
        return CertifiedScenario(config, gains, consts, cert, kind)
    raise RuntimeError("could not draw a certified scenario")


@dataclass
class RunChecks:
    envelope_margin: float
    v_rate_margin: float
    v0_rate_margin: float
    domain_margin: float

    def passed(self, tol=1e-6):
        return (
            self.envelope_margin <= tol
            and self.v_rate_margin <= tol
            and self.v0_rate_margin <= tol
            and self.domain_margin < 0.0
        )


def check_certified_run(scn, trace=None):
    """Worst margins of the envelope, ``dV/dt + sigma V``, ``dV0/dt`` and ``V0 - 2 a c1``."""
    if trace is None:
        trace = run(scn.config, scn.gains, scn.certificate)
    h = scn.config.observer_h
    cert = scn.certificate
    dv = fd_derivative(trace.v, h)
    dv0 = fd_derivative(trace.v0, h)
    return RunChecks(
        envelope_margin=float(np.max(trace.z_norm - trace.envelope)),
        v_rate_margin=float(np.max(dv + cert.sigma * trace.v)),
        v0_rate_margin=float(np.max(dv0)),
        domain_margin=float(np.max(trace.v0) - 2.0 * scn.consts.a * scn.consts.c1),
    )
