"""Exponential-stability certificate for the observer with moving references.

Given spectral constants ``c1 <= c2`` of G(t), a bound ``d`` on ``||dG/dt||``,
a rate bound ``B_Omega``, a bias bound ``B_gamma`` and ``a`` in ``(0, 1/2)``,
:func:`build_certificate` checks the gain conditions and forms the quadratic
bounds. It returns the constants ``beta`` and ``sigma`` of the envelope
``||z(t)|| <= beta ||z(0)|| exp(-sigma t / 2)`` with ``z = (||E_R||, ||e_gamma||)``.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np

from .errors import InfeasibleGains, InvalidCertificate
from .linalg import eigvalsh2
from .observer import ObserverGains
from .so3 import psi, vee

__all__ = [
    "ProblemConstants",
    "Condition",
    "GainCertificate",
    "LyapunovSample",
    "RoaResult",
    "mu_terms",
    "mu_bound",
    "build_certificate",
    "roa_check",
    "roa_er2_bound",
    "ROA_ER2_SUPREMUM",
    "envelope",
    "lyapunov_sample",
    "quad_form",
    "auto_gains",
    "sigma_sweep",
]

DEFAULT_MU_FRACTION = 0.9
# sup over a in (0, 1/2), 0 < c1 <= c2, k_gamma > 0 of (8 / c2)(a c1 - B^2 / k_gamma)
ROA_ER2_SUPREMUM = 4.0


@dataclass(frozen=True)
class ProblemConstants:
    c1: float
    c2: float
    d: float
    b_omega: float
    b_gamma: float
    a: float

    def __post_init__(self):
        for name in ("c1", "c2", "d", "b_omega", "b_gamma", "a"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not 0.0 < self.c1 <= self.c2:
            raise ValueError(f"need 0 < c1 <= c2, got c1={self.c1}, c2={self.c2}")
        if self.d < 0.0 or self.b_omega < 0.0 or self.b_gamma < 0.0:
            raise ValueError("d, b_omega and b_gamma must be nonnegative")
        if not 0.0 < self.a < 0.5:
            raise ValueError(f"need 0 < a < 1/2, got {self.a}")


@dataclass(frozen=True)
class Condition:
    name: str
    lhs: float
    rhs: float
    passed: bool

    @property
    def margin(self):
        return self.lhs - self.rhs


@dataclass
class GainCertificate:
    gains: ObserverGains
    consts: ProblemConstants
    mu: float
    mu_bound: float
    mu_fraction: float
    m1: np.ndarray
    m2: np.ndarray
    m3: np.ndarray
    beta: float
    sigma: float
    valid: bool
    failure_reasons: List[str] = field(default_factory=list)
    conditions: List[Condition] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def to_dict(self):
        def num(x):
            x = float(x)
            return None if math.isnan(x) else x

        return {
            "valid": bool(self.valid),
            "gains": {"k_r": float(self.gains.k_r), "k_gamma": float(self.gains.k_gamma)},
            "constants": asdict(self.consts),
            "mu": num(self.mu),
            "mu_bound": num(self.mu_bound),
            "mu_fraction": float(self.mu_fraction),
            "m1": np.asarray(self.m1).tolist(),
            "m2": np.asarray(self.m2).tolist(),
            "m3": np.asarray(self.m3).tolist(),
            "beta": num(self.beta),
            "sigma": num(self.sigma),
            "conditions": [
                {
                    "name": c.name,
                    "lhs": num(c.lhs),
                    "rhs": num(c.rhs),
                    "margin": num(c.margin),
                    "passed": bool(c.passed),
                }
                for c in self.conditions
            ],
            "failure_reasons": list(self.failure_reasons),
            "notes": list(self.notes),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def report(self):
        """Human-readable listing of every constant, matrix and condition.

        Numbers are printed with ``repr`` so they match the JSON record exactly.
        """
        k = self.consts
        lines = [
            "gain certificate",
            f"  k_r = {self.gains.k_r!r}  k_gamma = {self.gains.k_gamma!r}",
            f"  c1 = {k.c1!r}  c2 = {k.c2!r}  d = {k.d!r}",
            f"  b_omega = {k.b_omega!r}  b_gamma = {k.b_gamma!r}  a = {k.a!r}",
            f"  mu_bound = {float(self.mu_bound)!r}  mu_fraction = {self.mu_fraction!r}"
            f"  mu = {float(self.mu)!r}",
        ]
        for name in ("m1", "m2", "m3"):
            m = np.asarray(getattr(self, name)).tolist()
            lines.append(f"  {name} = {m!r}")
        lines.append(f"  beta = {float(self.beta)!r}  sigma = {float(self.sigma)!r}")
        for c in self.conditions:
            status = "PASS" if c.passed else "FAIL"
            lines.append(
                f"  [{status}] {c.name}: {c.lhs!r} vs {c.rhs!r} (margin {c.margin!r})"
            )
        for note in self.notes:
            lines.append(f"  note: {note}")
        lines.append(f"  valid = {self.valid}")
        return "\n".join(lines)


def mu_terms(consts, gains):
    """The three quantities whose minimum bounds ``mu`` from above."""
    c1, c2, d, a = consts.c1, consts.c2, consts.d, consts.a
    kr, kg = gains.k_r, gains.k_gamma
    slack = (1.0 - a) * c1**2 * kr - d
    # round-off guard so that k_r = d / (c1^2 (1 - a)) counts as infeasible
    if abs(slack) <= 1e-12 * max(d, (1.0 - a) * c1**2 * kr, 1.0):
        slack = 0.0
    t1 = math.sqrt(c1 / (4.0 * kg)) if kg > 0 else math.inf
    t2 = slack / (2.0 * c2 * kg) if kg > 0 else math.copysign(math.inf, slack)
    den = (c2 * kr + 0.5 * consts.b_omega) ** 2 + c2 * kr * (1.0 - 2.0 * a)
    t3 = 0.5 * (1.0 - 2.0 * a) * slack / den if den > 0 else math.copysign(math.inf, slack)
    if slack == 0.0:
        t2 = t3 = 0.0
    return t1, t2, t3


def mu_bound(consts, gains):
    bound = min(mu_terms(consts, gains))
    if not bound > 0.0:
        raise InfeasibleGains(
            f"mu bound {bound:.6g} <= 0; need k_r > d/(c1^2 (1 - a))"
            f" = {consts.d / (consts.c1**2 * (1.0 - consts.a)):.6g}"
        )
    return bound


def _matrices(consts, gains, mu):
    c1, c2, d, a = consts.c1, consts.c2, consts.d, consts.a
    kr, kg = gains.k_r, gains.k_gamma
    inv2kg = 1.0 / (2.0 * kg) if kg > 0 else math.inf
    off = math.sqrt(2.0) / 2.0 * mu
    m1 = np.array([[c1 / 4.0, -off], [-off, inv2kg]])
    m2 = np.array([[c2 / 4.0, off], [off, inv2kg]])
    m3_off = -mu * math.sqrt(2.0) * (c2 * kr + consts.b_omega / 2.0)
    m3 = np.array(
        [
            [0.5 * ((1.0 - a) * c1**2 * kr - d) - mu * c2 * kg, m3_off],
            [m3_off, 2.0 * mu * (1.0 - 2.0 * a)],
        ]
    )
    return m1, m2, m3


def build_certificate(consts, gains, mu_fraction=DEFAULT_MU_FRACTION):
    """Check every gain condition and assemble the certificate.

    ``mu`` is ``mu_fraction`` times the strict upper bound. Failed conditions
    are reported in ``failure_reasons``; nothing is raised for them.
    """
    if not 0.0 < mu_fraction < 1.0:
        raise ValueError("mu_fraction must lie in (0, 1)")
    c1, kr, kg = consts.c1, gains.k_r, gains.k_gamma
    conds = [
        Condition("k_r > 2 d / c1^2", kr, 2.0 * consts.d / c1**2, kr > 2.0 * consts.d / c1**2),
        Condition(
            "k_gamma > b_gamma^2 / (a c1)",
            kg,
            consts.b_gamma**2 / (consts.a * c1),
            kg > consts.b_gamma**2 / (consts.a * c1),
        ),
    ]
    bound = min(mu_terms(consts, gains))
    feasible = bound > 0.0 and math.isfinite(bound)
    mu = mu_fraction * bound if feasible else float("nan")
    conds.append(Condition("mu bound > 0", bound, 0.0, feasible))

    nan2 = np.full((2, 2), np.nan)
    m1 = m2 = m3 = nan2
    beta = sigma = float("nan")
    if mu > 0.0:
        m1, m2, m3 = _matrices(consts, gains, mu)
        l1 = eigvalsh2(m1)
        l2 = eigvalsh2(m2)
        l3 = eigvalsh2(m3)
        conds.append(Condition("lambda_min(M1) > 0", float(l1[0]), 0.0, bool(l1[0] > 0.0)))
        conds.append(Condition("lambda_min(M3) > 0", float(l3[0]), 0.0, bool(l3[0] > 0.0)))
        if l1[0] > 0.0 and l3[0] > 0.0:
            beta = math.sqrt(l2[1] / l1[0])
            sigma = float(l3[0] / l2[1])
    else:
        conds.append(Condition("lambda_min(M1) > 0", float("nan"), 0.0, False))
        conds.append(Condition("lambda_min(M3) > 0", float("nan"), 0.0, False))

    failures = [f"{c.name} violated ({c.lhs:.6g} vs {c.rhs:.6g})" for c in conds if not c.passed]
    return GainCertificate(
        gains=gains,
        consts=consts,
        mu=mu,
        mu_bound=bound,
        mu_fraction=mu_fraction,
        m1=m1,
        m2=m2,
        m3=m3,
        beta=beta,
        sigma=sigma,
        valid=not failures,
        failure_reasons=failures,
        conditions=conds,
    )


@dataclass(frozen=True)
class RoaResult:
    """Outcome of the initial-condition test; truthy when the start is certified.

    ``psi_bound`` is ``2 (a c1 - B_gamma^2 / k_gamma)``, the bias-free bound on
    ``Psi(Rbar(0), 0)``. ``er2_bound`` is ``(8 / c2)(a c1 - B_gamma^2 / k_gamma)``,
    the bound on ``||E_R(0)||^2``. ``max_angle`` (rad) is the attitude error
    that ``er2_bound`` permits.
    """

    inside: bool
    value: float
    limit: float
    psi_bound: float
    er2_bound: float
    max_angle: float

    def __bool__(self):
        return self.inside


def roa_er2_bound(a, c1, c2, b_gamma, k_gamma):
    return 8.0 / c2 * (a * c1 - b_gamma**2 / k_gamma)


def _angle_for_er2(er2):
    # ||E_R||^2 = 4 (1 - cos theta)
    if er2 <= 0.0:
        return 0.0
    return math.acos(max(-1.0, 1.0 - er2 / 4.0))


def roa_check(consts, gains, psi0, e_gamma0_norm):
    """Test ``Psi(0) + ||e_gamma(0)||^2 / (2 k_gamma) <= 2 a c1``."""
    if psi0 < 0.0:
        raise ValueError("psi0 must be nonnegative")
    kg = gains.k_gamma
    value = psi0 + (e_gamma0_norm**2 / (2.0 * kg) if kg > 0 else (0.0 if e_gamma0_norm == 0 else math.inf))
    limit = 2.0 * consts.a * consts.c1
    slack = consts.a * consts.c1 - (consts.b_gamma**2 / kg if kg > 0 else math.inf)
    er2 = 8.0 / consts.c2 * slack
    return RoaResult(
        inside=bool(value <= limit),
        value=float(value),
        limit=limit,
        psi_bound=2.0 * slack,
        er2_bound=er2,
        max_angle=_angle_for_er2(er2),
    )


def envelope(cert, z0_norm, t):
    """``beta ||z(0)|| exp(-sigma t / 2)``."""
    if not cert.valid:
        raise InvalidCertificate("; ".join(cert.failure_reasons) or "certificate not valid")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("t must be nonnegative")
    return cert.beta * z0_norm * np.exp(-0.5 * cert.sigma * t)


@dataclass(frozen=True)
class LyapunovSample:
    t: np.ndarray
    v0: np.ndarray
    v: np.ndarray
    z_norm: np.ndarray
    envelope: np.ndarray
    psi: np.ndarray = None
    er_norm: np.ndarray = None
    egamma_norm: np.ndarray = None


def lyapunov_sample(consts, gains, mu, g, r, r_bar, gamma, gamma_bar, t, cert=None, z0_norm=None):
    """Evaluate ``V0 = Psi + |e_gamma|^2 / (2 k_gamma)`` and ``V = V0 + mu (R e_gamma) . (Q - Q^T)^vee``.

    Here ``Q = R Rbar^T``. Everything broadcasts over leading axes. The envelope
    entry is NaN unless a valid ``cert`` and ``z0_norm`` are given.
    """
    r = np.asarray(r, dtype=float)
    r_bar = np.asarray(r_bar, dtype=float)
    e_g = np.asarray(gamma, dtype=float) - np.asarray(gamma_bar, dtype=float)
    ps = psi(g, r, r_bar)
    eg2 = np.sum(e_g * e_g, axis=-1)
    kg = gains.k_gamma
    v0 = ps + (eg2 / (2.0 * kg) if kg > 0 else np.where(eg2 > 0, np.inf, 0.0))
    q = r @ np.swapaxes(r_bar, -1, -2)
    w = vee(q - np.swapaxes(q, -1, -2), check=False)
    reg = np.einsum("...ij,...j->...i", r, e_g)
    v = v0 + mu * np.sum(reg * w, axis=-1)
    er = np.linalg.norm(r - r_bar, axis=(-2, -1))
    egn = np.sqrt(eg2)
    zn = np.hypot(er, egn)
    t = np.asarray(t, dtype=float)
    if cert is not None and cert.valid and z0_norm is not None:
        env = envelope(cert, z0_norm, t) * np.ones_like(zn)
    else:
        env = np.full(np.shape(zn), np.nan)
    return LyapunovSample(t=t, v0=v0, v=v, z_norm=zn, envelope=env, psi=ps, er_norm=er, egamma_norm=egn)


def quad_form(m, z):
    """``z^T m z`` for 2-vectors ``z = (||E_R||, ||e_gamma||)`` stacked on the last axis."""
    z = np.asarray(z, dtype=float)
    return np.einsum("...i,ij,...j->...", z, np.asarray(m), z)


def auto_gains(spectral, b_gamma, epsilon=0.9, a=None):
    """Gain rule ``k_R = 2d / (c1^2 eps)``, ``k_gamma = B_gamma^2 / (a c1 eps)``, ``a = eps/2``.

    Returns ``(gains, a)``.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    a = 0.5 * epsilon if a is None else a
    c1, d = spectral.c1, spectral.d
    k_r = 2.0 * d / (c1**2 * epsilon)
    k_gamma = b_gamma**2 / (a * c1 * epsilon)
    return ObserverGains(k_r, k_gamma), a


def sigma_sweep(consts, k_r_values, k_gamma_values, mu_fraction=DEFAULT_MU_FRACTION):
    """Grid of ``sigma`` over gain pairs; NaN where the certificate is invalid."""
    out = np.full((len(k_r_values), len(k_gamma_values)), np.nan)
    for i, kr in enumerate(k_r_values):
        for j, kg in enumerate(k_gamma_values):
            cert = build_certificate(consts, ObserverGains(kr, kg), mu_fraction)
            if cert.valid:
                out[i, j] = cert.sigma
    return out
