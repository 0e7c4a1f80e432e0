"""Attitude and gyro-bias observer on SO(3) and its Lie-group integrator.

The continuous observer is::

    dRbar/dt     = Rbar hat(Omega_z - gamma_bar - k_R e_R)
    dgamma_bar/dt = k_gamma e_R,      e_R = sum_i w_i (Rbar^T s_i) x b_i

:func:`step` advances it with a fourth-order Runge-Kutta-Munthe-Kaas scheme.
The rotation is updated as ``Rbar <- Rbar exp(Theta)``, with the increment
``Theta`` integrated in the Lie algebra, so ``Rbar`` stays on SO(3) up to
the round-off of one exponential per step.
"""

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, NonUnitDirection, StepTooLarge
from .so3 import ORTHO_TOL, UNIT_TOL, as_rotation, cross, exp_so3, ortho_residual, project_to_so3

__all__ = [
    "ObserverState",
    "ObserverGains",
    "MeasurementFrame",
    "Integration",
    "observer_rates",
    "step",
    "integrate",
    "error_state",
]

STEP_FAIL_TOL = 1e-6

# classical RK4 tableau
_C = (0.0, 0.5, 0.5, 1.0)
_B = (1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0)


@dataclass(frozen=True)
class ObserverState:
    r_bar: np.ndarray
    gamma_bar: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r_bar", as_rotation(self.r_bar))
        object.__setattr__(self, "gamma_bar", np.asarray(self.gamma_bar, dtype=float).reshape(3))


@dataclass(frozen=True)
class ObserverGains:
    k_r: float
    k_gamma: float

    def __post_init__(self):
        # zero is allowed so that gains can be switched off in experiments
        if self.k_r < 0.0 or self.k_gamma < 0.0:
            raise ValueError(f"gains must be nonnegative, got {self.k_r}, {self.k_gamma}")


@dataclass(frozen=True)
class MeasurementFrame:
    """Gyro reading and ``n >= 2`` direction pairs at time ``t``.

    ``s`` holds inertial reference directions and ``b`` the body-frame
    measurements, both ``(n, 3)``; ``w`` holds the weights.
    """

    t: float
    omega_z: np.ndarray
    s: np.ndarray
    b: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega_z, dtype=float).reshape(3)
        s = np.atleast_2d(np.asarray(self.s, dtype=float))
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        if s.shape != b.shape or s.shape[-1] != 3 or w.shape != (s.shape[0],):
            raise LengthMismatch(f"s {s.shape}, b {b.shape}, w {w.shape}")
        if s.shape[0] < 2:
            raise LengthMismatch("a frame needs at least two direction pairs")
        for name, dirs in (("s", s), ("b", b)):
            dev = np.abs(np.linalg.norm(dirs, axis=-1) - 1.0)
            if np.any(dev > UNIT_TOL):
                raise NonUnitDirection(f"{name} off unit norm by {dev.max():.3e} at t={self.t}")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "omega_z", omega)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "w", w)

    @classmethod
    def trusted(cls, t, omega_z, s, b, w):
        """Build a frame from arrays already known to be well formed."""
        frame = object.__new__(cls)
        object.__setattr__(frame, "t", float(t))
        object.__setattr__(frame, "omega_z", omega_z)
        object.__setattr__(frame, "s", s)
        object.__setattr__(frame, "b", b)
        object.__setattr__(frame, "w", w)
        return frame

    @property
    def pairs(self):
        return [(s, b, w) for s, b, w in zip(self.s, self.b, self.w)]

    def g_matrix(self):
        return np.einsum("n,ni,nj->ij", self.w, self.s, self.s)


def _rates(r_bar, gamma_bar, frame, gains):
    e_r = frame.w @ cross(frame.s @ r_bar, frame.b)
    body = frame.omega_z - gamma_bar - gains.k_r * e_r
    return body, gains.k_gamma * e_r, e_r


def observer_rates(state, frame, gains):
    """Return ``(body_rate, bias_rate, e_r)``, with ``dRbar/dt = Rbar hat(body_rate)``."""
    return _rates(state.r_bar, state.gamma_bar, frame, gains)


def _dexpinv_neg(theta, xi):
    # inverse trivialized differential for right-multiplied updates, two
    # commutator terms (the cubic one vanishes), accurate to O(|theta|^4)
    c = cross(theta, xi)
    return xi + 0.5 * c + cross(theta, c) / 12.0


def _rk_step(r_bar, gamma_bar, frame_fn, gains, t, h, t_next=None):
    t_next = t + h if t_next is None else t_next
    t_mid = t + 0.5 * h
    stage_t = (t, t_mid, t_mid, t_next)
    ks, ls = [], []
    for i, ci in enumerate(_C):
        if i == 0:
            theta = np.zeros(3)
            r_i, g_i = r_bar, gamma_bar
        else:
            theta = h * ci * ks[-1]
            r_i = r_bar @ exp_so3(theta)
            g_i = gamma_bar + h * ci * ls[-1]
        body, bias_rate, _ = _rates(r_i, g_i, frame_fn(stage_t[i]), gains)
        ks.append(_dexpinv_neg(theta, body))
        ls.append(bias_rate)
    theta = h * sum(b * k for b, k in zip(_B, ks))
    r_new = r_bar @ exp_so3(theta)
    g_new = gamma_bar + h * sum(b * l for b, l in zip(_B, ls))
    return r_new, g_new


def _checked(r_new):
    resid = float(ortho_residual(r_new))
    projected = False
    if not np.isfinite(resid):
        raise StepTooLarge("non-finite state after step")
    if resid > ORTHO_TOL:
        r_new = project_to_so3(r_new)
        projected = True
        after = float(ortho_residual(r_new))
        if not after <= STEP_FAIL_TOL:
            raise StepTooLarge(f"orthonormality residual {after:.3e} after projection")
    return r_new, resid, projected


def step(state, frame_fn, gains, t, h):
    """Advance ``state`` from ``t`` to ``t + h``.

    ``frame_fn(tau)`` must return the :class:`MeasurementFrame` in effect at
    ``tau``; it is queried at ``t``, ``t + h/2`` (twice) and ``t + h``.
    """
    if not h > 0.0:
        raise ValueError("step size must be positive")
    r_new, g_new = _rk_step(state.r_bar, state.gamma_bar, frame_fn, gains, t, h)
    r_new, _, _ = _checked(r_new)
    return ObserverState(r_new, g_new)


@dataclass
class Integration:
    t: np.ndarray
    r_bar: np.ndarray
    gamma_bar: np.ndarray
    ortho_residual: np.ndarray
    projected: np.ndarray


def integrate(state, frame_fn, gains, t0, h, n_steps):
    """Take ``n_steps`` steps of size ``h`` and keep every intermediate state.

    Sample times are ``t0 + k h``, built from the index so no drift accumulates.
    """
    r = np.empty((n_steps + 1, 3, 3))
    g = np.empty((n_steps + 1, 3))
    resid = np.zeros(n_steps + 1)
    proj = np.zeros(n_steps + 1, dtype=bool)
    r[0], g[0] = state.r_bar, state.gamma_bar
    resid[0] = ortho_residual(state.r_bar)
    ts = t0 + h * np.arange(n_steps + 1)
    for k in range(n_steps):
        r_new, g_new = _rk_step(r[k], g[k], frame_fn, gains, ts[k], h, ts[k + 1])
        r[k + 1], resid[k + 1], proj[k + 1] = _checked(r_new)
        g[k + 1] = g_new
    return Integration(ts, r, g, resid, proj)


def error_state(state, truth_r, truth_gamma):
    """``(||R - Rbar||, ||gamma - gamma_bar||)``, Frobenius and Euclidean norms."""
    e_r = np.linalg.norm(np.asarray(truth_r) - state.r_bar)
    e_g = np.linalg.norm(np.asarray(truth_gamma) - state.gamma_bar)
    return float(e_r), float(e_g)
