"""Weighted reference directions, the matrix G(t) and its spectral constants."""

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NonUnitDirection, RankDeficient
from .linalg import eigvalsh3, sym_spectral_norm3
from .so3 import UNIT_TOL, exp_so3

__all__ = [
    "ReferenceDirection",
    "ReferenceSet",
    "SpectralBounds",
    "FixedDirection",
    "LandmarkDirection",
    "RotatingDirection",
    "LinearPath",
    "WaypointPath",
    "g_matrix",
    "spectral_bounds",
    "directions_at",
]


class FixedDirection:
    def __init__(self, vector):
        v = np.asarray(vector, dtype=float)
        self.vector = v / np.linalg.norm(v)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(self.vector, t.shape + (3,)).copy()

    def __repr__(self):
        return f"FixedDirection({self.vector.tolist()})"


class LinearPath:
    """Observer position ``origin + velocity * t``."""

    def __init__(self, origin, velocity):
        self.origin = np.asarray(origin, dtype=float)
        self.velocity = np.asarray(velocity, dtype=float)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.origin + t[..., None] * self.velocity


class WaypointPath:
    """Piecewise-linear observer position through ``(time, position)`` waypoints.

    Held constant before the first and after the last waypoint.
    """

    def __init__(self, times, positions):
        self.times = np.asarray(times, dtype=float)
        self.positions = np.asarray(positions, dtype=float)
        if self.times.ndim != 1 or self.positions.shape != (self.times.size, 3):
            raise ValueError("waypoints need times (k,) and positions (k, 3)")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("waypoint times must be strictly increasing")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack(
            [np.interp(t, self.times, self.positions[:, k]) for k in range(3)], axis=-1
        )


class LandmarkDirection:
    """Unit line of sight from a moving observer to a fixed landmark."""

    def __init__(self, landmark, path):
        self.landmark = np.asarray(landmark, dtype=float)
        self.path = path

    def __call__(self, t):
        d = self.landmark - self.path(t)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)


class RotatingDirection:
    """Direction ``exp(t * hat(rate)) s0``, rotating at a constant angular rate."""

    def __init__(self, initial, rate):
        v = np.asarray(initial, dtype=float)
        self.initial = v / np.linalg.norm(v)
        self.rate = np.asarray(rate, dtype=float)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        rot = exp_so3(t[..., None] * self.rate)
        return rot @ self.initial


def _evaluate(fn, t):
    t = np.asarray(t, dtype=float)
    try:
        out = np.asarray(fn(t), dtype=float)
    except (TypeError, ValueError):
        # functions written for scalar time only
        out = None
    if out is None or out.shape != t.shape + (3,):
        out = np.array([fn(float(ti)) for ti in t.ravel()], dtype=float).reshape(t.shape + (3,))
    return out


@dataclass(frozen=True)
class ReferenceDirection:
    weight: float
    direction_fn: Callable

    def __post_init__(self):
        if not self.weight > 0.0:
            raise ValueError(f"weight must be positive, got {self.weight}")


@dataclass(frozen=True)
class ReferenceSet:
    directions: Sequence[ReferenceDirection]

    def __post_init__(self):
        if len(self.directions) < 2:
            raise RankDeficient(
                f"{len(self.directions)} direction(s) cannot give rank(G) >= 2"
            )

    @property
    def weights(self):
        return np.array([d.weight for d in self.directions])

    def __len__(self):
        return len(self.directions)


@dataclass(frozen=True)
class SpectralBounds:
    """Grid estimates of the constants; exact only at the sample times."""

    c1: float
    c2: float
    d: float
    sample_times: np.ndarray = field(repr=False)
    grid_step: float
    lambda2_min: float = float("nan")
    d_frobenius: float = float("nan")


def directions_at(refs, t):
    """Directions ``s_i(t)`` stacked as ``(..., n, 3)``, checked for unit norm."""
    s = np.stack([_evaluate(d.direction_fn, t) for d in refs.directions], axis=-2)
    dev = np.abs(np.linalg.norm(s, axis=-1) - 1.0)
    if np.any(dev > UNIT_TOL):
        raise NonUnitDirection(f"reference direction off unit norm by {np.max(dev):.3e}")
    return s


def g_matrix(refs, t):
    """``G(t) = sum_i w_i s_i(t) s_i(t)^T``; vectorized over array ``t``."""
    s = directions_at(refs, t)
    return np.einsum("n,...ni,...nj->...ij", refs.weights, s, s)


def spectral_bounds(refs, t0, t1, step):
    """Estimate ``c1``, ``c2`` and ``d`` on the grid ``t0, t0 + step, ..., t1``.

    ``c1 = min(l1 + l2)`` and ``c2 = max(l2 + l3)``, with eigenvalues ascending.
    ``d`` is the largest operator 2-norm of ``dG/dt``, where the derivative is
    the central difference ``(G(t_k+1) - G(t_k)) / step`` at each midpoint.
    """
    if not t1 > t0:
        raise ValueError("need t1 > t0")
    if not step > 0.0:
        raise ValueError("need step > 0")
    n = int(np.floor((t1 - t0) / step + 1e-9)) + 1
    ts = t0 + step * np.arange(n)
    if ts[-1] < t1 - 1e-12:
        ts = np.append(ts, t1)
    g = g_matrix(refs, ts)
    lam = eigvalsh3(g)
    l2_min = float(lam[:, 1].min())
    if l2_min < 1e-9:
        k = int(np.argmin(lam[:, 1]))
        raise RankDeficient(f"second eigenvalue of G is {l2_min:.3e} at t = {ts[k]:.6g}")
    dg = np.diff(g, axis=0) / np.diff(ts)[:, None, None]
    if dg.shape[0]:
        d = float(sym_spectral_norm3(dg).max())
        d_fro = float(np.linalg.norm(dg, axis=(-2, -1)).max())
    else:
        d = d_fro = 0.0
    return SpectralBounds(
        c1=float((lam[:, 0] + lam[:, 1]).min()),
        c2=float((lam[:, 1] + lam[:, 2]).max()),
        d=d,
        sample_times=ts,
        grid_step=float(step),
        lambda2_min=l2_min,
        d_frobenius=d_fro,
    )
