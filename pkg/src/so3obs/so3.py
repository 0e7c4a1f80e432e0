"""Rotation-group algebra on SO(3) and the error quantities built on it.

Vectors are arrays of shape ``(..., 3)`` and matrices ``(..., 3, 3)``; all
functions broadcast over leading axes unless noted otherwise. Rotations are
plain ``ndarray`` values. :func:`as_rotation` validates and
:func:`project_to_so3` repairs drift.

Conventions: ``hat(x) @ y == cross(x, y)`` and ``exp_so3(theta * v)`` is the
rotation by ``theta`` about ``v`` (Rodrigues).
"""

import math
from typing import NamedTuple

import numpy as np

from .errors import AsymmetricG, LengthMismatch, NonSkewInput, NonUnitDirection, NotARotation

ORTHO_TOL = 1e-9
SKEW_TOL = 1e-6
UNIT_TOL = 1e-6
SMALL_ANGLE = 1e-6

__all__ = [
    "AngleAxis",
    "QResiduals",
    "cross",
    "hat",
    "vee",
    "exp_so3",
    "log_so3",
    "rotation_angle",
    "inner",
    "ortho_residual",
    "as_rotation",
    "project_to_so3",
    "random_rotations",
    "lemma1_check",
    "psi",
    "e_r_matrix",
    "e_r_measurements",
    "q_inequality_terms",
]


class AngleAxis(NamedTuple):
    theta: np.ndarray
    axis: np.ndarray


class QResiduals(NamedTuple):
    """Residuals of the three relative-attitude inequalities; each must be <= 0."""

    r1: np.ndarray
    r2: np.ndarray
    r3: np.ndarray


def cross(a, b):
    """Cross product on the last axis; cheaper than ``np.cross`` for small arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def hat(v):
    v = np.asarray(v, dtype=float)
    if v.shape == (3,):
        x, y, z = v.tolist()
        return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    o = np.zeros_like(x)
    return np.stack(
        [
            np.stack([o, -z, y], axis=-1),
            np.stack([z, o, -x], axis=-1),
            np.stack([-y, x, o], axis=-1),
        ],
        axis=-2,
    )


def vee(m, check=True):
    """Inverse of :func:`hat`; reads the antisymmetric part of ``m``.

    Raises :class:`NonSkewInput` when ``||m + m^T|| > 1e-6`` and ``check`` is set.
    """
    m = np.asarray(m, dtype=float)
    if check:
        resid = np.linalg.norm(m + np.swapaxes(m, -1, -2), axis=(-2, -1))
        if np.any(resid > SKEW_TOL):
            raise NonSkewInput(f"symmetry residual {np.max(resid):.3e} exceeds {SKEW_TOL}")
    return 0.5 * np.stack(
        [m[..., 2, 1] - m[..., 1, 2], m[..., 0, 2] - m[..., 2, 0], m[..., 1, 0] - m[..., 0, 1]],
        axis=-1,
    )


def _rodrigues_coeffs(theta):
    t2 = theta * theta
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - t2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - t2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    return a, b


def _exp_single(x, y, z):
    t2 = x * x + y * y + z * z
    t = math.sqrt(t2)
    if t < SMALL_ANGLE:
        a, b = 1.0 - t2 / 6.0, 0.5 - t2 / 24.0
    else:
        a, b = math.sin(t) / t, (1.0 - math.cos(t)) / t2
    # I + a K + b K^2 with K^2 = v v^T - |v|^2 I
    bxy, bxz, byz = b * x * y, b * x * z, b * y * z
    return np.array(
        [
            [1.0 + b * (x * x - t2), bxy - a * z, bxz + a * y],
            [bxy + a * z, 1.0 + b * (y * y - t2), byz - a * x],
            [bxz - a * y, byz + a * x, 1.0 + b * (z * z - t2)],
        ]
    )


def exp_so3(v):
    """Rotation matrix ``I + sin(t) K + (1 - cos(t)) K^2`` with ``t = |v|``, ``K = hat(v / t)``."""
    v = np.asarray(v, dtype=float)
    if v.shape == (3,):
        return _exp_single(*v.tolist())
    theta = np.linalg.norm(v, axis=-1)
    a, b = _rodrigues_coeffs(theta)
    k = hat(v)
    return np.eye(3) + a[..., None, None] * k + b[..., None, None] * (k @ k)


def rotation_angle(r):
    """Rotation angle in ``[0, pi]``, via atan2 so it stays accurate near 0 and pi."""
    r = np.asarray(r, dtype=float)
    s = np.linalg.norm(vee(r, check=False), axis=-1)
    c = 0.5 * (np.trace(r, axis1=-2, axis2=-1) - 1.0)
    return np.arctan2(s, c)


def _canonical_sign(v):
    # first component whose magnitude is not negligible is made positive
    nz = np.abs(v) > 1e-12
    first = np.argmax(nz, axis=-1)
    lead = np.take_along_axis(v, first[..., None], axis=-1)
    return np.where(lead < 0.0, -v, v)


def log_so3(r):
    """Angle and unit axis with ``exp_so3(theta * axis) == r`` and theta in ``[0, pi]``.

    The identity maps to axis ``e3``. At exactly ``pi`` both axis signs give the
    same rotation, and the one whose first nonzero component is positive is
    returned.
    """
    r = np.asarray(r, dtype=float)
    w = vee(r, check=False)
    s = np.linalg.norm(w, axis=-1)
    theta = rotation_angle(r)

    # away from pi the antisymmetric part carries the axis directly
    axis_skew = np.where(
        (s > 0.0)[..., None], w / np.where(s > 0.0, s, 1.0)[..., None], np.array([0.0, 0.0, 1.0])
    )

    # near pi use the symmetric part: (R + R^T)/2 - cos(t) I = (1 - cos(t)) v v^T
    c = np.cos(theta)
    sym = 0.5 * (r + np.swapaxes(r, -1, -2)) - c[..., None, None] * np.eye(3)
    diag = np.diagonal(sym, axis1=-2, axis2=-1)
    k = np.argmax(diag, axis=-1)
    col = np.take_along_axis(sym, k[..., None, None], axis=-1)[..., 0]
    col_n = np.linalg.norm(col, axis=-1)
    axis_sym = col / np.where(col_n > 0.0, col_n, 1.0)[..., None]
    dot = np.sum(axis_sym * w, axis=-1)
    axis_sym = np.where(
        (np.abs(dot) > 1e-12)[..., None],
        np.sign(dot)[..., None] * axis_sym,
        _canonical_sign(axis_sym),
    )

    axis = np.where((theta > 0.5 * np.pi)[..., None], axis_sym, axis_skew)
    return AngleAxis(theta, axis)


def inner(a, b):
    """Frobenius inner product ``tr(a^T b)``."""
    return np.sum(np.asarray(a) * np.asarray(b), axis=(-2, -1))


def ortho_residual(r):
    r = np.asarray(r, dtype=float)
    return np.linalg.norm(np.swapaxes(r, -1, -2) @ r - np.eye(3), axis=(-2, -1))


def as_rotation(m, tol=ORTHO_TOL):
    """Return ``m`` as a float array after checking it lies on SO(3)."""
    m = np.array(m, dtype=float)
    if m.shape[-2:] != (3, 3):
        raise NotARotation(f"expected (..., 3, 3), got {m.shape}")
    resid = ortho_residual(m)
    det = np.linalg.det(m)
    if np.any(resid > tol) or np.any(np.abs(det - 1.0) > tol):
        raise NotARotation(
            f"orthonormality residual {np.max(resid):.3e}, det {np.ravel(det)[0]:.12f}"
        )
    return m


def project_to_so3(m):
    """Nearest rotation: ``m (m^T m)^(-1/2)``, the orthogonal polar factor."""
    m = np.asarray(m, dtype=float)
    lam, vec = np.linalg.eigh(np.swapaxes(m, -1, -2) @ m)
    inv_sqrt = (vec / np.sqrt(lam)[..., None, :]) @ np.swapaxes(vec, -1, -2)
    return m @ inv_sqrt


def random_rotations(rng, size=None):
    """Haar-distributed rotations from the QR factorization of Gaussian matrices."""
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    g = rng.standard_normal(shape + (3, 3))
    q, rr = np.linalg.qr(g)
    q = q * np.sign(np.diagonal(rr, axis1=-2, axis2=-1))[..., None, :]
    flip = np.linalg.det(q) < 0.0
    q[..., :, 0] = np.where(flip[..., None], -q[..., :, 0], q[..., :, 0])
    return q


def _check_symmetric(g, tol=ORTHO_TOL):
    g = np.asarray(g, dtype=float)
    resid = np.max(np.abs(g - np.swapaxes(g, -1, -2)))
    if resid > tol * max(1.0, float(np.max(np.abs(g)))):
        raise AsymmetricG(f"G asymmetric by {resid:.3e}")
    return g


def lemma1_check(g, q):
    """Both sides of ``<G(I-Q), I-Q> = 2 (tr G - v^T G v)(1 - cos t)``.

    ``(t, v)`` is the angle-axis of ``q``. Returns ``(lhs, rhs)``.
    """
    g = _check_symmetric(g)
    q = np.asarray(q, dtype=float)
    e = np.eye(3) - q
    lhs = inner(g @ e, e)
    aa = log_so3(q)
    v = aa.axis
    vgv = np.einsum("...i,...ij,...j->...", v, g, v)
    cos_t = 0.5 * (np.trace(q, axis1=-2, axis2=-1) - 1.0)
    rhs = 2.0 * (np.trace(g, axis1=-2, axis2=-1) - vgv) * (1.0 - cos_t)
    return lhs, rhs


def psi(g, r, r_bar):
    """Attitude error function ``(1/2) <G (R - Rbar), R - Rbar>``."""
    e = np.asarray(r, dtype=float) - np.asarray(r_bar, dtype=float)
    return 0.5 * inner(np.asarray(g, dtype=float) @ e, e)


def e_r_matrix(g, r, r_bar):
    """Attitude error vector ``(R^T G Rbar - Rbar^T G R)^vee``."""
    r = np.asarray(r, dtype=float)
    a = np.swapaxes(r, -1, -2) @ np.asarray(g, dtype=float) @ np.asarray(r_bar, dtype=float)
    return vee(a - np.swapaxes(a, -1, -2), check=False)


def e_r_measurements(weights, s, b, r_bar):
    """Attitude error vector from measurements, ``sum_i w_i (Rbar^T s_i) x b_i``.

    ``s`` and ``b`` have shape ``(..., n, 3)``; ``weights`` broadcasts against ``(..., n)``.
    """
    w = np.asarray(weights, dtype=float)
    s = np.asarray(s, dtype=float)
    b = np.asarray(b, dtype=float)
    if s.shape != b.shape or s.shape[-2] != w.shape[-1]:
        raise LengthMismatch(f"weights {w.shape}, s {s.shape}, b {b.shape}")
    for name, dirs in (("s", s), ("b", b)):
        dev = np.abs(np.linalg.norm(dirs, axis=-1) - 1.0)
        if np.any(dev > UNIT_TOL):
            raise NonUnitDirection(f"{name} deviates from unit norm by {np.max(dev):.3e}")
    # (Rbar^T s_i) for each i
    rs = np.einsum("...ji,...nj->...ni", np.asarray(r_bar, dtype=float), s)
    return np.sum(w[..., None] * cross(rs, b), axis=-2)


def q_inequality_terms(q, x, y, er_norm):
    """Residuals of the relative-attitude inequalities for ``Q = R Rbar^T``.

    ``r1 = -x^T (tr(Q) I - Q) x + 2 (1 - |E_R|^2 / 4) |x|^2``,
    ``r2 = y^T (tr(Q) I - Q) x - 4 |x| |y|``,
    ``r3 = (Q - Q^T)^vee . x - sqrt(2) |E_R| |x|``.
    """
    q = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    er2 = np.asarray(er_norm, dtype=float) ** 2
    f = np.trace(q, axis1=-2, axis2=-1)[..., None, None] * np.eye(3) - q
    fx = np.einsum("...ij,...j->...i", f, x)
    nx = np.linalg.norm(x, axis=-1)
    ny = np.linalg.norm(y, axis=-1)
    r1 = -np.sum(x * fx, axis=-1) + 2.0 * (1.0 - er2 / 4.0) * nx**2
    r2 = np.sum(y * fx, axis=-1) - 4.0 * nx * ny
    w = vee(q - np.swapaxes(q, -1, -2), check=False)
    r3 = np.sum(w * x, axis=-1) - np.sqrt(2.0) * np.sqrt(er2) * nx
    return QResiduals(r1, r2, r3)
