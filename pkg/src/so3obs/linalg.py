"""Closed-form eigenvalues for small symmetric matrices.

Everything here broadcasts over leading axes, so an ``(N, 3, 3)`` stack
returns an ``(N, 3)`` array of eigenvalues.
"""

import numpy as np

__all__ = ["eigvalsh3", "eigvalsh2", "sym_spectral_norm3"]


def _char_poly(lam, i1, i2, i3):
    p = ((lam - i1) * lam + i2) * lam - i3
    dp = (3.0 * lam - 2.0 * i1) * lam + i2
    return p, dp


def _unit_null_vector(m):
    """Unit vector spanning the null space of rank-2 symmetric 3x3 matrices."""
    r0, r1, r2 = m[..., 0, :], m[..., 1, :], m[..., 2, :]
    cands = np.stack([np.cross(r0, r1), np.cross(r0, r2), np.cross(r1, r2)], axis=-2)
    norms = np.linalg.norm(cands, axis=-1)
    k = np.argmax(norms, axis=-1)
    v = np.take_along_axis(cands, k[..., None, None], axis=-2)[..., 0, :]
    n = np.take_along_axis(norms, k[..., None], axis=-1)
    # a zero matrix only reaches here on the scalar path, whose result is discarded
    return np.where(n > 0.0, v / np.where(n > 0.0, n, 1.0), np.array([0.0, 0.0, 1.0]))


def _complement_basis(v):
    k = np.argmin(np.abs(v), axis=-1)
    e = np.eye(3)[k]
    u1 = np.cross(v, e)
    u1 /= np.linalg.norm(u1, axis=-1, keepdims=True)
    u2 = np.cross(v, u1)
    return np.stack([u1, u2], axis=-1)


def eigvalsh3(a):
    """Eigenvalues of symmetric 3x3 matrices, sorted ascending.

    The input is symmetrized first. The trigonometric closed form gives all
    three roots of the characteristic polynomial, but a close pair loses
    accuracy there. So the best-separated root is polished with one Newton
    step, its eigenvector is found from a cross product, and the remaining
    pair comes from the exact 2x2 problem on the orthogonal complement.
    """
    a = np.asarray(a, dtype=float)
    a = 0.5 * (a + np.swapaxes(a, -1, -2))

    q = np.trace(a, axis1=-2, axis2=-1) / 3.0
    off = a[..., 0, 1] ** 2 + a[..., 0, 2] ** 2 + a[..., 1, 2] ** 2
    diag = np.diagonal(a, axis1=-2, axis2=-1)
    p2 = np.sum((diag - q[..., None]) ** 2, axis=-1) + 2.0 * off
    p = np.sqrt(p2 / 6.0)

    scalar = p <= 1e-14 * np.maximum(np.abs(q), 1.0)
    safe_p = np.where(scalar, 1.0, p)
    b = (a - q[..., None, None] * np.eye(3)) / safe_p[..., None, None]
    r = np.clip(np.linalg.det(b) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0

    hi = q + 2.0 * p * np.cos(phi)
    lo = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    mid = 3.0 * q - hi - lo
    sep = np.where(hi - mid >= mid - lo, hi, lo)

    i1 = 3.0 * q
    i2 = (
        diag[..., 0] * diag[..., 1]
        + diag[..., 0] * diag[..., 2]
        + diag[..., 1] * diag[..., 2]
        - off
    )
    i3 = np.linalg.det(a)
    res, dres = _char_poly(sep, i1, i2, i3)
    ok = np.abs(dres) > 1e-12 * np.maximum(p2, 1e-300)
    cand = sep - np.where(ok, res / np.where(ok, dres, 1.0), 0.0)
    res_new, _ = _char_poly(cand, i1, i2, i3)
    sep = np.where(np.abs(res_new) < np.abs(res), cand, sep)

    v = _unit_null_vector(a - sep[..., None, None] * np.eye(3))
    u = _complement_basis(v)
    pair = eigvalsh2(np.swapaxes(u, -1, -2) @ a @ u)

    lam = np.concatenate([sep[..., None], pair], axis=-1)
    lam = np.where(scalar[..., None], q[..., None], lam)
    return np.sort(lam, axis=-1)


def eigvalsh2(a):
    """Eigenvalues ``(tr -+ sqrt(tr^2 - 4 det)) / 2`` of symmetric 2x2 matrices."""
    a = np.asarray(a, dtype=float)
    tr = a[..., 0, 0] + a[..., 1, 1]
    off = 0.5 * (a[..., 0, 1] + a[..., 1, 0])
    # tr^2 - 4 det written as a sum of squares so it cannot go negative
    disc = np.sqrt((a[..., 0, 0] - a[..., 1, 1]) ** 2 + 4.0 * off**2)
    return np.stack([(tr - disc) / 2.0, (tr + disc) / 2.0], axis=-1)


def sym_spectral_norm3(a):
    """Operator 2-norm of symmetric 3x3 matrices, i.e. max |eigenvalue|."""
    lam = eigvalsh3(a)
    return np.maximum(np.abs(lam[..., 0]), np.abs(lam[..., 2]))
