import time

import numpy as np
import pytest

from so3obs.errors import NonUnitDirection, RankDeficient
from so3obs.refset import (
    FixedDirection,
    LandmarkDirection,
    LinearPath,
    ReferenceDirection,
    ReferenceSet,
    RotatingDirection,
    WaypointPath,
    directions_at,
    g_matrix,
    spectral_bounds,
)
from so3obs.scenario import paper_references

E1, E2, E3 = np.eye(3)


def _fixed(*vecs, weights=None):
    weights = weights or [1.0] * len(vecs)
    return ReferenceSet([ReferenceDirection(w, FixedDirection(v)) for w, v in zip(weights, vecs)])


def _example_directions(t):
    # s_i(t) = (x_i - x(t)) / |x_i - x(t)| with x(t) = (t, 0, 0), plus e3
    t = np.asarray(t, dtype=float)
    x = np.stack([t, 0 * t, 0 * t], axis=-1)
    out = []
    for lm in ([5.0, 0.0, 1.0], [7.0, -2.0, 0.0]):
        d = np.asarray(lm) - x
        out.append(d / np.linalg.norm(d, axis=-1, keepdims=True))
    out.append(np.broadcast_to(E3, x.shape))
    return out


def _example_g_and_rate(t):
    """G(t) and its exact derivative, ds/dt = -(I - s s^T) dx/dt / |x_i - x|."""
    t = np.asarray(t, dtype=float)
    x = np.stack([t, 0 * t, 0 * t], axis=-1)
    xdot = np.array([1.0, 0.0, 0.0])
    g = np.zeros(t.shape + (3, 3))
    gdot = np.zeros_like(g)
    for w, lm in ((1.0, [5.0, 0.0, 1.0]), (1.0, [7.0, -2.0, 0.0])):
        d = np.asarray(lm) - x
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        s = d / r
        sdot = -(xdot - s * (s @ xdot)[..., None]) / r
        g += w * np.einsum("...i,...j->...ij", s, s)
        gdot += w * (np.einsum("...i,...j->...ij", sdot, s) + np.einsum("...i,...j->...ij", s, sdot))
    g += 2.0 * np.outer(E3, E3)
    return g, gdot


def test_g_single_direction():
    refs = ReferenceSet([ReferenceDirection(1.0, FixedDirection(E3)), ReferenceDirection(1.0, FixedDirection(E1))])
    g = g_matrix(refs, 0.0)
    assert np.allclose(g, np.diag([1.0, 0.0, 1.0]))
    # one direction alone is the rank-one projector
    assert np.allclose(np.outer(E3, E3), np.diag([0.0, 0.0, 1.0]))


def test_g_orthonormal_triad_is_identity():
    assert np.allclose(g_matrix(_fixed(E1, E2, E3), [0.0, 3.0]), np.eye(3))


def test_g_example_set_at_zero():
    s = [v[0] for v in _example_directions([0.0])]
    expected = np.outer(s[0], s[0]) + np.outer(s[1], s[1]) + 2.0 * np.outer(s[2], s[2])
    assert np.allclose(s[0], np.array([5.0, 0.0, 1.0]) / np.sqrt(26.0))
    assert np.allclose(g_matrix(paper_references(), 0.0), expected, atol=1e-15)


def test_g_trace_is_total_weight(rng):
    refs = paper_references()
    ts = rng.uniform(0.0, 10.0, 200)
    g = g_matrix(refs, ts)
    assert np.allclose(np.trace(g, axis1=1, axis2=2), 4.0, atol=1e-12)
    assert np.allclose(g, np.swapaxes(g, 1, 2), atol=0)
    assert np.all(np.linalg.eigvalsh(g) >= -1e-12)


def test_g_rejects_non_unit():
    refs = ReferenceSet([ReferenceDirection(1.0, lambda t: 2.0 * np.broadcast_to(E1, np.shape(t) + (3,))),
                         ReferenceDirection(1.0, FixedDirection(E2))])
    with pytest.raises(NonUnitDirection):
        g_matrix(refs, 0.0)


def test_scalar_only_direction_function():
    refs = ReferenceSet([ReferenceDirection(1.0, lambda t: np.array([np.cos(t), np.sin(t), 0.0])),
                         ReferenceDirection(1.0, FixedDirection(E3))])
    g = g_matrix(refs, np.array([0.0, np.pi / 2]))
    assert np.allclose(g[1], np.diag([0.0, 1.0, 1.0]), atol=1e-15)


def test_bounds_constant_identity():
    sb = spectral_bounds(_fixed(E1, E2, E3), 0.0, 1.0, 0.1)
    assert sb.c1 == pytest.approx(2.0) and sb.c2 == pytest.approx(2.0) and sb.d == 0.0


def test_bounds_rank_deficient():
    with pytest.raises(RankDeficient):
        ReferenceSet([ReferenceDirection(1.0, FixedDirection(E3))])
    with pytest.raises(RankDeficient):
        spectral_bounds(_fixed(E3, -E3), 0.0, 1.0, 0.1)


def test_bounds_argument_checks():
    refs = _fixed(E1, E2)
    with pytest.raises(ValueError):
        spectral_bounds(refs, 1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        spectral_bounds(refs, 0.0, 1.0, 0.0)


def test_example_bounds_against_printed_constants(example_bounds):
    assert example_bounds.c1 == pytest.approx(1.0, abs=0.05)
    assert example_bounds.c2 == pytest.approx(4.0, abs=0.05)
    assert example_bounds.d == pytest.approx(1.14, abs=0.05)


def test_example_bounds_against_analytic_oracle(example_bounds):
    ts = np.linspace(0.0, 10.0, 20001)
    g, gdot = _example_g_and_rate(ts)
    lam = np.linalg.eigvalsh(g)
    assert example_bounds.c1 == pytest.approx((lam[:, 0] + lam[:, 1]).min(), abs=1e-6)
    assert example_bounds.c2 == pytest.approx((lam[:, 1] + lam[:, 2]).max(), abs=1e-6)
    d_exact = np.linalg.norm(gdot, ord=2, axis=(-2, -1)).max()
    assert example_bounds.d == pytest.approx(d_exact, abs=1e-5)
    # Frobenius norm would give a visibly different constant
    assert example_bounds.d_frobenius == pytest.approx(np.linalg.norm(gdot, axis=(-2, -1)).max(), abs=1e-5)


def test_example_bounds_runtime(example_config):
    t0 = time.perf_counter()
    spectral_bounds(example_config.references, 0.0, 10.0, 1e-3)
    assert time.perf_counter() - t0 < 5.0


def test_grid_invariants(example_bounds):
    lam = np.linalg.eigvalsh(g_matrix(paper_references(), example_bounds.sample_times))
    assert np.all(lam[:, 0] + lam[:, 1] >= example_bounds.c1 - 1e-15)
    assert np.all(lam[:, 1] + lam[:, 2] <= example_bounds.c2 + 1e-15)
    assert example_bounds.sample_times[-1] == 10.0


def test_refinement_is_pessimistic(example_bounds):
    coarse = spectral_bounds(paper_references(), 0.0, 10.0, 1e-2)
    assert example_bounds.c1 <= coarse.c1
    assert example_bounds.c2 >= coarse.c2
    assert example_bounds.d >= coarse.d


def test_rotating_constant_rate_has_constant_spectrum():
    rate = np.array([0.0, 0.0, 0.2])
    refs = ReferenceSet([ReferenceDirection(1.0, RotatingDirection(E1, rate)),
                         ReferenceDirection(2.0, RotatingDirection(E2, rate))])
    sb = spectral_bounds(refs, 0.0, 5.0, 1e-3)
    assert sb.c1 == pytest.approx(1.0, abs=1e-12)
    assert sb.c2 == pytest.approx(3.0, abs=1e-12)
    # G(t) = P G0 P^T, dG/dt = [W, G]; |[W, G0]|_2 = 0.2 * (2 - 1)
    assert sb.d == pytest.approx(0.2, abs=1e-6)


def test_paths_and_landmarks():
    wp = WaypointPath([0.0, 10.0], [[0, 0, 0], [10, 0, 0]])
    lp = LinearPath([0, 0, 0], [1, 0, 0])
    ts = np.linspace(0, 10, 11)
    assert np.allclose(wp(ts), lp(ts))
    assert np.allclose(wp(12.0), [10, 0, 0])
    ld = LandmarkDirection([5.0, 0.0, 1.0], wp)
    assert np.allclose(directions_at(ReferenceSet([ReferenceDirection(1, ld), ReferenceDirection(1, FixedDirection(E3))]), 0.0)[0],
                       np.array([5.0, 0.0, 1.0]) / np.sqrt(26))
    with pytest.raises(ValueError):
        WaypointPath([1.0, 0.0], [[0, 0, 0], [1, 0, 0]])


def test_weights_must_be_positive():
    with pytest.raises(ValueError):
        ReferenceDirection(0.0, FixedDirection(E1))
