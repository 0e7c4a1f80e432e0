"""
Rotation algebra on SO(3)
=========================

The observer works with the exponential and logarithm maps, the attitude
error ``E_R = I - R_bar R^T``, and the weighted error function ``Psi``.
This walks through each of them on random data.
"""

import numpy as np

from so3obs.so3 import (
    e_r_matrix,
    e_r_measurements,
    exp_so3,
    hat,
    lemma1_check,
    log_so3,
    psi,
    random_rotations,
    vee,
)

rng = np.random.default_rng(0)

# hat and vee are inverses; hat(v) w is the cross product v x w
v, w = rng.normal(size=3), rng.normal(size=3)
print("vee(hat(v)) == v:", np.allclose(vee(hat(v)), v))
print("hat(v) w == v x w:", np.allclose(hat(v) @ w, np.cross(v, w)))

# exp and log round trip, away from theta = pi
r = random_rotations(rng, 1000)
aa = log_so3(r)
back = exp_so3(aa.theta[:, None] * aa.axis)
print("max |exp(log R) - R|:", np.abs(back - r).max())

# at theta = pi the axis is ambiguous up to sign; the log picks the
# representative whose first nonzero component is positive
half_turn = exp_so3(np.pi * np.array([0.0, -1.0, 0.0]))
print("axis of a half turn about -e2:", log_so3(half_turn).axis)

# ||I - Q||_F^2 = 4 (1 - cos theta): the Frobenius norm of the attitude
# error is a function of the rotation angle alone
q = random_rotations(rng, 10000)
lhs = np.sum((np.eye(3) - q) ** 2, axis=(-2, -1))
rhs = 4.0 * (1.0 - np.cos(log_so3(q).theta))
print("max |norm-angle identity residual|:", np.abs(lhs - rhs).max())

# the weighted version: <G(I-Q), I-Q> = 2 (tr G - v^T G v)(1 - cos theta)
s = rng.normal(size=(4, 3))
s /= np.linalg.norm(s, axis=1, keepdims=True)
w = rng.uniform(0.5, 2.0, 4)
g = np.einsum("n,ni,nj->ij", w, s, s)
lhs, rhs = lemma1_check(g, q)
print("max |weighted identity residual|:", np.abs(lhs - rhs).max())

# psi and e_R in matrix form and from the body-frame measurements b_i = R^T s_i
r_true, r_est = q[0], q[1]
b = s @ r_true
print("psi:", psi(g, r_true, r_est))
print("e_R matrix form:      ", e_r_matrix(g, r_true, r_est))
print("e_R measurement form: ", e_r_measurements(w, s, b, r_est))
