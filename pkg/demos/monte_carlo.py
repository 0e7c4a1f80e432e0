"""
Random checks of the inequalities and of certified runs
=======================================================

The error functions satisfy a set of inequalities that the convergence proof
leans on. A sweep samples rotations and weight matrices and reports the worst
margin for each one (nonpositive means the inequality held everywhere). Then
random scenarios with certified gains are simulated, and the runs are checked
against the envelope the certificate promises.
"""

import numpy as np

from so3obs.scenario import run
from so3obs.sweeps import check_certified_run, lemma_sweep, random_certified_scenario

res = lemma_sweep(seed=7, count=100000)
for name, margin in res.worst_margin.items():
    print(f"{name:>14s}: {margin: .3e}")

# a sign error in the measurement form of e_R is caught by the dual-form check
broken = lemma_sweep(seed=7, count=20000, corrupt_e_r_sign=True)
print("failures with a flipped sign:", broken.failures())

# %%
rng = np.random.default_rng(3)
for i in range(6):
    scn = random_certified_scenario(rng, kind="constant" if i % 2 == 0 else "slow")
    checks = check_certified_run(scn, run(scn.config, scn.gains, scn.certificate))
    print(f"{scn.kind:>8s} sigma = {scn.certificate.sigma:.2e}  "
          f"envelope excess {checks.envelope_margin: .2e}  domain margin {checks.domain_margin: .2e}  "
          f"passed = {checks.passed()}")
