"""Size of three multiplier norms as their parameters move.

Run: python3 demos/multiplier_norms.py

* the Besov-refined norm of (1 + z)^(-J-eps) exp(-t z) as t grows,
* the L1 norm of the gamma kernel as the angle parameter shrinks,
* the integer-smoothness Hörmander norm of exp(-z lambda) as arg z -> pi/2.
"""
import numpy as np

from markovcalc import multipliers as mp

ts = np.array([1.0, 10.0, 100.0])
besov = [mp.regularized_semigroup_besov(t, 2.0, 0.5)["value"] for t in ts]
print("regularized semigroup, J = 2, eps = 0.5")
for t, b in zip(ts, besov):
    print(f"  t = {t:6g}: {b:.5g}")
print(f"  log-log slope {mp.loglog_slope(ts, besov):.3f}\n")

es = np.logspace(-3, -1, 5)
l1 = [mp.gamma_kernel_l1(e) for e in es]
print("gamma kernel L1 norm")
for e, v in zip(es, l1):
    print(f"  eps = {e:.4g}: {v:.5g}")
print(f"  log-log slope {mp.loglog_slope(es, l1):.3f}\n")

print("Hörmander norm (s = 2) of exp(-z lambda), |z| = 1")
for phi in (0.5, 1.0, 1.3, 1.5):
    res = mp.hormander_norm(mp.exp_multiplier(np.exp(1j * phi)), 2)
    print(f"  arg z = {phi:.2f}: {res['value']:.5g} (tan = {np.tan(phi):.3g})")
