"""How a bounded weight characteristic coexists with exploding norms.

Run: python3 demos/two_point_growth.py

On two points the semigroup exp(-zG) is a contraction of the unweighted
space for every Re z > 0, but with the weight (1, v^2) its norm exceeds one
by a multiple of (v - 1)^2. Tensor powers multiply the excess while the
characteristic of the product weight stays below e.
"""
import numpy as np

from markovcalc import counterexample as cx

print("Norm excess of the two-point semigroup at v = 1.01")
print(f"{'arg z':>8} {'r':>6} {'(norm-1)/eps^2':>16} {'direct expansion':>18}")
for phi in (0.0, 0.6, 1.2, 1.45):
    for r in (0.01, 0.5):
        res = cx.asymptotic_check(phi, r)
        print(f"{phi:8.2f} {r:6.2f} {res['measured']:16.6g} {res['exact_expansion']:18.6g}")

print("\nN legs with eps = 1/sqrt(N): characteristic bounded, norm growing")
print(f"{'tan^2':>8} {'N':>5} {'Q2':>8} {'log norm (r=1)':>16}")
rep = cx.hormander_failure_experiment((4, 16, 64, 256, 1024), r=1.0)
for row in rep["rows"]:
    print(f"{row['tan2']:8.0f} {row['N']:5d} {row['q2']:8.4f} {row['log_norm']:16.6g}")
v = rep["verdict"]
print(f"\nfit log norm ~ c tan^2: c = {v['fitted_c']:.4g}, R^2 = {v['r2']:.4f}")
print(f"uniform bound on Q2: {v['uniform_Q']:.4f}")
