"""The energy argument behind the weighted bilinear bound, on one instance.

Run: python3 demos/energy_decay.py

E(t) evaluates the Bellman function on the semigroup-transported data
(T_t f, T_t g, T_t v, T_t w). It decreases, and its rate of decrease
dominates |<A T_t f, T_t g>| / (c Q), so integrating in t bounds the
bilinear form by c Q E(0).
"""
import numpy as np

from markovcalc import bilinear as bl

rng = np.random.default_rng(5)
for kind in ("markovian", "submarkovian"):
    inst = bl.random_instance(5, rng, kind, spread=1.0)
    curve = bl.energy_curve(inst, np.concatenate([[0.0], np.logspace(-2, 2, 9)]))
    print(f"{kind}: Q2 = {inst.q2:.4f}, Q = {inst.Q:.4f}")
    print(f"{'t':>9} {'E':>12} {'-dE/dt':>12} {'FD':>12} {'integrand':>12}")
    for row in zip(curve.t, curve.energy, curve.decay, curve.decay_fd, curve.integrand):
        print("".join(f"{x:12.5g}" if i else f"{x:9.3g}" for i, x in enumerate(row)))
    rec = bl.check_instance(inst)
    print(f"integral {rec['value']:.5g}, ratio to Q2 |f| |g| = {rec['ratio']:.4g}\n")
