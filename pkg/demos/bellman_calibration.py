"""Finding constants that make the six-piece Bellman function work.

Run: python3 demos/bellman_calibration.py [samples]

Each round evaluates size, derivative signs, the error estimate, one-leg
convexity and Hessian convexity on one fixed sample set, then doubles the
constants tied to whichever property failed.
"""
import sys

from markovcalc import bellman

n = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
for Q, eps in ((16.0, 0.05), (100.0, 0.02)):
    cfg, cert = bellman.calibrate_constants(Q, eps, n_points=n, n_pairs=10 * n,
                                            n_hessian=max(n // 10, 1))
    print(f"Q = {Q:g}, eps = {eps:g}")
    for k, rnd in enumerate(cert.rounds):
        m = "  ".join(f"{p}={v:+.3f}" for p, v in rnd["margins"].items())
        print(f"  round {k}: C2..6 = {rnd['C'][1]:g}  {m}")
    print(f"  accepted C = {list(cfg.C)}; one-step constant {cert.one_step_constant:.3g}\n")
