"""Command-line front end.

Every command writes its data to files under ``--out`` and prints a single
summary line. Exit status: 0 on success, 1 when a checked property is
violated, 2 on invalid input.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import bellman, bilinear, counterexample, multipliers
from .errors import CalibrationFailed, InputError, MarkovCalcError
from .semigroup import SUBMARKOVIAN, load_generator, two_point_generator
from .weights import as_weight, q2_characteristic, q2_tilde_characteristic

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def load_weight(path) -> np.ndarray:
    """Weight from a JSON list or an object with key ``"w"``."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {path}: {exc}") from None
    if isinstance(doc, dict):
        doc = doc.get("w")
    if not isinstance(doc, list):
        raise InputError("weight file must hold a list or {\"w\": [...]}")
    return as_weight(doc)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finite(x):
    return "inf" if np.isinf(x) else float(x)


# --------------------------------------------------------------------------
# commands

def cmd_q2(args) -> int:
    gen = load_generator(args.gen)
    w = load_weight(args.weight)
    if w.size != gen.n:
        raise InputError(f"weight has {w.size} entries, generator has {gen.n} points")
    out = _outdir(args)
    res = q2_characteristic(gen, w)
    doc = {"config": {"gen": str(args.gen), "weight": str(args.weight)},
           "value": res.value, "argmax_t": _finite(res.argmax_t),
           "under_resolved": res.under_resolved}
    if gen.kind == SUBMARKOVIAN:
        tilde = q2_tilde_characteristic(gen, w)
        doc["tilde_value"] = tilde.value
        doc["tilde_argmax_t"] = _finite(tilde.argmax_t)
    _write_json(out / "q2.json", doc)
    _write_csv(out / "curve.csv", ["t", "value"],
               [[_finite(t), repr(float(v))] for t, v in zip(res.t, res.curve)])
    print(f"q2 = {res.value:.10g} (argmax t = {_finite(res.argmax_t)})")
    return EXIT_OK


def cmd_bellman_calibrate(args) -> int:
    if args.q < bellman.Q_MIN:
        raise InputError(f"--q {args.q} is below Q_min = {bellman.Q_MIN:g}")
    out = _outdir(args)
    n = args.samples
    config = {"q": args.q, "eps": args.eps, "seed": args.seed, "samples": n,
              "pairs": 10 * n, "hessian_per_piece": max(n // 10, 1)}
    try:
        cfg, cert = bellman.calibrate_constants(args.q, args.eps, seed=args.seed, n_points=n,
                                                n_pairs=10 * n, n_hessian=max(n // 10, 1))
    except CalibrationFailed as exc:
        _write_json(out / "certificate.json", {"config": config, "failed": exc.prop,
                                               "witness": exc.witness, "message": str(exc)})
        print(f"calibration failed on {exc.prop}: {exc}")
        return EXIT_VIOLATION
    doc = cert.to_dict()
    doc["config"] = config
    _write_json(out / "certificate.json", doc)
    m = ", ".join(f"{k}={v:.3g}" for k, v in sorted(cert.margins.items()))
    print(f"calibrated C = {list(cfg.C)}; margins {m}")
    return EXIT_OK


def cmd_bilinear(args) -> int:
    rng = np.random.default_rng(args.seed)
    gen = load_generator(args.gen) if args.gen else two_point_generator()
    w = load_weight(args.weight) if args.weight else np.array([1.0, 4.0])
    if w.size != gen.n:
        raise InputError(f"weight has {w.size} entries, generator has {gen.n} points")
    submarkovian = args.submarkovian or gen.kind == SUBMARKOVIAN
    if args.submarkovian and gen.kind != SUBMARKOVIAN:
        raise InputError("--submarkovian needs a submarkovian generator")
    out = _outdir(args)
    records, violations = [], 0
    for k in range(args.trials):
        f = rng.standard_normal(gen.n) + 1j * rng.standard_normal(gen.n)
        g = rng.standard_normal(gen.n) + 1j * rng.standard_normal(gen.n)
        inst = bilinear.BilinearInstance(gen, w, f, g, cemetery=submarkovian)
        rec = bilinear.check_instance(inst)
        ok = rec["monotone"] and rec["decay_margin"] >= -1e-12
        if submarkovian:
            ok = ok and rec["correction_min"] >= -1e-12
        violations += not ok
        rec["trial"] = k
        rec["ok"] = ok
        records.append(rec)
        if k == 0:
            (out / "curve.csv").write_text(bilinear.energy_curve(inst).to_csv())
    table = bilinear.bucket_constants(records) if records else {"buckets": {}, "spread": 0.0}
    doc = {"config": {"gen": str(args.gen) if args.gen else "two-point",
                      "weight": w.tolist(), "trials": args.trials, "seed": args.seed,
                      "submarkovian": submarkovian},
           "characteristic": "tilde" if submarkovian else "plain",
           "table": table, "violations": violations,
           "max_ratio": max((r["ratio"] for r in records), default=None),
           "records": records}
    _write_json(out / "bilinear.json", doc)
    print(f"bilinear: {args.trials} trials, max ratio {doc['max_ratio']}, "
          f"{violations} violations")
    return EXIT_VIOLATION if violations else EXIT_OK


def _parse_floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_counterexample(args) -> int:
    if args.phi:
        phis = np.array(_parse_floats(args.phi))
        if np.any((phis <= 0) | (phis >= np.pi / 2)):
            raise InputError("angles must lie in (0, pi/2)")
        tan2 = np.tan(phis) ** 2
    else:
        tan2 = np.array(_parse_floats(args.tan2))
    if not args.r > 0:
        raise InputError("--r must be positive")
    out = _outdir(args)
    rep = counterexample.hormander_failure_experiment(tan2, r=args.r, s_max=args.s_max)
    rep["verdict"]["config"] = {"tan2": tan2.tolist(), "r": args.r, "s_max": args.s_max}
    (out / "counterexample.csv").write_text(counterexample.rows_to_csv(rep["rows"]))
    _write_json(out / "verdict.json", rep["verdict"])
    v = rep["verdict"]
    print(f"hormander_fails = {v['hormander_fails']}, fitted c = {v['fitted_c']:.4g}, "
          f"uniform Q = {v['uniform_Q']:.4g}, r warning = {v['r_warning']}")
    return EXIT_OK


def cmd_norms(args) -> int:
    try:
        params = json.loads(args.params)
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed --params JSON: {exc}") from None
    out = _outdir(args)
    rows = []
    if args.family == "regularized-besov":
        J, eps = params.get("J", 2.0), params.get("eps", 0.5)
        for t in params.get("t", [1, 10, 100, 1000]):
            rows.append([t, multipliers.regularized_semigroup_besov(t, J, eps)["value"]])
    elif args.family == "gamma-l1":
        for e in params.get("eps", [1e-1, 1e-2, 1e-3]):
            rows.append([e, multipliers.gamma_kernel_l1(e)])
    elif args.family == "hormander-exp":
        s, r = int(params.get("s", 2)), params.get("r", 1.0)
        for p in params.get("phi", [1.0, 1.3, 1.5]):
            m = multipliers.exp_multiplier(r * np.exp(1j * p))
            rows.append([p, multipliers.hormander_norm(m, s)["value"]])
    else:  # pragma: no cover - argparse restricts the choices
        raise InputError(args.family)
    _write_csv(out / f"{args.family}.csv", ["parameter", "value"],
               [[repr(float(a)), repr(float(b))] for a, b in rows])
    x = np.array([r[0] for r in rows], float)
    y = np.array([r[1] for r in rows], float)
    slope = multipliers.loglog_slope(x, y) if len(rows) > 1 else float("nan")
    print(f"{args.family}: {len(rows)} values, log-log slope {slope:.4g}")
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="markovcalc", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("q2", help="semigroup characteristic of a weight")
    q.add_argument("--gen", required=True)
    q.add_argument("--weight", required=True)
    q.add_argument("--out", default="markovcalc-out")
    q.set_defaults(func=cmd_q2)

    b = sub.add_parser("bellman-calibrate", help="calibrate and certify Bellman constants")
    b.add_argument("--q", type=float, default=16.0)
    b.add_argument("--eps", type=float, default=0.05)
    b.add_argument("--samples", type=int, default=100_000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default="markovcalc-out")
    b.set_defaults(func=cmd_bellman_calibrate)

    bl = sub.add_parser("bilinear", help="energy chain and bilinear bound on random data")
    bl.add_argument("--gen")
    bl.add_argument("--weight")
    bl.add_argument("--trials", type=int, default=10)
    bl.add_argument("--seed", type=int, default=0)
    bl.add_argument("--submarkovian", action="store_true")
    bl.add_argument("--out", default="markovcalc-out")
    bl.set_defaults(func=cmd_bilinear)

    c = sub.add_parser("counterexample", help="norm growth of the tensor-power counterexample")
    c.add_argument("--phi", help="comma-separated angles in (0, pi/2)")
    c.add_argument("--tan2", default="4,16,64,256", help="comma-separated tan^2 values")
    c.add_argument("--r", type=float, default=1e-3)
    c.add_argument("--s-max", type=int, default=16)
    c.add_argument("--out", default="markovcalc-out")
    c.set_defaults(func=cmd_counterexample)

    n = sub.add_parser("norms", help="multiplier norm sweeps as CSV")
    n.add_argument("--family", required=True,
                   choices=["regularized-besov", "gamma-l1", "hormander-exp"])
    n.add_argument("--params", default="{}")
    n.add_argument("--out", default="markovcalc-out")
    n.set_defaults(func=cmd_norms)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except MarkovCalcError as exc:
        # a numerical routine gave up; the requested property was not established
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
