"""Command-line entry point: ``fracvia <subcommand> [flags]``.

Every run writes its outputs plus a manifest JSON next to the primary output;
``fracvia replay <manifest>`` re-runs it and compares SHA-256 digests.
"""

from __future__ import annotations

import argparse
import hashlib
import inspect
import json
import math
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from . import fbm as fbm_mod
from . import fraccalc as fc
from .errors import FracviaError, ViabilityViolation
from .grid import GridFunction
from .solver import (
    BUILTINS,
    SolverConfig,
    apriori_holder_bound,
    apriori_log_bound,
    builtin,
    check_assumptions,
    compute_ledger,
    linear_coefficients,
    sin_coefficients,
    solve_euler,
    solve_picard,
    verify_aux_estimates,
    verify_operator_estimates,
)
from .viability import (
    BuilderConfig,
    ball,
    box,
    build_viable_solution,
    fit_rate,
    halfspace,
    moving_ball,
    whole_space,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VIOLATION = 2
EXIT_USAGE = 64
FLOAT_FMT = "%.17g"
PATH_FLAGS = ("out", "report")


class UsageError(Exception):
    """Invalid flag combination detected after parsing."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


# --------------------------------------------------------------------------
# IO helpers
# --------------------------------------------------------------------------


def write_csv(path, header: list[str], columns: list[np.ndarray]) -> None:
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="",
               fmt=FLOAT_FMT)


def read_grid_csv(path) -> GridFunction:
    """Read ``time,ch0,...`` into a grid function (a ``rep`` column must be constant)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if "time" not in header:
        raise UsageError(f"{path}: CSV needs a 'time' column")
    cols = [i for i, h in enumerate(header) if h not in ("time", "rep")]
    if "rep" in header and np.unique(data[:, header.index("rep")]).size > 1:
        raise UsageError(f"{path}: long-format CSV holds several replications")
    return GridFunction(data[:, header.index("time")], data[:, cols])


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest_path(primary) -> Path:
    return Path(str(primary) + ".manifest.json")


def _write_manifest(args, argv, outputs: list[str]) -> None:
    flags = {k: v for k, v in vars(args).items() if k != "handler"}
    manifest = {
        "subcommand": args.command,
        "argv": list(argv),
        "flags": flags,
        "seed": flags.get("seed"),
        "grid": {k: flags.get(k) for k in ("t0", "t1", "n")},
        "version": __version__,
        "outputs": [{"path": str(p), "sha256": sha256(p)} for p in outputs],
    }
    write_json(_manifest_path(outputs[0]), manifest)


# --------------------------------------------------------------------------
# Shared argument groups
# --------------------------------------------------------------------------


def _add_grid(p, n_default=513):
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t1", type=float, default=1.0)
    p.add_argument("--n", type=int, default=n_default, help="grid points")


def _add_coeffs(p):
    p.add_argument("--coeffs", default="linear",
                   help="linear | none | builtin:<name> with name in "
                        + ", ".join(sorted(BUILTINS)))
    for flag in ("drift-slope", "drift-offset", "diffusion-slope", "diffusion-offset",
                 "amplitude", "s0", "level"):
        p.add_argument(f"--{flag}", type=float, default=None)


def _add_driver(p):
    p.add_argument("--driver", default="fbm:0.75",
                   help="CSV file, fbm:<H> (sampled with --seed), smooth or identity")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sampler", default="circulant", choices=["cholesky", "circulant"],
                   help="fBm sampler")


def _coefficients(args):
    name = args.coeffs
    if name.startswith("builtin:"):
        name = name.split(":", 1)[1]
    if name not in BUILTINS:
        raise UsageError(f"unknown coefficients {args.coeffs!r}")
    accepted = inspect.signature(BUILTINS[name]).parameters
    params = {}
    for key in ("drift_slope", "drift_offset", "diffusion_slope", "diffusion_offset",
                "amplitude", "s0", "level"):
        value = getattr(args, key)
        if value is None:
            continue
        if key not in accepted:
            raise UsageError(f"--{key.replace('_', '-')} does not apply to {name!r}")
        params[key] = value
    return builtin(name, **params)


def _driver(args) -> GridFunction:
    spec = args.driver
    if spec.startswith("fbm:"):
        if args.seed is None:
            raise UsageError("--seed is required for sampled drivers")
        hurst = float(spec.split(":", 1)[1])
        fs = fbm_mod.FbmSpec(hurst, 1, args.t0, args.t1, args.n, args.seed)
        sampler = (fbm_mod.sample_fbm_circulant if args.sampler == "circulant"
                   else fbm_mod.sample_fbm_cholesky)
        return sampler(fs)
    if spec == "smooth":
        return GridFunction.from_callable(lambda s: np.sin(3 * s) + s, args.t0, args.t1,
                                          args.n)
    if spec == "identity":
        return GridFunction.from_callable(lambda s: s, args.t0, args.t1, args.n)
    if not Path(spec).exists():
        raise UsageError(f"driver {spec!r} is neither a known spec nor a file")
    return read_grid_csv(spec)


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_fbm(args) -> tuple[int, list[str]]:
    if args.seed is None:
        raise UsageError("--seed is required")
    spec = fbm_mod.FbmSpec(args.hurst, args.channels, args.t0, args.t1, args.n, args.seed)
    paths = fbm_mod.sample_paths(spec, args.paths, args.method)
    header = ["time"] + [f"ch{c}" for c in range(args.channels)]
    out = Path(args.out)
    if args.long:
        rep = np.repeat(np.arange(args.paths), spec.grid_points)
        time = np.tile(spec.times, args.paths)
        vals = paths.reshape(-1, args.channels)
        write_csv(out, ["rep"] + header, [rep, time] + [vals[:, c] for c in range(args.channels)])
        return EXIT_OK, [str(out)]
    files = []
    for r in range(args.paths):
        target = out if args.paths == 1 else out.with_name(f"{out.stem}_rep{r}{out.suffix}")
        write_csv(target, header, [spec.times] + [paths[r, :, c] for c in range(args.channels)])
        files.append(str(target))
    return EXIT_OK, files


def cmd_calc(args) -> tuple[int, list[str]]:
    f = read_grid_csv(args.in_f) if args.in_f else None
    g = read_grid_csv(args.in_g) if args.in_g else None
    need = {"derivative-left": "f", "derivative-right": "g", "integral": "fg",
            "norms": "fg", "verify": "fg"}[args.op]
    if ("f" in need and f is None) or ("g" in need and g is None):
        raise UsageError(f"--op {args.op} needs " + " and ".join(f"--in-{c}" for c in need))
    a = args.alpha
    ref = f if f is not None else g
    t = ref.t0 if args.t is None else args.t
    T = ref.t1 if args.T is None else args.T
    out = Path(args.out)
    as_json = out.suffix == ".json"
    if args.op == "derivative-left":
        res = fc.left_frac_derivative(f, a, t)
    elif args.op == "derivative-right":
        res = fc.right_frac_derivative_real(g, a, T)
    elif args.op == "integral":
        res = fc.integral_path(f, g, a, t, T)
    elif args.op == "norms":
        mu = 1 - a if args.mu is None else args.mu
        report = fc.norm_report(f, g, a, args.lam, mu, args.delta, t, T).as_dict()
        write_json(out, report)
        return EXIT_OK, [str(out)]
    else:
        checks = [fc.verify_integral_bound(f, g, a, t, T)]
        checks += fc.verify_prop1_bounds(f, g, a, args.lam, t, T)
        rows = [c.as_dict() for c in checks]
        write_json(out, {"checks": rows, "pass": all(r["pass"] for r in rows)})
        return (EXIT_OK if all(r["pass"] for r in rows) else EXIT_ERROR), [str(out)]
    if as_json:
        write_json(out, {"times": res.times, "values": res.values})
    else:
        flat = res.values.reshape(res.n, -1)
        write_csv(out, ["time"] + [f"ch{c}" for c in range(flat.shape[1])],
                  [res.times] + [flat[:, c] for c in range(flat.shape[1])])
    return EXIT_OK, [str(out)]


def _below_log_bound(measured: float, log_bound: float) -> bool:
    return measured == 0.0 or math.log(measured) <= log_bound


def cmd_solve(args) -> tuple[int, list[str]]:
    coeffs = _coefficients(args)
    g = _driver(args)
    x0 = np.atleast_1d(args.x0)
    cols, header, report = [g.times], ["time"], {}
    bounds = []
    ledger = compute_ledger(coeffs, g, args.alpha, g.t0, g.t1, x0)
    if args.method in ("picard", "both"):
        sol = solve_picard(coeffs, g, x0, g.t0, g.t1, SolverConfig(alpha=args.alpha))
        header += [f"picard{c}" for c in range(coeffs.dim)]
        cols += [sol.path.values[:, c] for c in range(coeffs.dim)]
        measured = fc.holder_norm(sol.path, 1 - args.alpha, g.t0, g.t1)
        bounds.append({
            "name": "apriori-holder", "lhs": measured,
            "rhs": apriori_holder_bound(x0, ledger),
            "log_rhs": apriori_log_bound(x0, ledger),
            "pass": _below_log_bound(measured, apriori_log_bound(x0, ledger)),
        })
        bounds += [r.as_dict() for r in verify_aux_estimates(sol.path, coeffs, g,
                                                            args.alpha, g.t0)]
        report.update(iterations=sol.iterations, residual=sol.residual,
                      lambda0=sol.lambda0, pieces=len(sol.pieces),
                      max_contraction_ratio=sol.max_contraction_ratio)
    if args.method in ("euler", "both"):
        eu = solve_euler(coeffs, g, x0, g.t0, g.t1)
        header += [f"euler{c}" for c in range(coeffs.dim)]
        cols += [eu.values[:, c] for c in range(coeffs.dim)]
    report["ledger"] = ledger.as_dict()
    report["bounds_checked"] = bounds
    report["assumptions"] = check_assumptions(coeffs, args.alpha, args.hurst_gate).as_dict()
    write_csv(args.out, header, cols)
    outputs = [args.out]
    if args.report:
        write_json(args.report, report)
        outputs.append(args.report)
    return EXIT_OK, outputs


def parse_tube(spec: str):
    kind, _, rest = spec.partition(":")
    try:
        nums = [float(v) for v in rest.split(",") if v != ""]
        if kind == "ball":
            return ball(nums[0])
        if kind == "moving-ball":
            return moving_ball(nums[0], nums[1] if len(nums) > 1 else 0.0)
        if kind == "box":
            return box(nums[0], nums[1])
        if kind == "halfspace":
            return halfspace(nums[:-1], nums[-1])
        if kind == "none":
            return whole_space()
    except (IndexError, ValueError) as exc:
        raise UsageError(f"bad tube spec {spec!r}: {exc}")
    raise UsageError(f"unknown tube {spec!r}")


def cmd_viability(args) -> tuple[int, list[str]]:
    coeffs = _coefficients(args)
    g = _driver(args)
    tube = parse_tube(args.tube)
    if args.eps_sweep:
        eps = [float(v) for v in args.eps_sweep.split(",")]
    else:
        eps = [args.epsilon]
    config = BuilderConfig(gamma=args.gamma)
    builds, violations, certs = [], [], []
    code = EXIT_OK
    for e in eps:
        try:
            sol = build_viable_solution(g.t0, args.x0, coeffs, g, tube, e, args.alpha, config)
        except ViabilityViolation as exc:
            violations.append({"epsilon": e, "time": exc.time, "point": exc.point,
                               "q_growth_exponent": exc.q_growth_exponent})
            if exc.certificate is not None:
                certs.append({"epsilon": e, **exc.certificate.as_dict()})
            code = EXIT_VIOLATION
            break
        builds.append(sol)
        certs += [{"epsilon": e, **c.as_dict()} for c in sol.certificates]
    dists = [float(np.max(np.abs(a.X.values - b.X.values)))
             for a, b in zip(builds, builds[1:])]
    report = {
        "viable": code == EXIT_OK,
        "violations": violations,
        "certificates": certs,
        "rate_fit": {"epsilons": eps[: len(builds)], "distances": dists,
                     "exponent": fit_rate(eps, dists) if len(dists) > 1 else None},
        "builds": [{"epsilon": b.epsilon, "invariants": b.check_invariants(tube),
                    "breakpoints": len(b.breakpoints), "B0_measured": b.B0_measured,
                    "D0_measured": b.D0_measured, "h_apriori": b.h_apriori}
                   for b in builds],
    }
    header = ["time"] + [f"x_eps{b.epsilon:g}_{c}" for b in builds for c in range(coeffs.dim)]
    cols = [g.times] + [b.X.values[:, c] for b in builds for c in range(coeffs.dim)]
    write_csv(args.out, header, cols)
    outputs = [args.out]
    if args.report:
        write_json(args.report, report)
        outputs.append(args.report)
    return code, outputs


def run_verify_suite(seed: int, n: int = 513, paths: int = 1000,
                     alpha: float = 0.3) -> list[dict]:
    """Inequality battery over standard drivers and coefficients."""
    rows = []
    t, T = 0.0, 1.0
    spec = fbm_mod.FbmSpec(0.75, 1, t, T, 17, seed)
    mom = fbm_mod.increment_moment_check((spec.times, fbm_mod.sample_paths(spec, paths)), 0.75)
    rows.append({"name": "fbm-increment-moments", "driver": "fbm:0.75",
                 "pass": not mom.flagged})
    drivers = {
        "smooth": GridFunction.from_callable(lambda s: np.sin(3 * s) + s, t, T, n),
        "fbm:0.75": fbm_mod.sample_fbm_circulant(
            fbm_mod.FbmSpec(0.75, 1, t, T, n, seed)),
    }
    families = {"linear": linear_coefficients(0.7, 0.2, 0.5, 0.1),
                "sin": sin_coefficients(0.8, -0.5)}
    ts = drivers["smooth"].times
    f = GridFunction(ts, np.sin(2 * ts) + 0.3)
    h = GridFunction(ts, np.cos(ts))
    for dname, g in drivers.items():
        tag = {"driver": dname}
        rows.append({**fc.verify_integral_bound(f, g, alpha, t, T).as_dict(), **tag})
        for lam in (1.0, 4.0, 16.0):
            for r in fc.verify_prop1_bounds(f, g, alpha, lam, t, T):
                rows.append({**r.as_dict(), **tag, "lambda": lam})
        for cname, coeffs in families.items():
            ctag = {**tag, "coeffs": cname}
            for lam in (1.0, 4.0, 16.0):
                for r in verify_operator_estimates(f, h, g, coeffs, alpha, lam, t, T):
                    rows.append({**r.as_dict(), **ctag, "lambda": lam})
            sol = solve_picard(coeffs, g, 0.5, t, T, SolverConfig(alpha=alpha))
            for r in verify_aux_estimates(sol.path, coeffs, g, alpha, t):
                rows.append({**r.as_dict(), **ctag})
            led = compute_ledger(coeffs, g, alpha, t, T, 0.5)
            measured = fc.holder_norm(sol.path, 1 - alpha, t, T)
            rows.append({"name": "apriori-holder", **ctag, "lhs": measured,
                         "log_rhs": apriori_log_bound(0.5, led),
                         "pass": _below_log_bound(measured, apriori_log_bound(0.5, led))})
    return rows


def cmd_verify_all(args) -> tuple[int, list[str]]:
    if args.seed is None:
        raise UsageError("--seed is required")
    rows = run_verify_suite(args.seed, args.n, args.paths)
    ok = all(r["pass"] for r in rows)
    for r in rows:
        label = " ".join(str(r[k]) for k in ("driver", "coeffs", "lambda") if k in r)
        print(f"{'PASS' if r['pass'] else 'FAIL'}  {r['name']:<28} {label}")
    write_json(args.out, {"checks": rows, "pass": ok})
    return (EXIT_OK if ok else EXIT_ERROR), [args.out]


def cmd_replay(args) -> tuple[int, list[str]]:
    manifest = json.loads(Path(args.manifest).read_text())
    argv = list(manifest["argv"])
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for flag in PATH_FLAGS:
            opt = f"--{flag}"
            if opt in argv:
                i = argv.index(opt) + 1
                argv[i] = str(out_dir / Path(argv[i]).name)
    code = run(argv)
    new_manifest = json.loads(_manifest_path(_primary_output(argv)).read_text())
    old = [o["sha256"] for o in manifest["outputs"]]
    new = [o["sha256"] for o in new_manifest["outputs"]]
    same = old == new
    print("replay: digests " + ("match" if same else "DIFFER"))
    return (code if same else EXIT_ERROR), []


def _primary_output(argv) -> str:
    return argv[argv.index("--out") + 1]


# --------------------------------------------------------------------------
# Parser and entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fracvia", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fbm", help="sample fractional Brownian motion")
    p.add_argument("--hurst", type=float, required=True)
    p.add_argument("--channels", type=int, default=1)
    _add_grid(p, 256)
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--method", default="circulant", choices=["cholesky", "circulant"])
    p.add_argument("--out", default="fbm.csv")
    p.add_argument("--long", action="store_true", help="single file with a rep column")
    p.set_defaults(handler=cmd_fbm)

    p = sub.add_parser("calc", help="fractional derivatives, integrals and norms")
    p.add_argument("--op", required=True,
                   choices=["derivative-left", "derivative-right", "integral", "norms",
                            "verify"])
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--in-f", dest="in_f", default=None)
    p.add_argument("--in-g", dest="in_g", default=None)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_calc)

    p = sub.add_parser("solve", help="solve the pathwise equation")
    _add_coeffs(p)
    _add_driver(p)
    _add_grid(p)
    p.add_argument("--x0", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.3)
    p.add_argument("--hurst-gate", type=float, default=0.75,
                   help="Hurst index used for the assumption gates")
    p.add_argument("--method", dest="method", default="both",
                   choices=["picard", "euler", "both"])
    p.add_argument("--out", default="solve.csv")
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("viability", help="build approximate viable solutions")
    p.add_argument("--tube", required=True,
                   help="ball:<r> | box:<lo>,<hi> | halfspace:<a...>,<c> | "
                        "moving-ball:<r0>,<slope> | none")
    _add_coeffs(p)
    _add_driver(p)
    _add_grid(p)
    p.add_argument("--x0", type=float, default=0.0)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--epsilon", type=float, default=0.05)
    group.add_argument("--eps-sweep", dest="eps_sweep", default=None,
                       help="comma-separated decreasing epsilons")
    p.add_argument("--alpha", type=float, default=0.3)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--out", default="viability.csv")
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_viability)

    p = sub.add_parser("verify-all", help="run the full inequality battery")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n", type=int, default=513)
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--out", default="verify_all.json")
    p.set_defaults(handler=cmd_verify_all)

    p = sub.add_parser("replay", help="re-run a manifest and compare digests")
    p.add_argument("manifest")
    p.add_argument("--out-dir", dest="out_dir", default=None)
    p.set_defaults(handler=cmd_replay)
    return parser


def run(argv=None) -> int:
    """Execute one subcommand; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        # a single BLAS thread keeps floating-point reductions schedule-independent
        with threadpool_limits(limits=1):
            code, outputs = args.handler(args)
    except UsageError as exc:
        sys.stderr.write(f"fracvia {args.command}: usage error: {exc}\n")
        return EXIT_USAGE
    except (FracviaError, ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
        sys.stderr.write(f"fracvia {args.command}: error: {exc}\n")
        return EXIT_ERROR
    if outputs:
        _write_manifest(args, argv, outputs)
    return code


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
