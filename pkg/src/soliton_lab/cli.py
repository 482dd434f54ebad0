"""soliton-lab command line.

Every output carries a header with the hash of its run manifest.  The manifest
(with wall time) is written next to --out as <out>.manifest.json; the hash
excludes wall time so identical runs give identical bytes.
"""
from __future__ import annotations

import os

# thread caps must be in place before numpy loads its BLAS
_threads = os.environ.get("SOLITON_LAB_THREADS")
if _threads and _threads.isdigit() and int(_threads) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import csv  # noqa: E402
import hashlib  # noqa: E402
import json  # noqa: E402
import math  # noqa: E402
import sys  # noqa: E402
import time  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from .core import ROUND, ParameterError, SolverError, derive_params, load_config, parse_fold  # noqa: E402

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER = 0, 2, 3


# --- manifests and writers ------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if isinstance(v, (np.floating,)):
        return _jsonable(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return v


def make_manifest(subcommand: str, params: dict, tolerances: dict | None = None) -> dict:
    return {"tool": "soliton-lab", "version": __version__, "subcommand": subcommand,
            "params": _jsonable(params), "tolerances": _jsonable(tolerances or {})}


def manifest_hash(manifest: dict) -> str:
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def dump_json(fh, manifest: dict, result: dict) -> None:
    doc = {"manifest_hash": manifest_hash(manifest), "manifest": manifest, "result": _jsonable(result)}
    fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def dump_csv(fh, manifest: dict, columns, rows) -> None:
    fh.write(f"# soliton-lab {__version__} manifest_hash={manifest_hash(manifest)}\n")
    fh.write("# " + json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def write_sidecar(path: str, manifest: dict, wall: float) -> None:
    with open(path + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump({"manifest_hash": manifest_hash(manifest), "manifest": manifest, "wall_time_s": wall},
                  fh, sort_keys=True, indent=2)
        fh.write("\n")


class _Trace:
    def __init__(self, on: bool):
        self.on = on
        self.t0 = time.perf_counter()

    def __call__(self, msg: str) -> None:
        if self.on:
            print(f"[{time.perf_counter() - self.t0:8.3f}s] {msg}", file=sys.stderr)


def _fold_str(k) -> str:
    return "inf" if k == ROUND else str(int(k))


# --- emitters (also used in-process by the determinism check) ----------------------------

def emit_spectrum(fh, alpha: float, fold, n: int, jmax: int, stencil: str = "spectral") -> dict:
    from .shrinker import build_shrinker
    from .spectrum import eigen_spectrum

    P = derive_params(alpha)
    prof = build_shrinker(P, fold, n)
    sp = eigen_spectrum(prof, n, j_max=jmax, stencil=stencil)
    man = make_manifest("spectrum", {"alpha": alpha, "fold": _fold_str(fold), "n": n, "jmax": jmax,
                                     "stencil": stencil}, {"error_estimate": "n vs n/2"})
    res = sp.as_dict()
    res["K_plus_1"] = sp.count
    dump_json(fh, man, res)
    return res


def emit_shrinker(fh, alpha: float, fold, n: int, method: str) -> dict:
    from .shrinker import CERT_TOL, build_shrinker

    P = derive_params(alpha)
    prof = build_shrinker(P, fold, n, method)
    man = make_manifest("shrinker", {"alpha": alpha, "fold": _fold_str(fold), "n": n, "method": method},
                        {"certificate": CERT_TOL})
    dump_csv(fh, man, ("theta", "h"), zip(prof.h.theta, prof.values))
    h = prof.values
    return {"residual_sup": prof.residual_sup, "period_defect": prof.period_defect, "h0": prof.h0,
            "max_over_min": float(h.max() / h.min()), "construction": prof.construction.value,
            "manifest_hash": manifest_hash(man)}


# --- subcommands -----------------------------------------------------------------------

def _out_json(args, man, result, trace):
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            dump_json(fh, man, result)
        write_sidecar(args.out, man, time.perf_counter() - trace.t0)
    else:
        dump_json(sys.stdout, man, result)


def cmd_shrinker(args, trace):
    fold = parse_fold(args.fold)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            summary = emit_shrinker(fh, args.alpha, fold, args.n, args.method)
        man = make_manifest("shrinker", {"alpha": args.alpha, "fold": _fold_str(fold), "n": args.n,
                                         "method": args.method}, {"certificate": 1e-8})
        write_sidecar(args.out, man, time.perf_counter() - trace.t0)
    else:
        import io
        summary = emit_shrinker(io.StringIO(), args.alpha, fold, args.n, args.method)
    trace(f"{summary['construction']}: residual {summary['residual_sup']:.3g}, "
          f"period defect {summary['period_defect']:.3g}")
    print(json.dumps(_jsonable(summary), sort_keys=True, indent=2))


def cmd_spectrum(args, trace):
    fold = parse_fold(args.fold)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            res = emit_spectrum(fh, args.alpha, fold, args.n, args.jmax, args.stencil)
        man = make_manifest("spectrum", {"alpha": args.alpha, "fold": _fold_str(fold), "n": args.n,
                                         "jmax": args.jmax, "stencil": args.stencil},
                            {"error_estimate": "n vs n/2"})
        write_sidecar(args.out, man, time.perf_counter() - trace.t0)
        print(f"K = {res['K']}, K+1 = {res['K_plus_1']}")
    else:
        res = emit_spectrum(sys.stdout, args.alpha, fold, args.n, args.jmax, args.stencil)
    trace(f"{res['K_plus_1']} eigenvalues below the cutoff")


def _parse_modes(text: str | None) -> list[tuple[int, float]]:
    if not text:
        return []
    out = []
    for item in text.split(","):
        try:
            j, a = item.split(":") if ":" in item else (item, "1e-2")
            out.append((int(j), float(a)))
        except ValueError as exc:
            raise ParameterError(f"bad --modes entry {item!r}; use j:amplitude") from exc
    return out


def cmd_exterior(args, trace):
    from .exterior import bootstrap_exterior, extract_mode_coefficient, fixed_point_exterior, support_residual
    from .shrinker import build_shrinker

    P = derive_params(args.alpha)
    fold = parse_fold(args.fold)
    prof = build_shrinker(P, fold, 512)
    res = bootstrap_exterior(prof, R=args.R, length=args.smax, n_s=args.ns, n_theta=args.n)
    trace(f"bootstrap R={res.R} iterations={res.iterations}")
    resid = support_residual(res.field)
    fits = []
    for j, amp in _parse_modes(args.modes):
        fp = fixed_point_exterior(res.field, mode=j, amplitude=amp)
        fit = extract_mode_coefficient(fp.field, res.field, j)
        fits.append({"mode": j, "injected": amp, "recovered": fit.a, "fit_error": fit.fit_error,
                     "converged": fp.converged, "noise_limited": fp.noise_limited})
        trace(f"mode {j}: recovered {fit.a!r}")
    params = {"alpha": args.alpha, "fold": _fold_str(fold), "n_theta": args.n, "n_s": args.ns,
              "R": args.R if args.R is not None else "auto", "length": args.smax, "modes": args.modes or ""}
    man = make_manifest("exterior", params, {"increment": 1e-10, "max_iter": 60})
    summary = {**res.as_dict(), "relative_residual": resid["relative"], "residual_sup": resid["sup"],
               "mode_fits": fits}
    if args.out:
        prob = res.field.problem
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            rows = ((s, th, w) for i, s in enumerate(prob.s) for th, w in zip(prob.grid.theta, res.field.w[i]))
            dump_csv(fh, man, ("s", "theta", "w"), rows)
        write_sidecar(args.out, man, time.perf_counter() - trace.t0)
    dump_json(sys.stdout, man, summary)
    if not res.converged:
        raise SolverError("fixed point did not converge")


def cmd_radial(args, trace):
    from .radial import far_field_coefficients, radial_ode_residual, solve_fM, with_fit

    P = derive_params(args.alpha)
    sol = with_fit(solve_fM(P, args.M, args.lmax))
    A1, A2 = far_field_coefficients(P, args.M)
    probe = np.logspace(0, math.log10(args.lmax) - 1, 25)
    summary = {"A1_fit": sol.A1, "A2_fit": sol.A2, "A1_closed": A1, "A2_closed": A2,
               "A2_rel_err": abs(sol.A2 / A2 - 1.0), "ode_residual": radial_ode_residual(sol, probe)}
    man = make_manifest("radial", {"alpha": args.alpha, "M": args.M, "lmax": args.lmax},
                        {"quadrature": "GL24 per log segment"})
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            r = sol.r[sol.l > 0]  # f' is infinite at the vertex
            dump_csv(fh, man, ("l", "f", "fprime", "fsecond"),
                     zip(sol.l[sol.l > 0], r, sol.dfdl_at_r(r), sol.d2fdl2_at_r(r)))
        write_sidecar(args.out, man, time.perf_counter() - trace.t0)
    dump_json(sys.stdout, man, summary)


def cmd_barrier(args, trace):
    from .radial import barrier_residual_sign
    from .shrinker import build_shrinker

    P = derive_params(args.alpha)
    fold = parse_fold(args.fold)
    prof = build_shrinker(P, fold, args.n)
    sides = ("super", "sub") if args.side == "both" else (args.side,)
    reps = {s: barrier_residual_sign(prof, s).as_dict() for s in sides}
    man = make_manifest("barrier", {"alpha": args.alpha, "fold": _fold_str(fold), "n": args.n,
                                    "side": args.side}, {"sign": 1e-9})
    _out_json(args, man, reps, trace)
    if not all(r["ok"] for r in reps.values()):
        raise SolverError("barrier sign certificate failed")


def cmd_blowdown(args, trace):
    from .geometry import blow_down, entropy_J_field, radial_translator_dual, read_grid_csv, write_grid_csv
    from .radial import solve_fM

    P = derive_params(args.alpha)
    if args.infile:
        v = read_grid_csv(args.infile, side="dual")
        source = args.infile
    else:
        x = np.linspace(-2.0, 2.0, args.n)
        v = radial_translator_dual(solve_fM(P, args.M, 1e14 if P.alpha < 0.08 else 1e12), x, x)
        source = f"radial translator dual, M={args.M}"
    vl = blow_down(v, args.lam, P.alpha)
    J = entropy_J_field(vl, P.alpha, order=4)
    man = make_manifest("blowdown", {"alpha": args.alpha, "lambda": args.lam, "n": args.n, "M": args.M,
                                     "source": source}, {"hessian_order": 4})
    summary = {"J_mean": J.mean(), "J_spread": J.spread(), "valid_points": int(J.valid.sum())}
    if args.out:
        write_grid_csv(args.out, vl, f"soliton-lab {__version__} manifest_hash={manifest_hash(man)}")
        write_sidecar(args.out, man, time.perf_counter() - trace.t0)
    dump_json(sys.stdout, man, summary)


def cmd_entropy(args, trace):
    from .acceptance import _fold_dual_sample
    from .core import classify_shrinkers
    from .geometry import entropy_J_closed_form, entropy_J_field

    P = derive_params(args.alpha)
    folds = sorted(classify_shrinkers(P), key=lambda k: -k)  # inf first, then m, m-1, ..., 3
    x = np.linspace(-1.0, 1.0, args.n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    r = np.hypot(X, Y)
    ann = (r > 0.4) & (r < 0.95)
    rows = []
    for k in folds:
        cf = entropy_J_closed_form(P, k)
        F = entropy_J_field(_fold_dual_sample(P, k, x), P.alpha, order=4, region=ann)
        rows.append({"fold": _fold_str(k), "J_closed": cf, "J_sampled": F.mean(), "spread": F.spread()})
        trace(f"fold {_fold_str(k)}: J = {cf!r}")
    vals = [row["J_closed"] for row in rows]
    increasing = all(b > a for a, b in zip(vals, vals[1:]))
    line = " < ".join(f"J_{row['fold']} = {row['J_closed']:.10f}" for row in rows) if increasing else \
        "ordering violated: " + ", ".join(f"J_{row['fold']} = {row['J_closed']:.10f}" for row in rows)
    man = make_manifest("entropy", {"alpha": args.alpha, "n": args.n}, {"hessian_order": 4})
    result = {"folds": rows, "ordering": line, "ordered": increasing}
    if args.out:
        _out_json(args, man, result, trace)
        print(line)
    else:
        dump_json(sys.stdout, man, result)
    if not increasing:
        raise SolverError("entropy ordering violated")


def cmd_dynamics(args, trace):
    from .dynamics import (FIELDS, NeutralState, integrate_neutral_system, s_rho_limit_error,
                           slaving_relations_check)

    state = NeutralState.random(args.rho0, args.seed)
    traj = integrate_neutral_system(args.k, state, (0.0, args.smax), strict=False)
    trace(f"status {traj.status}, s_end {traj.info['s_end']!r}, sweeps {traj.relaxation_sweeps}")
    summary = {"status": traj.status, "s_end": traj.info["s_end"], "a": traj.system.a,
               "M": traj.system.M, "s_rho_err_1e3_1e4": s_rho_limit_error(traj)}
    try:
        summary["slaving"] = slaving_relations_check(traj).as_dict()
    except ParameterError as exc:
        summary["slaving"] = f"not evaluated: {exc}"
    man = make_manifest("dynamics", {"k": args.k, "rho0": args.rho0, "smax": args.smax, "seed": args.seed},
                        {"rtol": 1e-10})
    if args.out:
        mz = traj.as_mz()
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            dump_csv(fh, man, ("s", *FIELDS, "rho", "x", "y", "z"),
                     (np.concatenate([[s], row, [rho, xx, yy, zz]]).tolist()
                      for s, row, rho, xx, yy, zz in zip(traj.s, traj.y, traj.rho, mz.x, mz.y, mz.z)))
        write_sidecar(args.out, man, time.perf_counter() - trace.t0)
    dump_json(sys.stdout, man, summary)
    if traj.status != "ok":
        raise SolverError(f"rho left the small regime at s = {traj.info['s_end']:.6g}")


def cmd_mz(args, trace):
    from .dynamics import Trajectory, merle_zaag_classify, quantitative_mz_bound

    if not args.infile:
        raise ParameterError("mz needs --in trajectory.csv")
    with open(args.infile, encoding="utf-8") as fh:
        rows = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(rows)
    try:
        data = {k: [] for k in ("s", "x", "y", "z")}
        for rec in reader:
            for k in data:
                data[k].append(float(rec[k]))
    except (KeyError, ValueError, TypeError) as exc:
        raise ParameterError(f"{args.infile}: need columns s, x, y, z ({exc})") from exc
    t = Trajectory(*(np.array(data[k]) for k in ("s", "x", "y", "z")))
    c = merle_zaag_classify(t, args.lam, args.sigma)
    result = {"verdict": c.verdict.value, "neutral_ratio": c.neutral_ratio, "stable_ratio": c.stable_ratio,
              "violation": c.violation, "violation_s": c.violation_s}
    if t.s[0] < 0 < t.s[-1]:
        try:
            b = quantitative_mz_bound(t, args.lam, args.sigma)
            result["window_bound"] = {"holds": b.holds, "margin": b.margin, "epsilon": b.epsilon}
        except ParameterError as exc:
            result["window_bound"] = f"not applicable: {exc}"
    man = make_manifest("mz", {"in": os.path.basename(args.infile), "lambda": args.lam, "sigma": args.sigma})
    _out_json(args, man, result, trace)


def cmd_report(args, trace):
    from .acceptance import run_all

    only = None
    if args.only:
        try:
            only = {int(x) for x in args.only.split(",")}
        except ValueError as exc:
            raise ParameterError("--only takes comma-separated criterion numbers") from exc
    results = run_all(args.alpha, only)
    for r in results:
        trace(f"criterion {r.number}: {r.elapsed:.2f}s")
    lines = [r.line() for r in results]
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} criteria passed")
    man = make_manifest("report", {"alpha": args.alpha, "only": sorted(only) if only else "all"})
    text = f"# soliton-lab {__version__} manifest_hash={manifest_hash(man)}\n" + "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            dump_json(fh, man, {"criteria": [r.as_dict() for r in results], "passed": passed,
                                "total": len(results)})
        write_sidecar(args.out, man, time.perf_counter() - trace.t0)


# --- parser ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output file (CSV for fields, JSON for summaries)")
    common.add_argument("--trace", action="store_true", help="timings and solver progress on stderr")
    common.add_argument("--config", help="key = value file; command-line flags override it")
    common.add_argument("--seed", type=int, default=0)

    p = argparse.ArgumentParser(prog="soliton-lab", description="Translators, shrinkers and their spectra.")
    p.add_argument("--version", action="version", version=f"soliton-lab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_)

    s = add("shrinker", "k-fold or round shrinker profile")
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--fold", default="3")
    s.add_argument("--n", type=int, default=512)
    s.add_argument("--method", choices=("shoot", "dual"), default="shoot")

    s = add("spectrum", "weighted eigenvalues, Jacobi exponents and K")
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--fold", default="inf")
    s.add_argument("--n", type=int, default=512)
    s.add_argument("--jmax", type=int, default=8)
    s.add_argument("--stencil", choices=("spectral", "fd2"), default="spectral")

    s = add("exterior", "bootstrap exterior translator and optional mode injection")
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--fold", default="inf")
    s.add_argument("--n", type=int, default=128, help="angular points")
    s.add_argument("--ns", type=int, default=256, help="points in s")
    s.add_argument("--R", type=float, default=None, help="inner radius in s (default: automatic)")
    s.add_argument("--smax", type=float, default=20.0, help="strip length above R")
    s.add_argument("--modes", default=None, help="comma list j:amplitude, e.g. 0:1e-2,3:1e-2")

    s = add("radial", "radial solution f_M and its far-field coefficients")
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--M", type=float, default=1.0)
    s.add_argument("--lmax", type=float, default=1e12)

    s = add("barrier", "sign certificates of the radial barriers")
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--fold", default="3")
    s.add_argument("--n", type=int, default=512)
    s.add_argument("--side", choices=("super", "sub", "both"), default="both")

    s = add("blowdown", "rescale a dual sample and evaluate J on it")
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--lambda", dest="lam", type=float, default=2.0)
    s.add_argument("--n", type=int, default=257)
    s.add_argument("--M", type=float, default=1.0)
    s.add_argument("--in", dest="infile", default=None, help="grid CSV of a dual function")

    s = add("entropy", "J for every shrinker at alpha, closed form and sampled")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--n", type=int, default=401)

    s = add("dynamics", "truncated neutral-mode coefficient system")
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--rho0", type=float, default=1e-3)
    s.add_argument("--smax", type=float, default=200.0)

    s = add("mz", "classify a trajectory (columns s, x, y, z)")
    s.add_argument("--in", dest="infile", default=None)
    s.add_argument("--lambda", dest="lam", type=float, default=0.5)
    s.add_argument("--sigma", type=float, default=0.1)

    s = add("report", "run the acceptance suite")
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--only", default=None, help="comma-separated criterion numbers")
    return p


_HANDLERS = {"shrinker": cmd_shrinker, "spectrum": cmd_spectrum, "exterior": cmd_exterior,
             "radial": cmd_radial, "barrier": cmd_barrier, "blowdown": cmd_blowdown,
             "entropy": cmd_entropy, "dynamics": cmd_dynamics, "mz": cmd_mz, "report": cmd_report}


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cfg = load_config(args.config, defaults=False)
    sub = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
    known = {a.dest for a in sub._actions}  # noqa: SLF001
    unknown = set(cfg) - known
    if unknown:
        raise ParameterError(f"unknown config keys for {args.command}: {sorted(unknown)}")
    sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if _threads is not None and not (_threads.isdigit() and int(_threads) > 0):
        print("soliton-lab: SOLITON_LAB_THREADS must be a positive integer", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:  # argparse: usage already printed
        return EXIT_VALIDATION if exc.code else EXIT_OK
    except (ParameterError, OSError) as exc:
        print(f"soliton-lab: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    trace = _Trace(args.trace)
    try:
        _HANDLERS[args.command](args, trace)
    except ParameterError as exc:
        print(f"soliton-lab: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"soliton-lab: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"soliton-lab: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
