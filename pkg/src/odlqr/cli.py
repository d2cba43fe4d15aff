"""Command-line front end.

    odlqr <design|grad|stationary|landscape|simulate|dominance|reproduce|validate>
          --problem <file|builtin> [--out DIR] [--grid ...] [--seed N] [--tol X] [--jobs N]

JSON goes to ``DIR/<command>.json`` (``landscape.csv`` for scans) or to stdout.
Exit status: 0 success, 1 reproduction target missed, 2 input error,
3 numerical failure.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .closedloop import evaluate
from .design import standard_pair
from .dominance import search_eps, verify_dominance
from .errors import (
    ConvergenceError,
    DimensionError,
    OdlqrError,
    ProblemFileError,
    SingularityError,
    UnstableError,
)
from .gradient import (
    gradients_block,
    gradients_compact,
    gradients_fd,
    relative_frobenius,
)
from .problem import validate
from .problems import (
    BUILTINS,
    DOYLE2_WEIGHT_ASSUMPTION,
    Y_GENERAL,
    Y_SPECIAL,
    doyle_1d,
    doyle_2d,
    load_problem,
    problem_to_dict,
)
from .simulate import monte_carlo_cost
from .stationary import StationaryOptions, solve_stationary, standard_pair_coupling

EXIT_OK, EXIT_TARGET_MISS, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3
CSV_HEADER = ("g1", "g2", "cost", "grad_norm_K", "grad_norm_L", "stable")

# Published values checked by ``reproduce``: (name, target, absolute tolerance).
GAIN_TOL = 5e-4
TARGETS = {
    "doyle-1d": {
        "Y_g": [
            ("K_star", [[4.8768, 4.3773]], GAIN_TOL),
            ("L_star", [[-0.5667], [1.8333]], GAIN_TOL),
            ("K_dd", [[4.2598, 3.9482]], GAIN_TOL),
            ("L_dd", [[-2.5604], [4.0196]], GAIN_TOL),
            ("J_dd", 102.2875, 0.01),
        ],
        "Y_s": [
            ("K_star", [[4.8768, 4.3773]], GAIN_TOL),
        ],
    },
    "doyle-2d": {
        "Y_g": [("J_star", 25.4400, 1e-3), ("J_dd", 25.1660, 1e-3)],
        "Y_s": [("J_star", 25.4400, 1e-3), ("J_dd", 25.4400, 1e-3)],
    },
}
# Under Y22 = Y12' the stationary pair collapses to the standard pair.
DEGENERATE_COST_RTOL = 1e-9


class InputError(OdlqrError):
    """Bad command-line arguments that argparse cannot catch by itself."""


def _clean(obj):
    """JSON-ready copy: arrays to lists, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(args, name, text):
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(f"wrote {path}", file=sys.stderr)
    else:
        sys.stdout.write(text)


def _gains_at(p, which, tol):
    if which == "standard":
        return standard_pair(p).gains
    return solve_stationary(p, opts=StationaryOptions(tolerance=tol)).gains


# ---- subcommands ------------------------------------------------------------

def cmd_validate(args, p):
    report = validate(p).to_dict()
    return dumps({"problem": problem_to_dict(p), "validation": report})


def cmd_design(args, p):
    std = standard_pair(p)
    return dumps({
        "K_star": std.K_star,
        "L_star": std.L_star,
        "S_hat_star": std.S_hat_star,
        "Omega_hat_star": std.Omega_hat_star,
        "E0": p.E0,
        "validation": validate(p).to_dict(),
    })


def cmd_grad(args, p):
    g = _gains_at(p, args.at, args.tol)
    ev = evaluate(p, g)
    compact = gradients_compact(p, g, ev)
    block = gradients_block(p, g, ev)
    fd = gradients_fd(p, g)
    return dumps({
        "at": args.at,
        "K": g.K,
        "L": g.L,
        "cost": ev.cost,
        "grad_K": compact.grad_K,
        "grad_L": compact.grad_L,
        "grad_norm_K": compact.norm_K,
        "grad_norm_L": compact.norm_L,
        "block_vs_compact_rel_error": relative_frobenius(block, compact),
        "fd_grad_K": fd.grad_K,
        "fd_grad_L": fd.grad_L,
        "fd_vs_analytic_rel_error": relative_frobenius(compact, fd),
        "standard_pair_coupling": standard_pair_coupling(p),
    })


def cmd_stationary(args, p):
    report = solve_stationary(p, opts=StationaryOptions(tolerance=args.tol, update=args.update))
    out = report.to_dict()
    std = standard_pair(p)
    out.update(K_star=std.K_star, L_star=std.L_star, update=args.update,
               fd_grad_norm_K=None, fd_grad_norm_L=None)
    fd = gradients_fd(p, report.gains)
    out["fd_grad_norm_K"], out["fd_grad_norm_L"] = fd.norm_K, fd.norm_L
    return dumps(out)


def cmd_simulate(args, p):
    g = _gains_at(p, args.at, args.tol)
    mc = monte_carlo_cost(p, g, horizon=args.horizon, samples=args.samples, seed=args.seed)
    J = evaluate(p, g).cost
    return dumps({
        "at": args.at,
        "analytic_cost": J,
        "mc_mean": mc.mean,
        "mc_stderr": mc.stderr,
        "within_3se": abs(mc.mean - J) <= 3 * mc.stderr,
        "horizon": mc.horizon,
        "samples": mc.samples,
        "seed": mc.seed,
        "initial_state_distribution": mc.distribution,
    })


def cmd_dominance(args, p):
    report = solve_stationary(p, opts=StationaryOptions(tolerance=args.tol))
    coeffs = search_eps(p, report.gains, gamma=args.gamma)
    check = verify_dominance(p, report.gains, coeffs, samples=args.samples, seed=args.seed)
    return dumps({
        "K_dd": report.K_dd,
        "L_dd": report.L_dd,
        "coefficients": coeffs.to_dict(),
        "verification": check.to_dict(),
    })


def reproduce(which, tol=1e-7):
    """Standard and stationary pairs of a published example for both correlations.

    Returns (result dict, all targets met).
    """
    build = {"doyle-1d": doyle_1d, "doyle-2d": doyle_2d}[which]
    result = {"example": which, "cases": {}, "targets": []}
    if which == "doyle-2d":
        result["assumptions"] = [DOYLE2_WEIGHT_ASSUMPTION]
    ok = True
    for label, Y in (("Y_g", Y_GENERAL), ("Y_s", Y_SPECIAL)):
        p = build(Y)
        std = standard_pair(p)
        rep = solve_stationary(p, opts=StationaryOptions(tolerance=tol))
        case = {
            "K_star": std.K_star,
            "L_star": std.L_star,
            "K_dd": rep.K_dd,
            "L_dd": rep.L_dd,
            "J_star": rep.cost_standard,
            "J_dd": rep.cost,
            "degenerate_to_standard": rep.degenerate_to_standard,
            "iterations": rep.iterations,
        }
        result["cases"][label] = case
        for name, target, atol in TARGETS[which][label]:
            err = float(np.max(np.abs(np.asarray(case[name]) - np.asarray(target))))
            passed = err <= atol
            ok &= passed
            result["targets"].append({
                "case": label, "quantity": name, "target": target,
                "tolerance": atol, "abs_error": err, "pass": passed,
            })
        if label == "Y_s":
            gap = abs(case["J_dd"] - case["J_star"])
            passed = rep.degenerate_to_standard and gap <= DEGENERATE_COST_RTOL * max(1.0, case["J_star"])
            ok &= passed
            result["targets"].append({
                "case": label, "quantity": "J_dd == J_star (degenerate)", "target": 0.0,
                "tolerance": DEGENERATE_COST_RTOL, "abs_error": gap, "pass": passed,
            })
    result["all_pass"] = ok
    return result, ok


def cmd_reproduce(args, p):
    if args.which == "doyle-2d":
        print(f"ASSUMPTION: doyle-2d weights {DOYLE2_WEIGHT_ASSUMPTION}", file=sys.stderr)
    result, ok = reproduce(args.which, args.tol)
    for t in result["targets"]:
        print(f"{'PASS' if t['pass'] else 'FAIL'} {t['case']} {t['quantity']} "
              f"(abs error {t['abs_error']:.3g}, tolerance {t['tolerance']:g})", file=sys.stderr)
    return dumps(result), (EXIT_OK if ok else EXIT_TARGET_MISS)


# ---- landscape --------------------------------------------------------------

def parse_axis(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise InputError(f"grid axis {text!r} must be MIN,MAX,STEPS")
    try:
        lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise InputError(f"grid axis {text!r} must be MIN,MAX,STEPS") from exc
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise InputError(f"grid axis {text!r} has non-finite bounds")
    if steps < 2:
        raise InputError(f"grid axis {text!r} needs at least 2 steps")
    return np.linspace(lo, hi, steps)


def parse_grid(text):
    axes = [parse_axis(a) for a in text.split(";")]
    if len(axes) == 1:
        axes = axes * 2
    if len(axes) != 2:
        raise InputError("grid takes one axis (used for both) or two axes separated by ';'")
    return axes


def parse_entries(text, shape, gain):
    if text is None:
        if shape[0] * shape[1] != 2:
            raise InputError(
                f"{gain} has {shape[0] * shape[1]} entries; a landscape scans exactly 2. "
                f"Pick two with --entries 'i,j;k,l' (zero-based row,col)"
            )
        return [np.unravel_index(k, shape) for k in range(2)]
    out = []
    for item in text.split(";"):
        try:
            i, j = (int(v) for v in item.split(","))
        except ValueError as exc:
            raise InputError(f"entry {item!r} must be 'row,col'") from exc
        if not (0 <= i < shape[0] and 0 <= j < shape[1]):
            raise InputError(f"entry ({i},{j}) is outside {gain} of shape {shape}")
        out.append((i, j))
    if len(out) != 2 or out[0] == out[1]:
        raise InputError("--entries must name two distinct entries")
    return out


def _landscape_row_block(task):
    p, base, vary, entries, v1, axis2 = task
    rows = []
    for v2 in axis2:
        X = np.array(base.K if vary == "K" else base.L, copy=True)
        X[entries[0]], X[entries[1]] = v1, v2
        g = base.replace(**{vary: X})
        try:
            ev = evaluate(p, g)
            grads = gradients_compact(p, g, ev)
            rows.append((v1, v2, ev.cost, grads.norm_K, grads.norm_L, 1))
        except UnstableError:
            rows.append((v1, v2, None, None, None, 0))
    return rows


def landscape_rows(p, vary, axes, fixed="standard", entries=None, jobs=1, tol=1e-7):
    """Grid rows in grid order (first axis outer)."""
    base = _gains_at(p, fixed, tol)
    shape = (base.K if vary == "K" else base.L).shape
    entries = parse_entries(entries, shape, vary)
    tasks = [(p, base, vary, entries, float(v1), [float(v) for v in axes[1]]) for v1 in axes[0]]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            blocks = list(pool.map(_landscape_row_block, tasks))
    else:
        blocks = [_landscape_row_block(t) for t in tasks]
    return [row for block in blocks for row in block]


def format_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow(["" if v is None else (str(v) if isinstance(v, int) else format(v, ".12g"))
                    for v in row])
    return buf.getvalue()


def cmd_landscape(args, p):
    rows = landscape_rows(p, args.vary, parse_grid(args.grid), args.fixed, args.entries,
                          args.jobs, args.tol)
    return format_csv(rows)


# ---- entry point ------------------------------------------------------------

COMMANDS = {
    "design": (cmd_design, "design.json"),
    "grad": (cmd_grad, "grad.json"),
    "stationary": (cmd_stationary, "stationary.json"),
    "landscape": (cmd_landscape, "landscape.csv"),
    "simulate": (cmd_simulate, "simulate.json"),
    "dominance": (cmd_dominance, "dominance.json"),
    "reproduce": (cmd_reproduce, "reproduce.json"),
    "validate": (cmd_validate, "validate.json"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", help=f"problem file or built-in ({', '.join(sorted(BUILTINS))})")
    common.add_argument("--out", help="output directory (default: stdout)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=float, default=1e-7, help="stationarity tolerance")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1)

    ap = argparse.ArgumentParser(prog="odlqr", description="Observer-based dynamic LQR analysis.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", parents=[common], help="check assumptions on a problem")
    sub.add_parser("design", parents=[common], help="standard controller and observer")
    s = sub.add_parser("grad", parents=[common], help="gradients with a finite-difference check")
    s.add_argument("--at", choices=("standard", "stationary"), default="standard")
    s = sub.add_parser("stationary", parents=[common], help="stationary pair via coupled Sylvester equations")
    s.add_argument("--update", choices=("both", "K", "L"), default="both",
                   help="which gains move (the other stays at the standard pair)")
    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo cost against the analytic cost")
    s.add_argument("--at", choices=("standard", "stationary"), default="standard")
    s.add_argument("--samples", type=int, default=10_000)
    s.add_argument("--horizon", type=int, default=None)
    s = sub.add_parser("dominance", parents=[common], help="gradient-dominance constants and check")
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--gamma", type=float, default=None)
    s = sub.add_parser("landscape", parents=[common], help="2-D cost scan as CSV")
    s.add_argument("--vary", choices=("K", "L"), required=True)
    s.add_argument("--grid", default="-5,5,51", help="MIN,MAX,STEPS[;MIN,MAX,STEPS]")
    s.add_argument("--fixed", choices=("standard", "stationary"), default="standard",
                   help="where the other gain and the non-scanned entries sit")
    s.add_argument("--entries", default=None, help="two entries to scan, 'i,j;k,l'")
    s = sub.add_parser("reproduce", parents=[common], help="rerun a published example")
    s.add_argument("which", choices=("doyle-1d", "doyle-2d"))
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    func, filename = COMMANDS[args.command]
    try:
        if args.jobs < 1:
            raise InputError("--jobs must be at least 1")
        if not args.tol > 0:
            raise InputError("--tol must be positive")
        if args.command == "reproduce":
            p = None
        elif args.problem is None:
            raise InputError("--problem is required")
        else:
            p = load_problem(args.problem)
        out = func(args, p)
        text, code = out if isinstance(out, tuple) else (out, EXIT_OK)
    except (InputError, ProblemFileError, DimensionError) as exc:
        print(f"odlqr: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (UnstableError, SingularityError, ConvergenceError, OdlqrError) as exc:
        print(f"odlqr: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _emit(args, filename, text)
    return code


if __name__ == "__main__":
    sys.exit(main())
