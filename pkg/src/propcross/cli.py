"""Command-line front end.  Every subcommand prints one JSON document.

Exit status: 0 on success, 2 for invalid input, 3 when an optimizer fails
to certify its answer.  Messages go to standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from .design import (
    ApproxDesign,
    DesignError,
    ExactDesign,
    criterion_value,
    design_from_json,
    design_moments,
    design_to_json,
    materialize,
    point_prior_value,
    spectrum,
    symmetrize,
)
from .envelope import EnvelopeError, solve
from .moments import Covariance, CovarianceError, DesignSpace, Quadratic
from .optimize import (
    NonConvergence,
    OptimizeOptions,
    certify,
    optimize,
    optimize_lambda_design,
    sweep,
)
from .rounding import round_exact
from .sequences import SequenceError

DIGITS = 12
EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGENCE = 0, 2, 3


class InputError(ValueError):
    pass


def _clean(obj):
    """Round floats to 12 significant digits, recursively."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
        v = float(f"{v:.{DIGITS}g}")
        return 0.0 if v == 0 else v
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2)


# ------------------------------------------------------------ input helpers

def _read_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from None


def _covariance(args) -> Covariance:
    if getattr(args, "sigma", None):
        obj = _read_json(args.sigma)
        if isinstance(obj, list):
            return Covariance.custom(obj)
        return Covariance.from_json(obj)
    rho = getattr(args, "rho", 0.0) or 0.0
    return Covariance.identity() if rho == 0 else Covariance.tridiagonal(rho)


def _space(args) -> DesignSpace:
    return DesignSpace(args.p, args.t, _covariance(args))


def _load_design(path: str):
    obj = _read_json(path)
    if not isinstance(obj, dict):
        raise InputError(f"{path}: design file must hold a JSON object")
    return design_from_json(obj)


def _as_approx(d) -> ApproxDesign:
    if isinstance(d, ExactDesign):
        logging.getLogger(__name__).info("exact design replaced by its block proportions")
        return symmetrize(d)
    return d


def _opts(args) -> OptimizeOptions:
    kw = {}
    if getattr(args, "tol", None) is not None:
        kw["tolerance"] = args.tol
    if getattr(args, "max_iter", None) is not None:
        kw["max_iterations"] = args.max_iter
    try:
        return OptimizeOptions(**kw)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _grid(text: str) -> list[float]:
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise InputError(f"grid must be START:STOP:STEP, got {text!r}") from None
    if step <= 0 or stop < start:
        raise InputError("grid needs STEP > 0 and STOP >= START")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, 12) for k in range(count)]


def _tau(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise InputError(f"--tau0 must be comma-separated numbers, got {text!r}") from None


# --------------------------------------------------------------- commands

def cmd_blocks(args):
    space = _space(args)
    rows = []
    for b, (c11, c12, c22) in zip(space.blocks, space.moment_table):
        rows.append({"block": b.label(space.t), "distinct": b.distinct_count,
                     "orbit_size": b.orbit_size(space.t), "c11": c11, "c12": c12, "c22": c22})
    return {"space": space.to_json(), "n_blocks": len(rows), "blocks": rows}


def cmd_envelope(args):
    space = _space(args)
    table = space.lambda_table(args.lambda0) if args.lambda_problem else space.moment_table
    quads = {b: Quadratic(*row) for b, row in zip(space.blocks, table)}
    sol = solve(quads)
    t = space.t
    return {
        "space": space.to_json(),
        "problem": "lambda" if args.lambda_problem else "direct",
        "lambda0": args.lambda0 if args.lambda_problem else None,
        "x_star": sol.x_star,
        "y_star": sol.y_star,
        "flat": sol.flat,
        "interval": list(sol.interval) if sol.interval else None,
        "active": sorted(b.label(t) for b in sol.active),
        "weights": {b.label(t): w for b, w in sol.weights.items()},
    }


def _optimize_json(space, r):
    return {
        "space": space.to_json(),
        "criterion": r.criterion,
        "lambda0": r.lambda0,
        "weights": r.design.labelled(),
        "value": r.value,
        "x_d": design_moments(r.design).x_d,
        "certificate": r.certificate.to_json(),
        "iterations": r.iterations,
    }


def cmd_optimize(args):
    space = _space(args)
    return _optimize_json(space, optimize(space, args.criterion, args.lambda0, _opts(args)))


def cmd_certify(args):
    d = _as_approx(_load_design(args.design))
    cert = certify(d, args.criterion, args.lambda0, tol=args.tol if args.tol is not None else 1e-8)
    out = cert.to_json()
    out["lambda0"] = args.lambda0
    out["space"] = d.space.to_json()
    return out


def cmd_evaluate(args):
    d = _load_design(args.design)
    crit = args.criterion.upper()
    out = {"criterion": crit, "lambda0": args.lambda0, "space": d.space.to_json()}
    if args.tau0 is not None:
        tau = _tau(args.tau0)
        if len(tau) != d.space.t:
            raise InputError(f"--tau0 needs {d.space.t} entries, got {len(tau)}")
        cols = d if isinstance(d, ExactDesign) else materialize(d)
        value = point_prior_value(cols, tau, args.lambda0, crit)
        out.update(path="point-prior", tau0=tau.tolist(), value=value)
        if args.reference is not None:
            if args.reference == "optimal":
                ref = materialize(optimize(d.space, crit, args.lambda0).design)
            else:
                ref = _load_design(args.reference)
                ref = ref if isinstance(ref, ExactDesign) else materialize(ref)
            out["efficiency"] = value / point_prior_value(ref, tau, args.lambda0, crit)
        return out
    a = _as_approx(d)
    value = criterion_value(a, crit, args.lambda0)
    out.update(path="exchangeable", value=value, eigenvalues=spectrum(a, args.lambda0).tolist())
    if args.reference is not None:
        if args.reference == "optimal":
            ref_value = optimize(a.space, crit, args.lambda0).value
        else:
            ref_value = criterion_value(_as_approx(_load_design(args.reference)), crit, args.lambda0)
        out["efficiency"] = value / ref_value
    return out


def cmd_lambda_design(args):
    space = _space(args)
    r = optimize_lambda_design(space, args.lambda0)
    return {
        "space": space.to_json(),
        "lambda0": args.lambda0,
        "weights": r.design.labelled(),
        "y0": r.y0,
        "x0": r.x0,
        "trace_per_subject": r.trace_per_subject,
        "certificate": r.certificate.to_json(),
    }


def cmd_sweep(args):
    space = _space(args)
    rows = sweep(space, args.criterion, _grid(args.lambda0_grid), _opts(args))
    return {"space": space.to_json(), "criterion": args.criterion.upper(), "rows": rows}


def cmd_round(args):
    d = _load_design(args.design)
    if isinstance(d, ExactDesign):
        raise InputError("round expects an approximate design")
    r = round_exact(d, args.n)
    out = r.to_json()
    out["design"] = design_to_json(r.exact)
    return out


# ----------------------------------------------------------------- parser

def _space_args(sp):
    sp.add_argument("--p", type=int, required=True, help="number of periods")
    sp.add_argument("--t", type=int, required=True, help="number of treatments")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--rho", type=float, default=0.0, help="tridiagonal correlation (0 = identity)")
    g.add_argument("--sigma", metavar="FILE", help="JSON covariance: {kind, rho, matrix} or a matrix")


def _crit(sp, required=True):
    sp.add_argument("--criterion", required=required, type=str.upper, choices=["A", "D", "E", "T"])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="propcross", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("blocks", help="list symmetric blocks and their moments")
    _space_args(sp)
    sp.set_defaults(func=cmd_blocks)

    sp = sub.add_parser("envelope", help="solve the minimax game over the block quadratics")
    _space_args(sp)
    sp.add_argument("--lambda-problem", action="store_true", help="use the carryover-constant quadratics")
    sp.add_argument("--lambda0", type=float, default=0.0)
    sp.set_defaults(func=cmd_envelope)

    sp = sub.add_parser("optimize", help="optimal block weights with certificate")
    _space_args(sp)
    _crit(sp)
    sp.add_argument("--lambda0", type=float, default=0.0)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-iter", type=int)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("certify", help="check a design against the equivalence theorem")
    sp.add_argument("--design", required=True, metavar="FILE")
    _crit(sp)
    sp.add_argument("--lambda0", type=float, default=0.0)
    sp.add_argument("--tol", type=float)
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("evaluate", help="criterion value and efficiency of a design")
    sp.add_argument("--design", required=True, metavar="FILE")
    _crit(sp)
    sp.add_argument("--lambda0", type=float, default=0.0)
    sp.add_argument("--tau0", metavar="CSV", help="evaluate under this single parameter value")
    sp.add_argument("--reference", metavar="optimal|FILE")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("lambda-design", help="design for estimating the carryover constant")
    _space_args(sp)
    sp.add_argument("--lambda0", type=float, required=True)
    sp.set_defaults(func=cmd_lambda_design)

    sp = sub.add_parser("sweep", help="optimal designs over a grid of lambda0")
    _space_args(sp)
    _crit(sp)
    sp.add_argument("--lambda0-grid", required=True, metavar="START:STOP:STEP")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-iter", type=int)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("round", help="exact design with n subjects")
    sp.add_argument("--design", required=True, metavar="FILE")
    sp.add_argument("--n", type=int, required=True)
    sp.set_defaults(func=cmd_round)
    return ap


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = lambda msg, *a, **k: print(f"warning: {msg}", file=sys.stderr)
            out = args.func(args)
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.certificate is not None:
            print(dumps({"error": str(exc), "certificate": exc.certificate.to_json()}), file=stdout)
        return EXIT_NONCONVERGENCE
    except (InputError, DesignError, SequenceError, CovarianceError, EnvelopeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(dumps(out), file=stdout)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
