"""Command-line front end.

    symflow check FILE --what=symmetry|constant|liouville|chart|reduced
    symflow estimate-lambda FILE
    symflow ovsjannikov FILE --at x,y,...[,t]
    symflow ham-deviate FILE --u0 ... --t-span t0,t1 --out series.csv

Exit codes: 0 when every verdict passes, 1 when one fails or a check
cannot be carried out, 2 for usage and schema errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import warnings

import numpy as np

from symflow import conserved, coords, hamiltonian, symmetry
from symflow import expr as ex
from symflow.errors import SchemaError, SingularJacobianError, SymflowError
from symflow.numint import IntegratorConfig
from symflow.system_file import fixture_names, fixture_path, load

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
CHECKS = ("symmetry", "constant", "liouville", "chart", "reduced")


class UsageError(Exception):
    pass


def _numbers(text, what):
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from exc


def write_atomic(path, text: str) -> None:
    """Write via a temporary file in the same directory and rename."""
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".symflow-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json(payload) -> str:
    return json.dumps(payload, indent=2, allow_nan=True) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def _select(table, name, what):
    if not table:
        raise UsageError(f"the file declares no {what}")
    if name is None:
        return list(table.values())
    if name not in table:
        raise UsageError(f"no {what} named {name!r}; available: {', '.join(table)}")
    return [table[name]]


# ---------------------------------------------------------------------------
# check


def _check_symmetry(spec, args):
    ds, sampler = spec.system, spec.sampler(args.points)
    tol = args.tol if args.tol is not None else symmetry.DEFAULT_TOL
    out = []
    for entry in _select(spec.symmetries, args.name, "symmetries"):
        if entry.kind == "lambda":
            rep = symmetry.check_lambda(ds, entry.field, entry.lam, sampler, tol, entry.guards)
        elif entry.kind == "Lambda":
            rep = symmetry.check_capital_lambda(ds, entry.field, entry.Lambda, sampler, tol, entry.guards)
        else:
            rep = symmetry.check_standard(ds, entry.field, sampler, tol, entry.guards)
        out.append({"name": entry.name, "kind": entry.kind, **rep.to_dict()})
    return out


def _check_constant(spec, args):
    ds, sampler = spec.system, spec.sampler(args.points)
    tol = args.tol if args.tol is not None else conserved.DEFAULT_TOL
    out = []
    for entry in _select(spec.constants, args.name, "constants"):
        rep = conserved.check_constant_pointwise(ds, entry.expr, sampler, tol, entry.guards)
        out.append({"name": entry.name, **rep.to_dict()})
        if spec.trajectory:
            drift = conserved.check_drift(ds, entry.expr, spec.trajectory["u0"], spec.trajectory["t_span"])
            out.append({"name": entry.name, **drift.to_dict()})
    return out


def _check_liouville(spec, args):
    if not spec.liouville:
        raise UsageError("the file declares no liouville block")
    ds, sampler = spec.system, spec.sampler(args.points)
    tol = args.tol if args.tol is not None else conserved.DEFAULT_TOL
    if "psi" in spec.liouville:
        psi, sources, guards = spec.liouville["psi"], [], ()
    else:
        entries = [spec.constants[n] for n in spec.liouville["constants"]]
        sources = [e.expr for e in entries]
        guards = tuple(g for e in entries for g in e.guards)
        psi = conserved.liouville_field(ds, sources)
    rep = conserved.check_liouville_field(ds, psi, sampler, tol, guards)
    out = [{"psi": [str(c) for c in psi.phi], **rep.to_dict()}]
    if sources:
        orth = conserved.check_cross_orthogonality(ds, psi, sources, sampler, guards=guards)
        out.append(orth.to_dict())
    return out


def _chart_field(spec):
    entry = spec.chart
    if entry is None:
        raise UsageError("the file declares no chart")
    return entry, spec.symmetry(entry.symmetry).field


def _check_chart(spec, args):
    entry, X = _chart_field(spec)
    tol = args.tol if args.tol is not None else coords.DEFAULT_TOL
    rep = coords.verify_chart(X, entry.chart, spec.sampler(args.points), tol, spec.system.positive)
    return [rep.to_dict()]


def _check_reduced(spec, args):
    entry, X = _chart_field(spec)
    tol = args.tol if args.tol is not None else coords.DEFAULT_TOL
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = coords.check_reduced_structure(spec.system, X, entry.chart, spec.sampler(args.points), tol)
    payload = rep.to_dict()
    if caught:
        payload["warnings"] = [str(w.message) for w in caught]
    if rep.flagged:
        payload["explanation"] = (
            f"the time derivative of {', '.join(rep.flagged)} changes along the symmetry, "
            "so it depends on the rectifying coordinate"
        )
    out = [payload]
    if spec.trajectory and (entry.W is not None or entry.Z is not None):
        series = coords.map_trajectory_to_chart(
            spec.system, entry.chart, spec.trajectory["u0"], spec.trajectory["t_span"], W=entry.W, Z=entry.Z
        )
        worst = series.max_residual()
        out.append({
            "check": "declared_reduced_rhs",
            "t_span": list(spec.trajectory["t_span"]),
            "residuals": series.residuals,
            "grid_consistency": series.grid_consistency,
            "tolerance": tol,
            "verdict": "pass" if worst <= tol else "fail",
        })
    return out


_CHECKERS = {
    "symmetry": _check_symmetry,
    "constant": _check_constant,
    "liouville": _check_liouville,
    "chart": _check_chart,
    "reduced": _check_reduced,
}


def cmd_check(args) -> int:
    spec = load(args.file)
    reports = _CHECKERS[args.what](spec, args)
    ok = all(r["verdict"] == "pass" for r in reports)
    payload = {
        "system": spec.name,
        "what": args.what,
        "seed": spec.seed,
        "reports": reports,
        "verdict": "pass" if ok else "fail",
    }
    write_atomic(args.out, _json(payload))
    return EXIT_PASS if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# estimate-lambda


def cmd_estimate_lambda(args) -> int:
    spec = load(args.file)
    ds = spec.system
    entry = _select(spec.symmetries, args.name, "symmetries")[0]
    sampler = spec.sampler(args.points)
    env = sampler.for_system(ds)
    lam, defect, ok = symmetry.estimate_lambda_batch(ds, entry.field, env)
    header = list(ds.names) + ["lambda_hat", "defect"]
    columns = [env[n] for n in ds.names] + [lam, defect]
    if entry.lam is not None:
        declared, ok_l = ex.evaluate_batch(symmetry.lambda_expr(ds, entry.lam), env)
        header.append("lambda_declared")
        columns.append(np.broadcast_to(declared, lam.shape))
        ok = ok & ok_l
    rows = np.column_stack(columns)[ok]
    write_atomic(args.out, _csv(header, rows))
    if rows.size == 0:
        print("no usable points", file=sys.stderr)
        return EXIT_FAIL
    worst = float(np.max(defect[ok]))
    fits = worst <= args.tol
    verdict = "a scalar λ fits" if fits else "no scalar λ fits"
    print(f"{verdict}: max defect {worst:.3e} over {rows.shape[0]} points (tol {args.tol:g})", file=sys.stderr)
    return EXIT_PASS if fits else EXIT_FAIL


# ---------------------------------------------------------------------------
# ovsjannikov


def cmd_ovsjannikov(args) -> int:
    spec = load(args.file)
    ds = spec.system
    block = spec.ovsjannikov or {"constants": list(spec.constants)}
    if args.at is not None:
        at = _numbers(args.at, "--at")
    elif "at" in block:
        at = block["at"]
    else:
        raise UsageError("--at is required (no default point in the file)")
    if len(at) not in (ds.n, ds.n + 1):
        raise UsageError(f"--at needs {ds.n} values, optionally followed by the time")
    pt = ds.point(at[: ds.n], at[ds.n] if len(at) > ds.n else 0.0)
    names = block["constants"]
    if len(names) != ds.n:
        raise UsageError(f"{ds.n} constants are needed, the file has {len(names)}")
    kappas = [spec.constants[n].expr for n in names]
    payload = {"system": spec.name, "point": pt.to_dict(), "constants": names, "tolerance": args.tol}
    try:
        res = conserved.ovsjannikov_construct(ds, kappas, pt)
    except SingularJacobianError as exc:
        payload.update({
            "error": str(exc),
            "condition_number": exc.condition_number,
            "dependent": [names[i] for i in exc.dependent],
            "verdict": "fail",
        })
        write_atomic(args.out, _json(payload))
        return EXIT_FAIL
    ok = bool(np.all(res.residuals <= args.tol))
    payload.update({
        "p": res.p.tolist(),
        "fields": {f"X{a + 1}": dict(zip(ds.variables, res.fields[a].tolist())) for a in range(ds.n)},
        "residuals": res.residuals.tolist(),
        "condition_number": res.condition_number,
        "identity_error": res.identity_error,
        "verdict": "pass" if ok else "fail",
    })
    write_atomic(args.out, _json(payload))
    return EXIT_PASS if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# ham-deviate


def cmd_ham_deviate(args) -> int:
    spec = load(args.file)
    hs = spec.hamiltonian
    if hs is None:
        raise UsageError("the file declares no hamiltonian block")
    traj = spec.trajectory or {}
    u0 = _numbers(args.u0, "--u0") if args.u0 else traj.get("u0")
    span = _numbers(args.t_span, "--t-span") if args.t_span else traj.get("t_span")
    if u0 is None or span is None:
        raise UsageError("--u0 and --t-span are required (no trajectory block in the file)")
    if len(u0) != hs.n or len(span) != 2:
        raise UsageError(f"--u0 needs {hs.n} values and --t-span two")
    cfg = IntegratorConfig(n_out=args.grid)
    series = hamiltonian.track_generating_function(
        hs, u0, tuple(span), cfg, spec.closed_forms, spec.invariants
    )
    header, data = series.table()
    write_atomic(args.out, _csv(header, data))
    return EXIT_PASS


def cmd_fixtures(args) -> int:
    for name in fixture_names():
        print(fixture_path(name))
    return EXIT_PASS


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="symflow", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="run a pointwise or trajectory check and write a JSON report")
    p.add_argument("file", help="system file, or the name of a packaged fixture")
    p.add_argument("--what", choices=CHECKS, required=True)
    p.add_argument("--name", help="symmetry or constant to check (default: all)")
    p.add_argument("--tol", type=float)
    p.add_argument("--points", type=int, default=500)
    p.add_argument("--out", help="report path (default: stdout)")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("estimate-lambda", help="least-squares scalar lambda per sampled point (CSV)")
    p.add_argument("file")
    p.add_argument("--name")
    p.add_argument("--points", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-8, help="defect threshold for the summary")
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate_lambda)

    p = sub.add_parser("ovsjannikov", help="symmetries from n constants of motion at a point (JSON)")
    p.add_argument("file")
    p.add_argument("--at", help="comma-separated state values, optionally followed by the time")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ovsjannikov)

    p = sub.add_parser("ham-deviate", help="G and its time derivative along a trajectory (CSV)")
    p.add_argument("file")
    p.add_argument("--u0")
    p.add_argument("--t-span", dest="t_span")
    p.add_argument("--grid", type=int, default=201, help="number of output grid points")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ham_deviate)

    p = sub.add_parser("fixtures", help="list the packaged system files")
    p.set_defaults(func=cmd_fixtures)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, UsageError, FileNotFoundError) as exc:
        print(f"symflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SymflowError as exc:
        print(f"symflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
