"""JSON system-definition files: schema, validation and loading."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from symflow import expr as ex
from symflow.coords import AdaptedChart
from symflow.dynsys import DynamicalSystem, VectorField
from symflow.errors import ExprSyntaxError, SchemaError
from symflow.expr import Expr
from symflow.hamiltonian import HamiltonianSystem, canonical_names, ham_vector_field
from symflow.sampling import DEFAULT_SEED, Sampler
from symflow.symmetry import lambda_names

SEED_ENV = "SYMFLOW_SEED"

_EXPR = {"type": ["string", "number"]}
_EXPRS = {"type": "array", "items": _EXPR}
_NAME = {"type": "string", "pattern": "^[A-Za-z_][A-Za-z0-9_]*$"}
_NAMES = {"type": "array", "items": _NAME, "uniqueItems": True}
_NUMBERS = {"type": "array", "items": {"type": "number"}}
_SPAN = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["name", "variables", "f"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "variables": {**_NAMES, "minItems": 1},
        "time": _NAME,
        "f": {**_EXPRS, "minItems": 1},
        "positive": _NAMES,
        "box": {"type": "object", "additionalProperties": _SPAN},
        "seed": {"type": "integer", "minimum": 0},
        "symmetries": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "phi"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "phi": _EXPRS,
                    "tau": {"type": ["string", "number", "null"]},
                    "kind": {"enum": ["standard", "lambda", "Lambda"]},
                    "lambda": _EXPR,
                    "Lambda": {"type": "array", "items": _EXPRS},
                    "guards": _EXPRS,
                },
                "allOf": [
                    {"if": {"properties": {"kind": {"const": "lambda"}}, "required": ["kind"]},
                     "then": {"required": ["lambda"]}},
                    {"if": {"properties": {"kind": {"const": "Lambda"}}, "required": ["kind"]},
                     "then": {"required": ["Lambda"]}},
                ],
            },
        },
        "constants": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "expr"],
                "additionalProperties": False,
                "properties": {"name": {"type": "string"}, "expr": _EXPR, "guards": _EXPRS},
            },
        },
        "chart": {
            "type": "object",
            "required": ["w", "zeta"],
            "additionalProperties": False,
            "properties": {
                "symmetry": {"type": "string"},
                "w": _EXPRS,
                "zeta": _EXPR,
                "w_names": _NAMES,
                "zeta_name": _NAME,
                "guards": _EXPRS,
                "W": _EXPRS,
                "Z": _EXPR,
            },
        },
        "liouville": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"constants": {"type": "array", "items": {"type": "string"}}, "psi": _EXPRS},
        },
        "ovsjannikov": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"constants": {"type": "array", "items": {"type": "string"}}, "at": _NUMBERS},
        },
        "hamiltonian": {
            "type": "object",
            "required": ["m", "H"],
            "additionalProperties": False,
            "properties": {
                "m": {"type": "integer", "minimum": 1},
                "H": _EXPR,
                "G": _EXPR,
                "closed_forms": {"type": "object", "additionalProperties": _EXPR},
                "invariants": {"type": "object", "additionalProperties": _EXPR},
            },
        },
        "trajectory": {
            "type": "object",
            "required": ["u0", "t_span"],
            "additionalProperties": False,
            "properties": {"u0": _NUMBERS, "t_span": _SPAN},
        },
    },
}


@dataclass(frozen=True)
class SymmetryEntry:
    name: str
    field: VectorField
    kind: str = "standard"
    lam: Expr | None = None
    Lambda: tuple | None = None
    guards: tuple = ()


@dataclass(frozen=True)
class ConstantEntry:
    name: str
    expr: Expr
    guards: tuple = ()


@dataclass(frozen=True)
class ChartEntry:
    chart: AdaptedChart
    symmetry: str | None
    W: tuple | None
    Z: Expr | None


@dataclass
class SystemSpec:
    """A validated system file."""

    name: str
    system: DynamicalSystem
    seed: int
    box: dict
    source: str = ""
    symmetries: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    chart: ChartEntry | None = None
    liouville: dict | None = None
    ovsjannikov: dict | None = None
    hamiltonian: HamiltonianSystem | None = None
    closed_forms: dict = field(default_factory=dict)
    invariants: dict = field(default_factory=dict)
    trajectory: dict | None = None

    def sampler(self, n_points=500) -> Sampler:
        return Sampler(self.box, n_points, self.seed)

    def symmetry(self, name=None) -> SymmetryEntry:
        if name is None:
            return next(iter(self.symmetries.values()))
        return self.symmetries[name]


def _pointer(parts) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in parts)


def validate(doc) -> None:
    """Raise :class:`SchemaError` for the first violation (deterministic order)."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if not errors:
        return
    err = errors[0]
    parts = list(err.absolute_path)
    if err.validator == "required" and isinstance(err.instance, dict):
        missing = [p for p in err.validator_value if p not in err.instance]
        if missing:
            parts.append(missing[0])
    raise SchemaError(_pointer(parts), err.message)


def _parse(text, names, path) -> Expr:
    try:
        return ex.as_expr(text, names)
    except ExprSyntaxError as exc:
        raise SchemaError(path, str(exc)) from exc


def _parse_all(items, names, path):
    return tuple(_parse(t, names, f"{path}/{i}") for i, t in enumerate(items))


def _resolve_seed(doc) -> int:
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError as exc:
            raise SchemaError("/seed", f"{SEED_ENV}={env!r} is not an integer") from exc
    return int(doc.get("seed", DEFAULT_SEED))


def build(doc, source="") -> SystemSpec:
    """Validate ``doc`` and turn it into a :class:`SystemSpec`."""
    validate(doc)
    variables = tuple(doc["variables"])
    time = doc.get("time", "t")
    names = variables + (time,)
    n = len(variables)
    if time in variables:
        raise SchemaError("/time", f"time name {time!r} clashes with a variable")
    if len(doc["f"]) != n:
        raise SchemaError("/f", f"{n} variables but {len(doc['f'])} right-hand sides")
    f = _parse_all(doc["f"], names, "/f")
    for name in doc.get("positive", []):
        if name not in variables:
            raise SchemaError("/positive", f"{name!r} is not a variable")
    for name in doc.get("box", {}):
        if name not in names:
            raise SchemaError(f"/box/{name}", f"{name!r} is not a variable or the time")
    ds = DynamicalSystem(variables, f, time, frozenset(doc.get("positive", [])), doc["name"])
    spec = SystemSpec(doc["name"], ds, _resolve_seed(doc), dict(doc.get("box", {})), source)

    lam_names = lambda_names(ds)
    for i, s in enumerate(doc.get("symmetries", [])):
        path = f"/symmetries/{i}"
        if len(s["phi"]) != n:
            raise SchemaError(f"{path}/phi", f"expected {n} components, got {len(s['phi'])}")
        phi = _parse_all(s["phi"], names, f"{path}/phi")
        tau = None if s.get("tau") is None else _parse(s["tau"], names, f"{path}/tau")
        kind = s.get("kind", "standard")
        lam = _parse(s["lambda"], lam_names, f"{path}/lambda") if "lambda" in s else None
        Lambda = None
        if "Lambda" in s:
            rows = s["Lambda"]
            if len(rows) != n or any(len(r) != n for r in rows):
                raise SchemaError(f"{path}/Lambda", f"Lambda must be {n} x {n}")
            Lambda = tuple(_parse_all(r, lam_names, f"{path}/Lambda/{a}") for a, r in enumerate(rows))
        guards = _parse_all(s.get("guards", []), names, f"{path}/guards")
        spec.symmetries[s["name"]] = SymmetryEntry(s["name"], VectorField(phi, tau), kind, lam, Lambda, guards)

    for i, c in enumerate(doc.get("constants", [])):
        path = f"/constants/{i}"
        spec.constants[c["name"]] = ConstantEntry(
            c["name"], _parse(c["expr"], names, f"{path}/expr"),
            _parse_all(c.get("guards", []), names, f"{path}/guards"),
        )

    if "chart" in doc:
        spec.chart = _build_chart(doc["chart"], ds, spec)
    if "liouville" in doc:
        spec.liouville = _build_liouville(doc["liouville"], ds, spec)
    if "ovsjannikov" in doc:
        spec.ovsjannikov = _build_ovsjannikov(doc["ovsjannikov"], ds, spec)
    if "hamiltonian" in doc:
        _build_hamiltonian(doc["hamiltonian"], ds, spec)
    if "trajectory" in doc:
        tr = doc["trajectory"]
        if len(tr["u0"]) != n:
            raise SchemaError("/trajectory/u0", f"expected {n} values, got {len(tr['u0'])}")
        spec.trajectory = {"u0": list(tr["u0"]), "t_span": tuple(tr["t_span"])}
    return spec


def _known(names, table, path):
    for i, name in enumerate(names):
        if name not in table:
            raise SchemaError(f"{path}/{i}", f"unknown name {name!r}")


def _build_chart(c, ds, spec) -> ChartEntry:
    names = ds.names
    if len(c["w"]) != ds.n - 1:
        raise SchemaError("/chart/w", f"a chart needs {ds.n - 1} invariants, got {len(c['w'])}")
    w = _parse_all(c["w"], names, "/chart/w")
    for j, e in enumerate(w):
        if ds.time in e.variables:
            raise SchemaError(f"/chart/w/{j}", f"invariant {e} depends on {ds.time}")
    if "w_names" in c and len(c["w_names"]) != len(w):
        raise SchemaError("/chart/w_names", "one name per invariant expected")
    chart = AdaptedChart(
        ds.variables, w, _parse(c["zeta"], names, "/chart/zeta"), ds.time,
        _parse_all(c.get("guards", []), names, "/chart/guards"),
        tuple(c["w_names"]) if "w_names" in c else None, c.get("zeta_name", "zeta"),
    )
    symmetry = c.get("symmetry")
    if symmetry is not None and symmetry not in spec.symmetries:
        raise SchemaError("/chart/symmetry", f"unknown symmetry {symmetry!r}")
    W = Z = None
    if "W" in c:
        if len(c["W"]) != len(w):
            raise SchemaError("/chart/W", f"{len(w)} reduced right-hand sides expected")
        W = _parse_all(c["W"], chart.chart_names, "/chart/W")
    if "Z" in c:
        Z = _parse(c["Z"], chart.chart_names, "/chart/Z")
    return ChartEntry(chart, symmetry, W, Z)


def _build_liouville(block, ds, spec) -> dict:
    if ("constants" in block) == ("psi" in block):
        raise SchemaError("/liouville", "give exactly one of 'constants' or 'psi'")
    if "constants" in block:
        if len(block["constants"]) != ds.n - 1:
            raise SchemaError("/liouville/constants", f"{ds.n - 1} constants expected")
        _known(block["constants"], spec.constants, "/liouville/constants")
        return {"constants": list(block["constants"])}
    if len(block["psi"]) != ds.n:
        raise SchemaError("/liouville/psi", f"expected {ds.n} components")
    return {"psi": VectorField(_parse_all(block["psi"], ds.names, "/liouville/psi"))}


def _build_ovsjannikov(block, ds, spec) -> dict:
    names = block.get("constants", list(spec.constants))
    if len(names) != ds.n:
        raise SchemaError("/ovsjannikov/constants", f"{ds.n} constants expected, got {len(names)}")
    _known(names, spec.constants, "/ovsjannikov/constants")
    out = {"constants": list(names)}
    if "at" in block:
        if len(block["at"]) not in (ds.n, ds.n + 1):
            raise SchemaError("/ovsjannikov/at", f"expected {ds.n} values (optionally plus time)")
        out["at"] = list(block["at"])
    return out


def _build_hamiltonian(h, ds, spec) -> None:
    m = h["m"]
    if ds.n != 2 * m:
        raise SchemaError("/hamiltonian/m", f"{ds.n} variables but 2m = {2 * m}")
    if ds.variables != canonical_names(m):
        raise SchemaError("/variables", f"Hamiltonian systems use {list(canonical_names(m))}")
    H = _parse(h["H"], ds.names, "/hamiltonian/H")
    G = None
    if "G" in h:
        G = _parse(h["G"], ds.names, "/hamiltonian/G")
        if ds.time in G.variables:
            raise SchemaError("/hamiltonian/G", f"G must not depend on {ds.time}")
    hs = HamiltonianSystem(m, H, G, ds.time, spec.name)
    _check_hamilton_equations(ds, hs)
    spec.hamiltonian = hs
    for key in ("closed_forms", "invariants"):
        allowed = (ds.time, "G0") if key == "closed_forms" else ds.names + ("G",)
        for name, text in h.get(key, {}).items():
            _parse(text, allowed, f"/hamiltonian/{key}/{name}")
        setattr(spec, key, dict(h.get(key, {})))


def _check_hamilton_equations(ds, hs, tol=1e-9) -> None:
    """The declared ``f`` must be ``J grad H``; compared at a few seeded points."""
    env = Sampler(n_points=16, seed=1).draw(ds.variables, ds.time)
    derived = ham_vector_field(hs).f
    for a, (fa, ga) in enumerate(zip(ds.f, derived)):
        va, ok_a = ex.evaluate_batch(fa, env)
        vb, ok_b = ex.evaluate_batch(ga, env)
        ok = np.broadcast_to(ok_a & ok_b, (16,))
        gap = np.abs(np.broadcast_to(va, (16,)) - np.broadcast_to(vb, (16,)))[ok]
        if gap.size and np.max(gap) > tol * (1 + np.max(np.abs(np.broadcast_to(vb, (16,))[ok]))):
            raise SchemaError(f"/f/{a}", f"does not match Hamilton's equations for H (expected {ga})")


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("symflow") / "fixtures" / name))


def fixture_names() -> list:
    return sorted(p.name for p in (resources.files("symflow") / "fixtures").iterdir() if p.name.endswith(".json"))


def resolve(path) -> Path:
    """A path on disk, or the name of a packaged fixture."""
    p = Path(path)
    if p.exists():
        return p
    candidate = fixture_path(p.name if p.suffix else p.name + ".json")
    if candidate.exists():
        return candidate
    raise FileNotFoundError(f"no such system file: {path}")


def load(path) -> SystemSpec:
    p = resolve(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError("", f"invalid JSON: {exc}") from exc
    return build(doc, str(p))
