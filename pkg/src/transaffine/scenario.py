"""Scenario documents: validation against the bundled schema and construction of the geometric objects."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

import jsonschema

from .connection import (
    AffineConnection,
    MetricField,
    connection_from_bundle_like_metric,
    levi_civita,
    pullback_connection,
)
from .expr import ExpressionError, parse_value
from .geometry import FoliatedDomain, VectorField

DEFAULT_TOLERANCES = {"check": 1e-8, "geodesic": 1e-8, "jacobi": 1e-6, "conjugacy": 1e-6}
DEFAULT_STEP = 0.01
DEFAULT_SAMPLES = 100
DEFAULT_SEED = 0


class ScenarioError(ValueError):
    """Invalid scenario; ``pointer`` is a JSON pointer to the offending location."""

    def __init__(self, message: str, pointer: str = ""):
        self.pointer = pointer
        super().__init__(f"{pointer or '/'}: {message}")


def load_schema(name: str) -> dict:
    text = resources.files("transaffine").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


SCHEMA_NAMES = ("scenario", "check_report", "geodesic", "jacobi", "conjugacy_report", "probe_report", "manifest")


def _pointer(path) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


def validate_document(doc: Any, schema_name: str) -> None:
    schema = load_schema(schema_name)
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        e = errors[0]
        path = list(e.absolute_path)
        if e.validator == "additionalProperties" and isinstance(e.instance, dict):
            extra = sorted(set(e.instance) - set(e.schema.get("properties", {})))
            if extra:
                path = path + [extra[0]]
        raise ScenarioError(e.message, _pointer(path))


def _expr(value, names, pointer):
    try:
        return parse_value(value, names)
    except ExpressionError as exc:
        raise ScenarioError(str(exc), pointer) from exc


def _field(items, names, pointer):
    return VectorField(tuple(_expr(v, names, f"{pointer}/{i}") for i, v in enumerate(items)))


@dataclass
class Scenario:
    raw: dict
    domain: FoliatedDomain
    connection: AffineConnection
    metric: MetricField | None
    tasks: list[dict]
    seed: int
    samples: int
    step: float
    tolerances: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    @property
    def name(self) -> str:
        return self.raw["name"]


def build_domain(doc: dict) -> FoliatedDomain:
    names = doc["coord_names"]
    n, q = doc["dim"], doc["codim"]
    if len(names) != n:
        raise ScenarioError(f"expected {n} coordinate names", "/coord_names")
    if not 0 < q <= n:
        raise ScenarioError("codimension must lie in 1..dim", "/codim")
    if len(doc["submersion"]) != q:
        raise ScenarioError(f"expected {q} submersion components", "/submersion")
    for key, count in (("vertical_frame", n - q), ("horizontal_frame", q)):
        if len(doc[key]) != count:
            raise ScenarioError(f"expected {count} fields", f"/{key}")
        for i, row in enumerate(doc[key]):
            if len(row) != n:
                raise ScenarioError(f"expected {n} components", f"/{key}/{i}")
    if len(doc["box"]) != n:
        raise ScenarioError(f"expected {n} intervals", "/box")
    for i, (a, b) in enumerate(doc["box"]):
        if not a < b:
            raise ScenarioError("interval must be non-empty", f"/box/{i}")
    periodic = doc.get("periodic")
    if periodic is not None and len(periodic) != n:
        raise ScenarioError(f"expected {n} flags", "/periodic")
    base_names = doc.get("base_coord_names")
    if base_names is not None and len(base_names) != q:
        raise ScenarioError(f"expected {q} base coordinate names", "/base_coord_names")
    try:
        dom = FoliatedDomain(
            coord_names=tuple(names),
            submersion=tuple(_expr(s, names, f"/submersion/{i}") for i, s in enumerate(doc["submersion"])),
            vertical_frame=tuple(_field(r, names, f"/vertical_frame/{i}") for i, r in enumerate(doc["vertical_frame"])),
            horizontal_frame=tuple(
                _field(r, names, f"/horizontal_frame/{i}") for i, r in enumerate(doc["horizontal_frame"])
            ),
            box=tuple(tuple(b) for b in doc["box"]),
            periodic=tuple(periodic) if periodic else (),
            base_coord_names=tuple(base_names) if base_names else (),
            section=None,
            base_box=tuple(tuple(b) for b in doc["base_box"]) if "base_box" in doc else None,
            name=doc["name"],
        )
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(str(exc), "") from exc
    if "section" in doc:
        if len(doc["section"]) != n:
            raise ScenarioError(f"expected {n} components", "/section")
        sec = tuple(_expr(s, dom.base_coord_names, f"/section/{i}") for i, s in enumerate(doc["section"]))
        object.__setattr__(dom, "section", sec)
    return dom


def _symbols(mapping: dict, n: int, names, pointer) -> dict:
    out = {}
    for key, value in mapping.items():
        parts = key.split(",")
        try:
            idx = tuple(int(p) for p in parts)
        except ValueError:
            idx = ()
        if len(idx) != 3 or not all(0 <= i < n for i in idx):
            raise ScenarioError(f"bad index triple {key!r} (want 'lam,nu,mu' with entries < {n})", f"{pointer}/{key}")
        out[idx] = _expr(value, names, f"{pointer}/{key}")
    return out


def _metric(rows, names, pointer) -> MetricField:
    n = len(names)
    if len(rows) != n or any(len(r) != n for r in rows):
        raise ScenarioError(f"metric must be {n}x{n}", pointer)
    g = [[_expr(v, names, f"{pointer}/{i}/{j}") for j, v in enumerate(r)] for i, r in enumerate(rows)]
    try:
        return MetricField(tuple(tuple(r) for r in g))
    except ValueError as exc:
        raise ScenarioError(str(exc), pointer) from exc


def build_connection(spec: dict, dom: FoliatedDomain, pointer: str = "/connection"):
    """Returns (connection, metric or None)."""
    kind = spec["kind"]
    names = dom.coord_names
    n = dom.n
    if kind == "flat":
        return AffineConnection.flat(n), None
    if kind == "christoffel":
        return AffineConnection(n, _symbols(spec["symbols"], n, names, f"{pointer}/symbols"), "christoffel"), None
    if kind == "levi_civita":
        g = _metric(spec["metric"], names, f"{pointer}/metric")
        return levi_civita(g), g
    if kind == "bundle_like_metric":
        g = _metric(spec["metric"], names, f"{pointer}/metric")
        try:
            return connection_from_bundle_like_metric(g, dom), g
        except ValueError as exc:
            raise ScenarioError(str(exc), f"{pointer}/metric") from exc
    if kind == "pullback":
        base = AffineConnection(
            dom.q, _symbols(spec["base_symbols"], dom.q, dom.base_coord_names, f"{pointer}/base_symbols"), "base"
        )
        aux_spec = spec.get("auxiliary", {"kind": "flat"})
        if aux_spec["kind"] not in ("flat", "christoffel"):
            raise ScenarioError("auxiliary connection must be flat or christoffel", f"{pointer}/auxiliary/kind")
        aux, _ = build_connection(aux_spec, dom, f"{pointer}/auxiliary")
        try:
            return pullback_connection(base, dom, aux), None
        except ValueError as exc:
            raise ScenarioError(str(exc), pointer) from exc
    raise ScenarioError(f"unknown connection kind {kind!r}", f"{pointer}/kind")


def build_scenario(doc: dict, overrides: dict | None = None) -> Scenario:
    validate_document(doc, "scenario")
    overrides = overrides or {}
    dom = build_domain(doc)
    conn, metric = build_connection(doc["connection"], dom)
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(doc.get("tolerances", {}))
    if overrides.get("tol") is not None:
        tol["check"] = float(overrides["tol"])
    return Scenario(
        raw=doc,
        domain=dom,
        connection=conn,
        metric=metric,
        tasks=list(doc.get("tasks", [])),
        seed=int(overrides["seed"] if overrides.get("seed") is not None else doc.get("seed", DEFAULT_SEED)),
        samples=int(overrides["samples"] if overrides.get("samples") is not None else doc.get("samples", DEFAULT_SAMPLES)),
        step=float(overrides["step"] if overrides.get("step") is not None else doc.get("step", DEFAULT_STEP)),
        tolerances=tol,
    )


def load_scenario(path, overrides: dict | None = None) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", "") from exc
    return build_scenario(doc, overrides)
