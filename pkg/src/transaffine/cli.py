"""Command line runner: ``transaffine run|check|fixtures|schema``.

Exit codes: 0 when every task completed and every check passed, 2 when a check
failed, 1 on any error (invalid scenario, failed task).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__, fixtures
from .checks import (
    check_bundle_like,
    check_curvature_identities,
    check_fundamental_pair,
    check_torsion_identity,
    check_transverse_affine,
)
from .connection import recalibrate
from .dynamics import (
    VerticalTangentError,
    detect_transverse_conjugate,
    integrate_geodesic,
    integrate_jacobi,
    transverse_geodesic_residual,
    transverse_jacobi_residual,
    write_jacobi_csv,
    write_trajectory_csv,
)
from .geometry import GENERATOR_NAME
from .probes import ProbeSpec, probe_disprisonment, probe_pseudoconvexity
from .scenario import SCHEMA_NAMES, Scenario, ScenarioError, build_scenario, load_schema, validate_document

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
BASE_MATCH = 1e-4


class TaskError(RuntimeError):
    pass


def _clean(obj):
    """Replace non-finite floats by None and numpy scalars by Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# task execution


def _initial_velocity(sc: Scenario, task: dict, x0: np.ndarray) -> np.ndarray:
    if "v0" in task and "base_v0" in task:
        raise TaskError("give either v0 or base_v0, not both")
    if "v0" in task:
        v0 = np.asarray(task["v0"], float)
        if v0.shape != (sc.domain.n,):
            raise TaskError(f"v0 must have {sc.domain.n} entries")
        return v0
    if "base_v0" in task:
        w = np.asarray(task["base_v0"], float)
        if w.shape != (sc.domain.q,):
            raise TaskError(f"base_v0 must have {sc.domain.q} entries")
        return sc.domain.lift_at(x0) @ w
    raise TaskError("task needs v0 or base_v0")


def _start(sc: Scenario, task: dict):
    x0 = np.asarray(task["x0"], float)
    if x0.shape != (sc.domain.n,):
        raise TaskError(f"x0 must have {sc.domain.n} entries")
    return x0, _initial_velocity(sc, task, x0)


def _carrier(sc: Scenario, task: dict):
    if task.get("recalibrate", True):
        return recalibrate(sc.connection, sc.domain), "recalibrated"
    return sc.connection, "as_given"


def _run_check(sc: Scenario, task: dict):
    samples = int(task.get("samples", sc.samples))
    tol = float(task.get("tolerance", sc.tolerances["check"]))
    kind = task["kind"]
    if kind == "check_transverse_affine":
        rep = check_transverse_affine(sc.connection, sc.domain, samples, sc.seed, tol)
    elif kind == "check_bundle_like":
        rep = check_bundle_like(sc.connection, sc.domain, samples, sc.seed, tol)
    elif kind == "check_torsion_identity":
        rep = check_torsion_identity(sc.connection, sc.domain, samples, sc.seed, tol)
    elif kind == "check_curvature_identities":
        tol = float(task.get("tolerance", 1e-7))
        rep = check_curvature_identities(sc.connection, sc.domain, samples, sc.seed, tol)
    elif kind == "check_fundamental_pair":
        if sc.metric is None:
            raise TaskError("check_fundamental_pair needs a metric-based connection")
        rep = check_fundamental_pair(sc.connection, sc.metric, sc.domain, samples, sc.seed, tol)
    else:  # pragma: no cover - schema prevents this
        raise TaskError(f"unknown check {kind}")
    return rep.to_dict(), rep.passed, {}


def _run_geodesic(sc: Scenario, task: dict, stem: str):
    x0, v0 = _start(sc, task)
    conn, label = _carrier(sc, task)
    step = float(task.get("step", sc.step))
    traj = integrate_geodesic(conn, x0, v0, task["t_span"], step, sc.domain)
    tol = float(task.get("tolerance", sc.tolerances["geodesic"]))
    try:
        res = transverse_geodesic_residual(sc.connection, sc.domain, traj)
        verdict = "pass" if res <= tol else "fail"
    except VerticalTangentError:
        res, verdict = None, "not_applicable"
    doc = {
        "termination": traj.termination,
        "steps": len(traj) - 1,
        "step": step,
        "t_span": list(task["t_span"]),
        "x0": x0,
        "v0": v0,
        "final_t": float(traj.times[-1]),
        "final_x": traj.xs[-1],
        "final_v": traj.vs[-1],
        "connection": label,
        "transverse_residual": res,
        "tolerance": tol,
        "verdict": verdict,
        "csv": f"{stem}.csv",
    }
    return doc, verdict != "fail", {f"{stem}.csv": lambda p: write_trajectory_csv(traj, p)}


def _run_jacobi(sc: Scenario, task: dict, stem: str):
    x0, v0 = _start(sc, task)
    conn, _ = _carrier(sc, task)
    step = float(task.get("step", sc.step))
    traj = integrate_geodesic(conn, x0, v0, task["t_span"], step, sc.domain)
    n = sc.domain.n
    J0, DJ0 = np.asarray(task["J0"], float), np.asarray(task["DJ0"], float)
    if J0.shape != (n,) or DJ0.shape != (n,):
        raise TaskError(f"J0 and DJ0 must have {n} entries")
    sol = integrate_jacobi(conn, traj, J0, DJ0)
    tol = float(task.get("tolerance", sc.tolerances["jacobi"]))
    res = transverse_jacobi_residual(sc.connection, sc.domain, traj, sol)
    verdict = "pass" if res <= tol else "fail"
    doc = {
        "steps": len(traj) - 1,
        "step": step,
        "J0": J0,
        "DJ0": DJ0,
        "transverse_residual": res,
        "tolerance": tol,
        "verdict": verdict,
        "csv": f"{stem}.csv",
    }
    return doc, verdict == "pass", {f"{stem}.csv": lambda p: write_jacobi_csv(sol, p)}


def _same_parameters(a, b) -> bool:
    return len(a) == len(b) and all(abs(s - t) <= BASE_MATCH and k == m for (s, k), (t, m) in zip(a, b))


def _run_conjugacy(sc: Scenario, task: dict):
    x0, v0 = _start(sc, task)
    conn, _ = _carrier(sc, task)
    step = float(task.get("step", sc.step))
    window = task["window"]
    traj = integrate_geodesic(conn, x0, v0, window, step, sc.domain)
    compare = bool(task.get("compare_base", sc.domain.section is not None))
    rep = detect_transverse_conjugate(
        sc.connection,
        sc.domain,
        traj,
        window,
        tol=float(task.get("tolerance", sc.tolerances["conjugacy"])),
        compare_base=compare,
    )
    doc = rep.to_dict()
    agrees = _same_parameters(rep.parameters, rep.base_parameters) if compare else None
    doc["agrees_with_base"] = agrees
    doc["verdict"] = "fail" if agrees is False else "pass"
    return doc, agrees is not False, {}


def _run_probe(sc: Scenario, task: dict):
    spec = ProbeSpec(
        K=task["K"],
        t_max=float(task["t_max"]),
        step=float(task.get("step", sc.step)),
        direction_grid=task.get("direction_grid", [16]),
        grid_points=int(task.get("grid_points", 3)),
        escape_radius=task.get("escape_radius"),
        starts=int(task.get("starts", 8)),
        seed=sc.seed,
    )
    if len(spec.K) != sc.domain.q:
        raise TaskError(f"K must have {sc.domain.q} intervals")
    fn = probe_pseudoconvexity if task["kind"] == "pseudoconvexity" else probe_disprisonment
    rep = fn(sc.connection, sc.domain, spec)
    # probes report evidence; their verdict does not count as a check failure
    return rep.to_dict(), True, {}


CHECK_KINDS = {
    "check_transverse_affine",
    "check_bundle_like",
    "check_fundamental_pair",
    "check_torsion_identity",
    "check_curvature_identities",
}
REPORT_SCHEMA = {
    "geodesic": "geodesic",
    "jacobi": "jacobi",
    "conjugacy": "conjugacy_report",
    "pseudoconvexity": "probe_report",
    "disprisonment": "probe_report",
}


def run_task(sc: Scenario, task: dict, stem: str):
    """Returns (report document, passed, {csv name: writer})."""
    kind = task["kind"]
    if kind in CHECK_KINDS:
        doc, ok, extra = _run_check(sc, task)
        schema = "check_report"
    elif kind == "geodesic":
        doc, ok, extra = _run_geodesic(sc, task, stem)
    elif kind == "jacobi":
        doc, ok, extra = _run_jacobi(sc, task, stem)
    elif kind == "conjugacy":
        doc, ok, extra = _run_conjugacy(sc, task)
    else:
        doc, ok, extra = _run_probe(sc, task)
    schema = "check_report" if kind in CHECK_KINDS else REPORT_SCHEMA[kind]
    doc = _clean(dict(doc, kind=kind, task=stem, scenario=sc.name))
    validate_document(doc, schema)
    return doc, ok, extra


def execute(sc: Scenario, out_dir: Path, scenario_bytes: bytes, overrides: dict, only_checks: bool = False) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    entries = []
    any_fail = any_error = False
    tasks = sc.tasks
    if only_checks:
        tasks = [t for t in tasks if t["kind"] in CHECK_KINDS] or [{"kind": "check_transverse_affine"}]
    for i, task in enumerate(tasks):
        stem = f"{i:02d}_{task['kind']}"
        entry = {"index": i, "kind": task["kind"], "outputs": []}
        try:
            doc, ok, extra = run_task(sc, task, stem)
            for name, writer in extra.items():
                writer(out_dir / name)
                entry["outputs"].append(name)
            write_atomic(out_dir / f"{stem}.json", dumps(doc))
            entry["outputs"].insert(0, f"{stem}.json")
            entry["status"] = "pass" if ok else "fail"
            any_fail |= not ok
            _say(f"{stem}: {entry['status']}")
        except Exception as exc:  # noqa: BLE001 - any task failure is reported, then the run continues
            entry["status"] = "error"
            entry["error"] = f"{type(exc).__name__}: {exc}"
            any_error = True
            _say(f"{stem}: error: {exc}", err=True)
        entries.append(entry)
    code = EXIT_ERROR if any_error else EXIT_FAIL if any_fail else EXIT_OK
    manifest = {
        "scenario": sc.name,
        "scenario_sha256": hashlib.sha256(scenario_bytes).hexdigest(),
        "tool_version": __version__,
        "seed": sc.seed,
        "generator": GENERATOR_NAME,
        "overrides": {k: v for k, v in overrides.items() if v is not None},
        "tasks": entries,
        "wall_clock_seconds": round(time.perf_counter() - t0, 6),
        "exit_code": code,
    }
    validate_document(_clean(manifest), "manifest")
    write_atomic(out_dir / "manifest.json", dumps(manifest))
    return code


def _say(msg: str, err: bool = False) -> None:
    print(msg, file=sys.stderr if err else sys.stdout)


def _read_scenario(path: str) -> tuple[bytes, dict]:
    data = Path(path).read_bytes()
    try:
        return data, json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        where = f" (line {exc.lineno}, column {exc.colno})" if isinstance(exc, json.JSONDecodeError) else ""
        raise ScenarioError(f"malformed JSON{where}: {exc}", "") from exc


def _overrides(args) -> dict:
    return {"tol": args.tol, "step": args.step, "seed": args.seed, "samples": args.samples}


def cmd_run(args, only_checks: bool = False) -> int:
    try:
        raw, doc = _read_scenario(args.scenario)
        sc = build_scenario(doc, _overrides(args))
    except FileNotFoundError as exc:
        _say(f"error: {exc}", err=True)
        return EXIT_ERROR
    except ScenarioError as exc:
        _say(f"error: {exc}", err=True)
        return EXIT_ERROR
    out = Path(args.out) if args.out else Path(tempfile.mkdtemp(prefix="transaffine-"))
    code = execute(sc, out, raw, _overrides(args), only_checks=only_checks)
    _say(f"wrote {out}")
    return code


def cmd_fixtures(args) -> int:
    if args.action == "list":
        for name in fixtures.names():
            print(name)
        return EXIT_OK
    if not args.name:
        _say("error: fixtures emit needs a name", err=True)
        return EXIT_ERROR
    try:
        doc = fixtures.get(args.name)
    except KeyError as exc:
        _say(f"error: {exc.args[0]}", err=True)
        return EXIT_ERROR
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def cmd_schema(args) -> int:
    if not args.name:
        for name in SCHEMA_NAMES:
            print(name)
        return EXIT_OK
    if args.name not in SCHEMA_NAMES:
        _say(f"error: unknown schema {args.name!r}", err=True)
        return EXIT_ERROR
    sys.stdout.write(json.dumps(load_schema(args.name), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="transaffine", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "execute every task of a scenario"), ("check", "run only the check tasks")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", help="output directory (default: a fresh temporary directory)")
        p.add_argument("--tol", type=float, help="override the check tolerance")
        p.add_argument("--step", type=float, help="override the integration step")
        p.add_argument("--seed", type=int, help="override the sampling seed")
        p.add_argument("--samples", type=int, help="override the number of sample points")
    p = sub.add_parser("fixtures", help="list or print built-in scenarios")
    p.add_argument("action", choices=["list", "emit"])
    p.add_argument("name", nargs="?")
    p = sub.add_parser("schema", help="print a bundled JSON schema")
    p.add_argument("name", nargs="?")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "check":
        return cmd_run(args, only_checks=True)
    if args.command == "fixtures":
        return cmd_fixtures(args)
    return cmd_schema(args)


if __name__ == "__main__":
    sys.exit(main())
