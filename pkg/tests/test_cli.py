import json
import subprocess
import sys

import pytest

from transaffine import fixtures
from transaffine.cli import EXIT_ERROR, EXIT_FAIL, EXIT_OK, dumps, main
from transaffine.scenario import SCHEMA_NAMES, validate_document

QUICK = {"flat_product", "warped_product", "paraboloid", "torus_prison"}


def write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def run(tmp_path, doc, *extra, out="out"):
    path = write(tmp_path, doc)
    return main(["run", "--scenario", str(path), "--out", str(tmp_path / out), *extra])


def outputs(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


@pytest.mark.parametrize("name", sorted(QUICK))
def test_run_fixture_writes_valid_reports(tmp_path, name, capsys):
    code = run(tmp_path, fixtures.get(name))
    assert code == (EXIT_FAIL if name == "paraboloid" else EXIT_OK)
    out = tmp_path / "out"
    manifest = json.loads((out / "manifest.json").read_text())
    validate_document(manifest, "manifest")
    assert manifest["exit_code"] == code and manifest["scenario"] == name
    assert manifest["generator"] == "numpy.random.PCG64"
    for entry in manifest["tasks"]:
        for f in entry["outputs"]:
            assert (out / f).exists()
            assert "/" not in f
    assert "wrote" in capsys.readouterr().out


def test_paraboloid_report_contents(tmp_path):
    run(tmp_path, fixtures.get("paraboloid"))
    rep = json.loads((tmp_path / "out" / "00_check_transverse_affine.json").read_text())
    assert rep["verdict"] == "fail" and rep["seed"] == 3
    w = next(d for d in rep["details"] if d["label"] == "nabla_(d/dx) V[0]")
    assert w["max_residual"] == 2.0


def test_geodesic_csv_and_report(tmp_path):
    run(tmp_path, fixtures.get("warped_product"))
    out = tmp_path / "out"
    rep = json.loads((out / "02_geodesic.json").read_text())
    assert rep["verdict"] == "pass" and rep["csv"] == "02_geodesic.csv"
    lines = (out / "02_geodesic.csv").read_text().splitlines()
    assert lines[0] == "t,x_0,x_1,x_2,v_0,v_1,v_2" and len(lines) == rep["steps"] + 2


def test_rerun_is_byte_identical(tmp_path):
    doc = fixtures.get("torus_prison")
    run(tmp_path, doc, out="a")
    run(tmp_path, doc, out="b")
    assert outputs(tmp_path / "a") == outputs(tmp_path / "b")


def test_seed_override_is_recorded(tmp_path):
    run(tmp_path, fixtures.get("flat_product"), "--seed", "42", "--samples", "10")
    m = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert m["seed"] == 42 and m["overrides"] == {"seed": 42, "samples": 10}
    rep = json.loads((tmp_path / "out" / "00_check_transverse_affine.json").read_text())
    assert rep["seed"] == 42 and rep["samples"] == 10


def test_tol_override_flips_paraboloid(tmp_path):
    assert run(tmp_path, fixtures.get("paraboloid"), "--tol", "10") == EXIT_OK


def test_check_subcommand_runs_only_checks(tmp_path):
    p = write(tmp_path, fixtures.get("flat_product"))
    assert main(["check", "--scenario", str(p), "--out", str(tmp_path / "o")]) == EXIT_OK
    names = {f.name for f in (tmp_path / "o").iterdir()}
    assert names == {"00_check_transverse_affine.json", "01_check_bundle_like.json", "manifest.json"}


def test_curvature_identity_task(tmp_path):
    doc = fixtures.get("warped_product")
    doc["tasks"] = [{"kind": "check_curvature_identities"}, {"kind": "check_torsion_identity"}]
    assert run(tmp_path, doc) == EXIT_OK


def test_jacobi_task(tmp_path):
    doc = fixtures.get("sphere_fiber")
    doc["step"] = 0.01
    doc["tasks"] = [{"kind": "jacobi", "x0": [1.5707963, 0, 0], "base_v0": [0, 1], "t_span": [0, 3], "J0": [0, 0, 0], "DJ0": [1, 0, 0]}]
    assert run(tmp_path, doc) == EXIT_OK
    rep = json.loads((tmp_path / "out" / "00_jacobi.json").read_text())
    assert rep["verdict"] == "pass" and rep["transverse_residual"] <= 1e-6


def test_unknown_key_reports_pointer(tmp_path, capsys):
    doc = fixtures.get("flat_product")
    doc["bogus"] = 1
    assert run(tmp_path, doc) == EXIT_ERROR
    assert "/bogus" in capsys.readouterr().err


def test_bad_expression_reports_pointer_and_offset(tmp_path, capsys):
    doc = fixtures.get("flat_product")
    doc["submersion"][0] = "t +* x"
    assert run(tmp_path, doc) == EXIT_ERROR
    err = capsys.readouterr().err
    assert "/submersion/0" in err and "offset" in err


def test_bad_index_triple(tmp_path, capsys):
    doc = fixtures.get("flat_product")
    doc["connection"] = {"kind": "christoffel", "symbols": {"0,9,0": "1"}}
    assert run(tmp_path, doc) == EXIT_ERROR
    assert "/connection/symbols/0,9,0" in capsys.readouterr().err


def test_malformed_json_and_missing_file(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text("{ not json")
    assert main(["run", "--scenario", str(p), "--out", str(tmp_path / "o")]) == EXIT_ERROR
    assert "malformed JSON" in capsys.readouterr().err
    assert main(["run", "--scenario", str(tmp_path / "none.json")]) == EXIT_ERROR


def test_task_error_gives_exit_one_but_finishes(tmp_path):
    doc = fixtures.get("flat_product")
    doc["tasks"] = [{"kind": "geodesic", "x0": [0, 0], "v0": [1, 0, 0], "t_span": [0, 1]}, {"kind": "check_transverse_affine"}]
    assert run(tmp_path, doc) == EXIT_ERROR
    m = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert [t["status"] for t in m["tasks"]] == ["error", "pass"]


def test_fixture_check_without_metric_is_error(tmp_path):
    doc = fixtures.get("flat_product")
    doc["tasks"] = [{"kind": "check_fundamental_pair"}]
    assert run(tmp_path, doc) == EXIT_ERROR


def test_fixtures_and_schema_commands(capsys):
    assert main(["fixtures", "list"]) == EXIT_OK
    assert capsys.readouterr().out.split() == fixtures.names()
    assert main(["fixtures", "emit", "cosine_shear"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    validate_document(doc, "scenario")
    assert main(["fixtures", "emit", "nope"]) == EXIT_ERROR
    assert main(["schema"]) == EXIT_OK
    assert capsys.readouterr().out.split() == list(SCHEMA_NAMES)
    assert main(["schema", "manifest"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["type"] == "object"
    assert main(["schema", "nope"]) == EXIT_ERROR


def test_dumps_is_canonical():
    assert dumps({"b": float("nan"), "a": [1.0, float("inf")]}) == '{\n  "a": [\n    1.0,\n    null\n  ],\n  "b": null\n}\n'


def test_console_script(tmp_path):
    res = subprocess.run([sys.executable, "-m", "transaffine", "fixtures", "list"], capture_output=True, text=True)
    assert res.returncode == 0 and "cosine_shear" in res.stdout


def test_published_copies_match_the_package(capsys):
    from pathlib import Path

    root = Path(__file__).resolve().parent.parent
    for name in fixtures.names():
        main(["fixtures", "emit", name])
        assert (root / "fixtures" / f"{name}.json").read_text() == capsys.readouterr().out
    for name in SCHEMA_NAMES:
        main(["schema", name])
        assert (root / "schemas" / f"{name}.schema.json").read_text() == capsys.readouterr().out


def test_published_paraboloid_fails_its_check(tmp_path):
    from pathlib import Path

    path = Path(__file__).resolve().parent.parent / "fixtures" / "paraboloid.json"
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path)]) == EXIT_FAIL
