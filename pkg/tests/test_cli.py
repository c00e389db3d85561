import copy
import json
import subprocess
import sys

import pytest

from tensorquant import manifest as mf
from tensorquant.cli import (
    EXIT_ERROR,
    EXIT_FAIL,
    EXIT_INVALID,
    EXIT_PASS,
    main,
    run,
    shipped_manifest,
    shipped_manifests,
    strip_timings,
    to_json,
)
from tensorquant.expr import equiv, parse


def _minimal(**extra):
    doc = {
        "schema_version": 1,
        "name": "mini",
        "chart": {"coordinates": ["x", "y"], "domain": [[None, None], [None, None]],
                  "sample_box": [[-1, 1], [-1, 1]]},
        "metric": [["1", "0"], ["1"]],
        "fields": {"f": "x^2*y"},
        "tasks": [],
    }
    doc.update(extra)
    return doc


# -- validation ------------------------------------------------------------


@pytest.mark.parametrize("name", ["flat1", "flat2", "flat3", "sphere", "conformal"])
def test_shipped_manifests_validate(name):
    assert mf.validate(shipped_manifest(name)) == []


def test_shipped_list():
    assert shipped_manifests() == ["conformal", "flat1", "flat2", "flat3", "sphere"]


def test_unknown_field_reference():
    doc = _minimal(tasks=[{"kind": "expmap-verify", "args": {"f": "nope", "point": [0, 0], "order": 1}}])
    paths = [d.path for d in mf.validate(doc)]
    assert paths == ["tasks[0].args.f"]


def test_metric_shape_diagnostic():
    doc = _minimal(metric=[["1", "0", "0"], ["1"]])
    diags = mf.validate(doc)
    assert [d.path for d in diags] == ["metric[0]"]
    assert "upper triangle" in diags[0].message


def test_metric_row_count_diagnostic():
    doc = _minimal(metric=[["1", "0"]])
    assert [d.path for d in mf.validate(doc)] == ["metric"]


def test_parse_error_diagnostic():
    doc = _minimal(fields={"f": "x +* y"})
    diags = mf.validate(doc)
    assert diags[0].path == "fields.f" and "offset" in diags[0].message


def test_unknown_symbol_diagnostic():
    doc = _minimal(fields={"f": "x*q"})
    assert "'q'" in mf.validate(doc)[0].message


def test_all_problems_reported_together():
    doc = _minimal(
        schema_version=7,
        fields={"f": "(", "g": "z"},
        tasks=[{"kind": "teleport"}, {"kind": "poisson", "args": {"F": "f"}}],
    )
    paths = {d.path for d in mf.validate(doc)}
    assert paths == {"schema_version", "fields.f", "fields.g", "tasks[0].kind", "tasks[1].args.G"}


def test_tensor_component_diagnostics():
    doc = _minimal(tensors={"t": {"variance": "sideways", "order": 2,
                                  "components": {"x": "1", "x y": "1", "y x": "2"}}})
    paths = sorted(d.path for d in mf.validate(doc))
    assert paths == ["tensors.t.components.x", "tensors.t.components.y x", "tensors.t.variance"]


def test_non_object_manifest():
    assert mf.validate([1, 2])[0].path == "$"


# -- running ---------------------------------------------------------------


def test_empty_task_list():
    report, code = run(_minimal())
    assert code == EXIT_PASS and report["tasks"] == []


def test_sphere_christoffel_task():
    doc = shipped_manifest("sphere")
    doc["tasks"] = [{"kind": "christoffel", "args": {}}]
    report, code = run(doc)
    assert code == EXIT_PASS
    gamma = report["tasks"][0]["outputs"]["gamma"]
    box = {"th": (0.2, 2.9)}
    assert equiv(parse(gamma["th ph ph"]), parse("-sin(th)*cos(th)"), box)
    assert equiv(parse(gamma["ph th ph"]), parse("cos(th)/sin(th)"), box)
    assert set(gamma) == {"th ph ph", "ph th ph"}


def test_sphere_expmap_task():
    doc = shipped_manifest("sphere")
    doc["tasks"] = [{"kind": "expmap-verify", "args": {"f": "f", "point": [1.0, 0.3], "order": 2}}]
    report, code = run(doc)
    verdict = report["tasks"][0]["verdict"]
    assert code == EXIT_PASS and verdict["pass"] and verdict["max_rel_err"] <= 1e-5


def test_failed_expectation_gives_exit_one():
    doc = _minimal(fields={"H": "p_x^2/2 + p_y^2/2 + p_x"},
                   tasks=[{"kind": "sode-test", "args": {"hamiltonian": "H", "expect": True}}])
    report, code = run(doc)
    assert code == EXIT_FAIL and report["status"] == "fail"
    assert report["tasks"][0]["outputs"]["failing"] == ["x"]


def test_runtime_error_aborts():
    doc = _minimal(fields={"f": "x"},
                   tasks=[{"kind": "expmap-verify", "args": {"f": "f", "point": [0.0, 0.0], "order": 4}},
                          {"kind": "christoffel", "args": {}}])
    doc["config"] = {"fd": {"max_order": 3}}
    report, code = run(doc)
    assert code == EXIT_ERROR
    assert report["error"]["task"] == 0
    assert len(report["tasks"]) == 1


def test_singular_metric_is_runtime_error():
    report, code = run(_minimal(metric=[["1", "1"], ["1"]]))
    assert code == EXIT_ERROR and report["error"]["task"] is None


def test_invalid_manifest_gives_exit_two():
    report, code = run(_minimal(metric="flat"))
    assert code == EXIT_INVALID and report["diagnostics"]


def test_quantize_and_dequantize_outputs():
    report, code = run(shipped_manifest("sphere"))
    assert code == EXIT_PASS
    by_kind = {}
    for entry in report["tasks"]:
        by_kind.setdefault(entry["kind"], entry)
    coeffs = by_kind["quantize"]["outputs"]["coefficients"]
    box = {"th": (0.2, 2.9), "hbar": (0.5, 2.0)}
    assert equiv(parse(coeffs["th th"]), parse("-hbar^2"), box)
    assert equiv(parse(coeffs["th"]), parse("-hbar^2*cos(th)/sin(th)"), box)
    parts = by_kind["dequantize"]["outputs"]["parts"]
    assert parts["1"] == {}
    assert equiv(parse(parts["2"]["ph ph"]), parse("1/(2*sin(th)^2)"), box)


def test_seed_and_hbar_overrides():
    doc = shipped_manifest("flat1")
    report, _ = run(doc, seed=5, hbar=0.5)
    assert report["seed"] == 5 and report["hbar"] == 0.5


def test_report_is_deterministic():
    doc = shipped_manifest("conformal")
    a, _ = run(copy.deepcopy(doc), seed=3)
    b, _ = run(copy.deepcopy(doc), seed=3)
    assert to_json(strip_timings(a)) == to_json(strip_timings(b))


# -- serialization ---------------------------------------------------------


def test_json_numbers():
    text = to_json({"a": 0.1, "b": 1.0, "c": 1 / 3, "d": complex(1, -2), "e": float("nan"), "f": 3})
    data = json.loads(text)
    assert data["a"] == 0.1 and data["c"] == 1 / 3
    assert data["d"] == {"re": 1.0, "im": -2.0}
    assert data["e"] is None and data["f"] == 3
    assert "0.33333333333333331" in text
    assert '"b": 1.0' in text


def test_strip_timings():
    assert strip_timings({"timing_s": 1, "tasks": [{"timing_s": 2, "x": 1}]}) == {"tasks": [{"x": 1}]}


# -- entry point -----------------------------------------------------------


def test_main_validate(tmp_path, capsys):
    path = tmp_path / "m.json"
    path.write_text(json.dumps(_minimal(fields={"f": "nope("})))
    assert main(["validate", str(path)]) == EXIT_INVALID
    assert "fields.f" in capsys.readouterr().out
    assert main(["validate", "sphere"]) == EXIT_PASS


def test_main_run_writes_report(tmp_path):
    out = tmp_path / "report.json"
    assert main(["run", "flat1", "--seed", "9", "--out", str(out)]) == EXIT_PASS
    report = json.loads(out.read_text())
    assert report["seed"] == 9 and report["status"] == "pass"


def test_main_missing_file(tmp_path):
    assert main(["run", str(tmp_path / "absent.json")]) == EXIT_INVALID


def test_module_entry_point(tmp_path):
    out = tmp_path / "r.json"
    proc = subprocess.run([sys.executable, "-m", "tensorquant", "run", "flat2", "--out", str(out)],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["name"] == "flat2"
