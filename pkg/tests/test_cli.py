import json
import subprocess
import sys

import pytest

from dualnest import __version__
from dualnest.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, main


@pytest.fixture
def small_spec(tmp_path):
    def make(**extra):
        spec = {"window": 800}
        spec.update(extra)
        path = tmp_path / f"spec{len(list(tmp_path.glob('spec*')))}.json"
        path.write_text(json.dumps(spec))
        return str(path)
    return make


def _load(path):
    return json.loads(path.read_text())


def test_rays_writes_json_and_svg(tmp_path):
    code = main(["rays", "--c-re", "0", "--c-im", "1", "--limb", "1/3", "--out", str(tmp_path)])
    assert code == EXIT_OK
    doc = _load(tmp_path / "rays.json")
    assert doc["meta"]["tool"] == "dualnest"
    assert doc["meta"]["version"] == __version__
    assert "annulus_convention" in doc["meta"]
    assert doc["meta"]["config"]["out"] is None
    assert (tmp_path / "rays.svg").read_text().lstrip().startswith("<?xml")
    assert (tmp_path / "equipotentials.json").exists()


def test_tableau_outputs(tmp_path):
    code = main(["tableau", "--limb", "1/3", "--depth", "4", "--width", "12", "--out", str(tmp_path)])
    assert code == EXIT_OK
    csv = (tmp_path / "tableau.csv").read_text().splitlines()
    assert csv[0].startswith("#")
    body = [line for line in csv if not line.startswith("#")]
    assert len(body) == 1 + 5
    assert (tmp_path / "verdicts.json").exists() and (tmp_path / "children.json").exists()


def test_modulus_fixture(tmp_path):
    assert main(["modulus", "round", "--grid", "128", "--out", str(tmp_path)]) == EXIT_OK
    doc = _load(tmp_path / "modulus.json")
    assert doc["value"] == pytest.approx(1 / (2 * 3.141592653589793), rel=0.02)
    assert [n for n, _ in doc["refinement_history"]] == [64, 128]


def test_modulus_region_file(tmp_path):
    region = tmp_path / "region.json"
    t = [i / 64 for i in range(64)]
    import math
    outer = [[2 * math.cos(2 * math.pi * s), 2 * math.sin(2 * math.pi * s)] for s in t]
    inner = [[math.cos(2 * math.pi * s), math.sin(2 * math.pi * s)] for s in t]
    region.write_text(json.dumps({"outer": outer, "inner": inner}))
    assert main(["modulus", str(region), "--grid", "128", "--out", str(tmp_path)]) == EXIT_OK


@pytest.mark.parametrize("argv", [
    ["rays", "--limb", "1/0"],
    ["rays", "--angles", "x/3", "--limb", "1/3"],
    ["puzzle"],
    ["modulus"],
    ["modulus", "round", "--grid", "100"],
    ["nest", "--batches", "0"],
    ["nest", "--mode", "other"],
    ["frobnicate"],
    ["modulus", "no-such-file.json"],
])
def test_usage_errors_exit_1(tmp_path, argv, capsys):
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


def test_invalid_spec_is_a_usage_error(tmp_path, small_spec):
    assert main(["nest", "--mode", "synthetic", "--spec", small_spec(branching=1), "--out", str(tmp_path)]) == EXIT_USAGE


def test_computation_failure_exits_2(tmp_path, capsys):
    region = tmp_path / "crossing.json"
    region.write_text(json.dumps({"outer": [[1, -1], [1, 0], [1, 1], [0, 1], [-1, 1], [-1, 0], [-1, -1], [0, -1]],
                                  "inner": [[1.37, -0.3], [1.37, 0.3], [-1.37, 0.3], [-1.37, -0.3]]}))
    assert main(["modulus", str(region), "--grid", "128", "--out", str(tmp_path)]) == EXIT_FAILURE
    assert "Disconnected" in capsys.readouterr().err


def test_too_shallow_synthetic_window_exits_2(tmp_path, small_spec):
    assert main(["nest", "--mode", "synthetic", "--spec", small_spec(), "--batches", "5",
                 "--out", str(tmp_path)]) == EXIT_FAILURE


def test_synthetic_nest_success(tmp_path, small_spec):
    assert main(["nest", "--mode", "synthetic", "--spec", small_spec(), "--batches", "3",
                 "--out", str(tmp_path)]) == EXIT_OK
    doc = _load(tmp_path / "divergence.json")
    assert doc["achieved_batches"] == 3 and doc["violations"] == []
    assert doc["running_total"]["value"] >= 1.5
    assert (tmp_path / "nest.json").exists() and (tmp_path / "divergence.svg").exists()


def test_planted_violation_exits_3(tmp_path, small_spec, capsys):
    spec = small_spec(violations=[{"kind": "onestep", "annulus": 40}])
    assert main(["nest", "--mode", "synthetic", "--spec", spec, "--batches", "3",
                 "--out", str(tmp_path)]) == EXIT_VIOLATION
    assert "Lemma onestep" in capsys.readouterr().err


def test_repeated_runs_are_byte_identical(tmp_path, small_spec):
    spec = small_spec()
    runs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["nest", "--mode", "synthetic", "--spec", spec, "--batches", "3", "--out", str(out)]) == 0
        assert main(["modulus", "squares", "--grid", "128", "--out", str(out)]) == 0
        runs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert runs[0].keys() == runs[1].keys()
    assert {"nest.json", "divergence.json", "divergence.svg", "modulus.json", "modulus.svg"} <= set(runs[0])
    for name in runs[0]:
        assert runs[0][name] == runs[1][name], name


def test_console_script_runs(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dualnest.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert __version__ in proc.stdout
