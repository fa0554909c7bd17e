import json
import math
import subprocess
import sys

import pytest

from cmslab.cli import main


def run(*argv):
    return main(list(argv))


def exit_code(*argv):
    """Exit status whether the error is raised by argparse or returned by a command."""
    try:
        return run(*argv)
    except SystemExit as exc:
        return exc.code


def test_verify_passes(tmp_path, capsys):
    report = tmp_path / "r" / "report.json"
    code = run("verify", "--surface", "builtin:translating-sphere", "--param", "speed=0.2", "--grid", "8x8",
               "--times", "0,0.5", "--report", str(report))
    assert code == 0
    out = capsys.readouterr().out
    assert "overall PASS" in out
    doc = json.loads(report.read_text())
    assert doc["pass"] is True and doc["grid"]["times"] == [0, 0.5]


def test_verify_fails_with_impossible_tolerance(capsys):
    code = run("verify", "--surface", "builtin:torus", "--param", "minor=0.3+0.1*t", "--grid", "6x6", "--times", "0.1",
               "--tol-first", "1e-30", "--tol-third", "1e-30", "--quiet")
    assert code == 1
    assert capsys.readouterr().out == ""


def test_verify_order_four(capsys):
    code = run("verify", "--surface", "builtin:ellipsoid", "--grid", "6x6", "--times", "0", "--order", "4", "--quiet")
    assert code == 0


@pytest.mark.parametrize("argv", [
    ["verify", "--surface", "builtin:klein-bottle"],
    ["verify", "--surface", "builtin:sphere", "--param", "radius=1+"],
    ["verify", "--surface", "/nonexistent/surface.json"],
    ["fields", "--surface", "builtin:sphere", "--quantity", "vorticity"],
    ["energy", "--surface", "builtin:sphere", "--alpha-x", "1"],
    ["energy", "--surface", "builtin:sphere", "--grid", "8x8", "--alpha-x", "log(x-5)", "--alpha-y", "0",
     "--alpha-z", "0"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert run(*argv) == 2
    assert "error" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["verify", "--surface", "builtin:sphere", "--grid", "3x3"],
    ["verify", "--surface", "builtin:sphere", "--grid", "axb"],
    ["verify", "--surface", "builtin:sphere", "--times", "0,nan"],
    ["verify", "--surface", "builtin:sphere", "--param", "radius"],
    ["bogus"],
    [],
])
def test_argument_errors_exit_2(argv, capsys):
    assert exit_code(*argv) == 2


def test_bad_document_names_field(tmp_path, capsys):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"x": "u", "y": "v", "z": "0", "u": [0, 1, "clamped"], "v": [0, 1, "sideways"]}))
    assert run("verify", "--surface", str(p)) == 2
    assert "v" in capsys.readouterr().err


def test_fields(tmp_path, capsys):
    code = run("fields", "--surface", "builtin:translating-sphere", "--grid", "6x6", "--t", "0.25",
               "--quantity", "temporal_curvature,normal", "--format", "structured", "--out", str(tmp_path))
    assert code == 0
    doc = json.loads((tmp_path / "temporal_curvature.json").read_text())
    assert len(doc["components"]) == 8 and len(doc["values"]) == 36
    assert (tmp_path / "normal.json").exists()


def test_energy(tmp_path, capsys):
    out = tmp_path / "energy.json"
    code = run("energy", "--surface", "builtin:sphere", "--param", "radius=1+t", "--grid", "64x64",
               "--out", str(out))
    assert code == 0
    doc = json.loads(out.read_text())
    assert abs(doc["kinetic_energy"] / (2 * math.pi) - 1) < 1e-6
    assert abs(doc["rate_formula"] / (4 * math.pi) - 1) < 1e-6
    assert doc["alpha"] is None
    text = capsys.readouterr().out
    assert text.startswith("kinetic_energy")


def test_energy_with_force(capsys):
    code = run("energy", "--surface", "builtin:translating-sphere", "--grid", "16x16", "--t", "0.5",
               "--alpha-x", "0", "--alpha-y", "0", "--alpha-z", "1")
    assert code == 0
    values = dict(line.split() for line in capsys.readouterr().out.splitlines())
    # constant velocity 0.2 e_z against unit force: power 0.2 * area
    assert abs(float(values["power"]) - 0.2 * 4 * math.pi) < 1e-5


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "cmslab", "verify", "--surface", "builtin:torus", "--grid", "5x5",
                          "--times", "0", "--quiet"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
