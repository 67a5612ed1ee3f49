import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from riccert.cli import load_problem, run

ROOT = Path(__file__).resolve().parents[1]
PROBLEMS = sorted((ROOT / "problems").glob("*.toml"))

T41 = """
[problem]
kind = "riccati"
span = [0.0, 20.0]

[coefficients]
a = "1"
e = "{e}"

[theorems]
ids = ["T4.1"]
"""


def write(tmp_path, text, name="p.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_certify_exit_zero_and_file(tmp_path):
    p = write(tmp_path, T41.format(e="-0.1"))
    out = tmp_path / "out"
    assert run(["certify", str(p), "--out", str(out)]) == 0
    cert = json.loads((out / "certificate_T4.1.json").read_text())
    assert cert["verdict"] == "certified"
    assert (out / "run_info.json").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert "certificate_T4.1.json" in manifest["files"] and manifest["exit_code"] == 0


def test_certify_refuted_exit_one(tmp_path):
    p = write(tmp_path, T41.format(e="0.1"))
    assert run(["certify", str(p), "--out", str(tmp_path / "o")]) == 1


def test_missing_key_exit_three(tmp_path, capsys):
    p = write(tmp_path, '[problem]\nspan = [0, 1]\n[coefficients]\nb = "1"\n')
    assert run(["check", str(p), "--out", str(tmp_path / "o")]) == 3
    assert "'a'" in capsys.readouterr().err


@pytest.mark.parametrize("text,needle", [
    ('[problem]\nspan = [1, 0]\n[coefficients]\na = "1"\n', "span"),
    ('[problem]\nspan = [0, 1]\n[coefficients]\na = "1 +"\n', "coefficients.a"),
    ('[problem]\nspan = [0, 1]\nkind = "quartic"\n[coefficients]\na = "1"\n', "kind"),
    ('[problem]\nspan = [0, 1]\n[coefficients]\na = "1"\nz = "2"\n', "z"),
    ('[problem]\nspan = [0, 1]\n[coefficients]\na = "1"\n[theorems]\nids = ["T7"]\n', "T7"),
    ('[problem\n', "TOML"),
    ('[problem]\nspan = [0, 1]\nkind = "system3"\n[coefficients]\na12 = "1"\n', "a23"),
])
def test_input_errors(tmp_path, capsys, text, needle):
    p = write(tmp_path, text)
    assert run(["check", str(p), "--out", str(tmp_path / "o")]) == 3
    assert needle in capsys.readouterr().err


def test_bad_flags(tmp_path):
    p = write(tmp_path, T41.format(e="-0.1"))
    assert run(["check", str(p), "--theorem", "T0.0"]) == 3
    assert run(["check", str(p), "--grid", "1"]) == 3
    assert run(["nosuch", str(p)]) == 3
    assert run(["check", str(tmp_path / "missing.toml")]) == 3


def test_theorem_flag_overrides(tmp_path):
    p = write(tmp_path, T41.format(e="-0.1"))
    out = tmp_path / "o"
    assert run(["certify", str(p), "--out", str(out), "--theorem", "L2.1", "--theorem", "T4.3"]) == 0
    assert {f.name for f in out.glob("certificate_*.json")} == {"certificate_L2.1.json", "certificate_T4.3.json"}


def test_d_mode_flag(tmp_path):
    text = '[problem]\nspan = [0, 20]\n[coefficients]\na = "1"\nc = "1"\ne = "-1"\n[theorems]\nids = ["T4.5"]\n'
    p = write(tmp_path, text)
    assert run(["certify", str(p), "--out", str(tmp_path / "a")]) == 1
    assert run(["certify", str(p), "--out", str(tmp_path / "b"), "--d-mode", "paper"]) == 0


def test_deterministic_outputs(tmp_path):
    p = write(tmp_path, T41.format(e="-0.1"))
    for name in ("a", "b"):
        assert run(["report", str(p), "--out", str(tmp_path / name), "--count", "3", "--horizon", "5"]) in (0, 1)
    for f in ("certificate_T4.1.json", "verification_T4.1.json", "report.json", "summary.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    # the sidecar is the only place run-specific data goes
    assert "finished_unix" in json.loads((tmp_path / "a" / "run_info.json").read_text())
    assert "finished_unix" not in (tmp_path / "a" / "report.json").read_text()


def test_integrate_csv(tmp_path):
    text = T41.format(e="0") + '\n[initial]\nics = [[0.0, 2.0]]\n'
    p = write(tmp_path, text)
    out = tmp_path / "o"
    assert run(["integrate", str(p), "--out", str(out), "--horizon", "3"]) == 0
    lines = (out / "trajectory_0.csv").read_text().splitlines()
    assert lines[0] == "t,y,dy"
    t, y, _ = map(float, lines[-1].split(","))
    assert t == 3.0 and y == pytest.approx(6 / 10, rel=1e-7)


def test_integrate_system_csv(tmp_path):
    out = tmp_path / "o"
    assert run(["integrate", str(ROOT / "problems" / "t51_companion.toml"), "--out", str(out)]) == 0
    assert (out / "trajectory_0.csv").read_text().splitlines()[0] == "t,phi,psi,chi"


def test_integrate_stalled_exit_four(tmp_path, monkeypatch):
    import riccert.cli as cli
    real = cli.integrate
    monkeypatch.setattr(cli, "integrate", lambda *a, **k: real(*a, **{**k, "max_steps": 3}))
    p = write(tmp_path, T41.format(e="-0.1"))
    assert run(["integrate", str(p), "--out", str(tmp_path / "o")]) == 4


def test_verify_system(tmp_path):
    out = tmp_path / "o"
    assert run(["verify", str(ROOT / "problems" / "t51_companion.toml"), "--out", str(out), "--count", "3"]) == 0
    rep = json.loads((out / "verification_T5.1.json").read_text())
    assert rep["pass"] is True


def test_verify_inconclusive(tmp_path):
    assert run(["verify", str(ROOT / "problems" / "t51_inconclusive.toml"), "--out", str(tmp_path / "o")]) == 2


def test_load_problem_fields():
    cfg = load_problem(ROOT / "problems" / "t43_partition.toml")
    assert cfg.kind == "riccati" and cfg.partition == [0.0, 5.0, 10.0, 15.0, 20.0]
    assert cfg.theorems == ["T4.1", "T4.3"]


@pytest.mark.parametrize("path", PROBLEMS, ids=[p.name for p in PROBLEMS])
@pytest.mark.parametrize("command", ["check", "certify"])
def test_example_problems_exit_zero_or_two(tmp_path, path, command):
    assert run([command, str(path), "--out", str(tmp_path / "o")]) in (0, 2)


def test_module_entry_point(tmp_path):
    p = write(tmp_path, T41.format(e="0.1"))
    res = subprocess.run([sys.executable, "-m", "riccert", "certify", str(p), "--out", str(tmp_path / "o")],
                         capture_output=True, text=True)
    assert res.returncode == 1
    exe = shutil.which("riccert")
    if exe:
        assert subprocess.run([exe, "--version"], capture_output=True).returncode == 0
