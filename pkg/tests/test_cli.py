import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from symflow.cli import main
from symflow.errors import SchemaError
from symflow.system_file import SEED_ENV, build, fixture_path, load, validate


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def minimal(**extra):
    doc = {"name": "m", "variables": ["x", "y"], "f": ["y", "-x"]}
    doc.update(extra)
    return doc


class TestCheck:
    def test_example1_symmetry(self, capsys):
        code, out, _ = run(["check", "example1", "--what=symmetry", "--name=X"], capsys)
        payload = json.loads(out)
        assert code == 0 and payload["verdict"] == "pass"
        report = payload["reports"][0]
        for key in ("check", "params", "seed", "points_sampled", "excluded_points",
                    "max_residual", "mean_residual", "worst_point", "verdict"):
            assert key in report

    def test_example4_reduced(self, capsys):
        code, out, _ = run(["check", "example4", "--what=reduced"], capsys)
        payload = json.loads(out)
        assert code == 1
        rep = payload["reports"][0]
        assert rep["classification"] == "not-reduced" and rep["flagged"] == ["w3"]
        assert "explanation" in rep

    @pytest.mark.parametrize("fixture, what", [
        ("example1", "constant"), ("example1", "liouville"), ("example1", "chart"), ("example1", "reduced"),
        ("example2", "symmetry"), ("example2", "constant"), ("example2", "chart"), ("example2", "reduced"),
        ("example3", "symmetry"), ("example4", "symmetry"), ("planar_rotation", "liouville"),
    ])
    def test_passing_checks(self, capsys, fixture, what):
        code, out, _ = run(["check", fixture, f"--what={what}", "--points=200"], capsys)
        assert code == 0, out

    def test_tolerance_below_residual_fails(self, capsys):
        code, out, _ = run(["check", "example4", "--what=symmetry", "--tol=1e-300", "--points=50"], capsys)
        payload = json.loads(out)
        assert code == 1 and payload["verdict"] == "fail"
        assert 0 < payload["reports"][0]["max_residual"] <= 1e-10

    def test_unknown_name(self, capsys):
        code, _, err = run(["check", "example1", "--what=symmetry", "--name=nope"], capsys)
        assert code == 2 and "nope" in err

    def test_missing_block(self, capsys):
        code, _, _ = run(["check", "example3", "--what=chart"], capsys)
        assert code == 2

    def test_missing_file(self, capsys, tmp_path):
        code, _, _ = run(["check", str(tmp_path / "none.json"), "--what=symmetry"], capsys)
        assert code == 2

    def test_missing_f(self, capsys, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"name": "bad", "variables": ["x"]}))
        code, _, err = run(["check", str(path), "--what=symmetry"], capsys)
        assert code == 2 and "/f" in err

    def test_invalid_json(self, capsys, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{")
        assert run(["check", str(path), "--what=symmetry"], capsys)[0] == 2

    def test_report_file_is_deterministic(self, tmp_path, capsys):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for target in (a, b):
            assert run(["check", "example1", "--what=symmetry", "--points=100", f"--out={target}"], capsys)[0] == 0
        assert a.read_bytes() == b.read_bytes()
        assert not list(tmp_path.glob(".symflow-*"))

    def test_seed_override(self, capsys, monkeypatch):
        base = json.loads(run(["check", "example1", "--what=symmetry", "--name=X", "--points=20"], capsys)[1])
        monkeypatch.setenv(SEED_ENV, "7")
        other = json.loads(run(["check", "example1", "--what=symmetry", "--name=X", "--points=20"], capsys)[1])
        assert base["seed"] == 20111 and other["seed"] == 7
        assert base["reports"][0]["worst_point"] != other["reports"][0]["worst_point"]

    def test_usage_error_from_argparse(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["check", "example1", "--what=everything"])
        assert info.value.code == 2


class TestEstimateLambda:
    def test_example3(self, tmp_path, capsys):
        out = tmp_path / "lam.csv"
        code, _, err = run(["estimate-lambda", "example3", "--points=200", f"--out={out}"], capsys)
        header, data = read_csv(out)
        assert code == 0 and "a scalar λ fits" in err
        assert header == ["q1", "q2", "p1", "p2", "t", "lambda_hat", "defect", "lambda_declared"]
        assert data.shape[0] == 200
        assert np.max(np.abs(data[:, 5] - 1.5 * data[:, 2] ** 2)) <= 1e-8
        assert np.max(data[:, 6]) <= 1e-10

    def test_example1_standard(self, tmp_path, capsys):
        out = tmp_path / "lam.csv"
        assert run(["estimate-lambda", "example1", "--name=X", f"--out={out}"], capsys)[0] == 0
        _, data = read_csv(out)
        assert np.max(np.abs(data[:, 4])) <= 1e-10

    def test_example4(self, tmp_path, capsys):
        out = tmp_path / "lam.csv"
        code, _, err = run(["estimate-lambda", "example4", f"--out={out}"], capsys)
        _, data = read_csv(out)
        assert code == 1 and "no scalar λ fits" in err
        assert np.all(data[:, 6] > 0)

    def test_crlf(self, tmp_path, capsys):
        out = tmp_path / "lam.csv"
        run(["estimate-lambda", "example3", "--points=3", f"--out={out}"], capsys)
        assert out.read_bytes().count(b"\r\n") == 4


class TestOvsjannikov:
    def test_default_point(self, capsys):
        code, out, _ = run(["ovsjannikov", "example1"], capsys)
        payload = json.loads(out)
        assert code == 0 and payload["identity_error"] <= 1e-12
        assert max(payload["residuals"]) <= 1e-6 and len(payload["fields"]) == 3

    def test_explicit_point(self, capsys):
        code, out, _ = run(["ovsjannikov", "example1", "--at", "1.1,0.4,0.9,0.2"], capsys)
        assert code == 0 and json.loads(out)["point"]["t"] == 0.2

    def test_bad_point(self, capsys):
        assert run(["ovsjannikov", "example1", "--at", "1,2"], capsys)[0] == 2
        assert run(["ovsjannikov", "example1", "--at", "a,b,c"], capsys)[0] == 2

    def test_singular(self, capsys, tmp_path):
        doc = minimal(constants=[{"name": "a", "expr": "x"}, {"name": "b", "expr": "x^2"}])
        path = tmp_path / "dep.json"
        path.write_text(json.dumps(doc))
        code, out, _ = run(["ovsjannikov", str(path), "--at", "0.5,0.3"], capsys)
        payload = json.loads(out)
        assert code == 1 and payload["dependent"] == ["a", "b"] and payload["verdict"] == "fail"


class TestHamDeviate:
    def test_example3(self, tmp_path, capsys):
        out = tmp_path / "dev.csv"
        assert run(["ham-deviate", "example3", f"--out={out}"], capsys)[0] == 0
        header, data = read_csv(out)
        assert header[:3] == ["t", "G", "Gdot"] and "G_exact" in header
        assert np.max(np.abs(data[:, 1] - (1 + data[:, 0]) ** -0.5)) <= 1e-6

    def test_free_particle(self, tmp_path, capsys):
        out = tmp_path / "dev.csv"
        assert run(["ham-deviate", "free_particle", "--grid=11", f"--out={out}"], capsys)[0] == 0
        _, data = read_csv(out)
        assert data.shape == (11, 3) and np.all(data[:, 1] == data[0, 1])

    def test_example4_invariant(self, tmp_path, capsys):
        out = tmp_path / "dev.csv"
        assert run(["ham-deviate", "example4", "--t-span", "0,10", f"--out={out}"], capsys)[0] == 0
        header, data = read_csv(out)
        I = data[:, header.index("I")]
        assert np.max(np.abs(I - I[0])) <= 1e-6

    def test_overrides(self, tmp_path, capsys):
        out = tmp_path / "dev.csv"
        run(["ham-deviate", "example3", "--u0", "0,0,2,0", "--t-span", "0,1", "--grid=5", f"--out={out}"], capsys)
        _, data = read_csv(out)
        assert data[0, 1] == 2.0 and data[-1, 0] == 1.0

    def test_not_hamiltonian(self, capsys):
        assert run(["ham-deviate", "example1"], capsys)[0] == 2


class TestSchema:
    def test_fixtures_load(self):
        for name in ("example1", "example2", "example3", "example4"):
            assert load(name).name == name
        assert fixture_path("example1.json").exists()

    @pytest.mark.parametrize("doc, pointer", [
        ({"name": "m", "variables": ["x"]}, "/f"),
        (minimal(f=["y"]), "/f"),
        (minimal(extra=1), ""),
        (minimal(symmetries=[{"name": "X", "phi": ["1"]}]), "/symmetries/0/phi"),
        (minimal(symmetries=[{"name": "X", "phi": ["1", "0"], "kind": "lambda"}]), "/symmetries/0"),
        (minimal(f=["y +", "x"]), "/f/0"),
        (minimal(f=["w", "x"]), "/f/0"),
        (minimal(chart={"w": ["x", "y"], "zeta": "x"}), "/chart/w"),
        (minimal(hamiltonian={"m": 1, "H": "p1^2/2"}), "/variables"),
    ])
    def test_errors_carry_pointers(self, doc, pointer):
        with pytest.raises(SchemaError) as info:
            build(doc)
        assert info.value.path == pointer or info.value.path.startswith(pointer)

    def test_hamilton_equations_must_match(self):
        doc = {"name": "h", "variables": ["q1", "p1"], "f": ["p1", "q1"], "hamiltonian": {"m": 1, "H": "(p1^2 + q1^2)/2"}}
        with pytest.raises(SchemaError) as info:
            build(doc)
        assert info.value.path == "/f/1"

    def test_time_dependent_generator_rejected(self):
        doc = {"name": "h", "variables": ["q1", "p1"], "f": ["p1", "-q1"],
               "hamiltonian": {"m": 1, "H": "(p1^2 + q1^2)/2", "G": "q1*t"}}
        with pytest.raises(SchemaError):
            build(doc)

    def test_valid_minimal(self):
        validate(minimal())


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "symflow", "fixtures"], capture_output=True, text=True)
    assert proc.returncode == 0 and "example1.json" in proc.stdout
