import json

import pytest

from kontsevich.cli import main
from kontsevich.graph import enumerate_graphs
from kontsevich.mvf import Multivector, PolyCoeff
from kontsevich.pdo import PolyDiffOp, StarSeries

D = 2
ONE = PolyCoeff(D, {(0, 0): 1})
POISSON = Multivector(D, 2, {(0, 1): ONE})
DX1 = Multivector(D, 1, {(0,): ONE})
DX2 = Multivector(D, 1, {(1,): ONE})
X1DX1 = Multivector(D, 1, {(0,): PolyCoeff(D, {(1, 0): 1})})


@pytest.fixture
def files(tmp_path):
    out = {}
    for name, mv in [("pi", POISSON), ("dx1", DX1), ("dx2", DX2), ("x1dx1", X1DX1),
                     ("zero", Multivector(D, 2))]:
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(mv.to_json()))
        out[name] = str(path)
    out["cache"] = str(tmp_path / "cache.json")
    return out


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_graphs(capsys):
    code, out, _ = run(capsys, "graphs", "1", "2", "2", "--format", "text")
    lines = out.splitlines()[1:]
    assert code == 0
    assert lines == [g.encode() for g in enumerate_graphs(1, 2, 2)] and len(lines) == 2
    code, out, _ = run(capsys, "graphs", "1", "0", "0")
    assert code == 0 and json.loads(out)["result"] == ["1 0 : "]


def test_argument_errors(capsys):
    assert run(capsys, "graphs", "-1", "0")[0] == 2
    assert run(capsys, "graphs", "1", "2", "--samples", "0")[0] == 2
    assert run(capsys, "nonsense")[0] == 2
    assert run(capsys)[0] == 2


def test_weight(capsys, files):
    args = ("weight", "1 2 : (1->-1),(1->-2)", "--samples", "20000", "--seed", "42")
    code, out, _ = run(capsys, *args)
    assert code == 0
    assert run(capsys, *args)[1] == out
    result = json.loads(out)
    assert result["config"]["seed"] == 42
    assert abs(result["result"]["estimate"]["value"] - 0.5) < 5 * result["result"]["estimate"]["stderr"]

    code, out, _ = run(capsys, "weight", "1 2 : (1->-1)", "--cache", files["cache"])
    assert code == 0 and json.loads(out)["result"]["estimate"]["value"] == 0.0
    assert "1 2 : (1->-1)" in json.loads(open(files["cache"]).read())["weights"]


@pytest.mark.parametrize("bad", ["1 2 : (1->", "x", "1 1 : (-1->1)"])
def test_weight_malformed(capsys, bad):
    assert run(capsys, "weight", bad)[0] == 3


def test_malformed_inputs(capsys, files, tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert run(capsys, "star", str(broken))[0] == 3
    assert run(capsys, "star", str(tmp_path / "absent.json"))[0] == 3
    assert run(capsys, "star", files["dx1"])[0] == 3
    assert run(capsys, "star", files["pi"], "--d", "3")[0] == 3


def test_star(capsys, files):
    code, out, err = run(capsys, "star", files["pi"], "--cache", files["cache"])
    assert code == 4 and "1 2 : (1->-1),(1->-2)" in err

    code, out, _ = run(capsys, "star", files["pi"], "--cache", files["cache"], "--fill", "--order", "1")
    assert code == 0
    series = StarSeries.from_json(json.loads(out)["result"]["series"])
    assert len(series.coeffs) == 2
    expected = (PolyDiffOp.from_indices(D, [[0], [1]]) - PolyDiffOp.from_indices(D, [[1], [0]]))
    assert (series.coeffs[1] - expected * 0.5).max_abs() < 1e-8

    code, out, _ = run(capsys, "star", files["zero"], "--order", "2")
    assert code == 0
    assert StarSeries.from_json(json.loads(out)["result"]["series"]) == StarSeries.undeformed(D, 2)


def test_uprime(capsys, files):
    code, out, _ = run(capsys, "uprime", files["dx1"], files["zero"], "--order", "1", "--fill")
    assert code == 0
    coeffs = json.loads(out)["result"]["series"]["coefficients"]
    assert PolyDiffOp.from_json(coeffs[0]) == PolyDiffOp.from_indices(D, [[0]])


def test_certify(capsys, files, tmp_path):
    base = ("certify", files["dx1"], files["dx2"], files["pi"], "--cache", files["cache"],
            "--fill", "--samples", "2000000", "--seed", "0")
    code, out, _ = run(capsys, *base)
    cert = json.loads(out)["result"]
    assert code == 0 and cert["certified"] and max(cert["residuals"]) < 1e-3

    anti = PolyDiffOp.from_indices(D, [[0], [1]]) - PolyDiffOp.from_indices(D, [[1], [0]])
    bump = tmp_path / "anti.json"
    bump.write_text(json.dumps(anti.to_json()))
    code, out, _ = run(capsys, *base, "--perturb", str(bump))
    assert code == 1 and not json.loads(out)["result"]["certified"]

    code, _, err = run(capsys, "certify", files["x1dx1"], files["dx2"], files["pi"],
                       "--cache", files["cache"], "--fill")
    assert code == 2 and "precondition" in err


def test_verify_associativity(capsys, files):
    code, out, _ = run(capsys, "verify-associativity", files["pi"], "--order", "2", "--fill",
                       "--samples", "20000", "--tol", "1", "--test-degree", "2")
    report = json.loads(out)["result"]
    assert code == 0 and report["ok"] and len(report["max_defect"]) == 3


def test_deterministic(capsys, files):
    args = ("star", files["pi"], "--order", "2", "--fill", "--samples", "5000", "--seed", "7")
    first = run(capsys, *args)
    assert run(capsys, *args) == first
    assert json.loads(first[1])["config"]["seed"] == 7
