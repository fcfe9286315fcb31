import io
import json

import pytest

from propcross.cli import dumps, run


def call(*argv):
    out = io.StringIO()
    code = run(list(argv), stdout=out)
    text = out.getvalue()
    return code, (json.loads(text) if text.strip() else None), text


@pytest.fixture
def design_files(tmp_path):
    d1 = tmp_path / "d1.json"
    d1.write_text(json.dumps({"p": 3, "t": 3, "sigma": {"kind": "identity"}, "type": "approx",
                              "weights": {"122": 1 / 6, "123": 5 / 6}}))
    d2 = tmp_path / "d2.json"
    d2.write_text(json.dumps({"p": 3, "t": 3, "type": "approx", "weights": {"123": 1}}))
    return d1, d2


def test_optimize_e(capsys):
    code, out, _ = call("optimize", "--p", "3", "--t", "3", "--rho", "0", "--criterion", "E")
    assert code == 0
    assert out["weights"] == pytest.approx({"122": 1 / 6, "123": 5 / 6}, abs=1e-11)
    assert out["value"] == pytest.approx(29 / 36, abs=1e-11)
    assert out["certificate"]["pass"] is True
    assert set(out) >= {"space", "criterion", "lambda0", "weights", "value", "x_d",
                        "certificate", "iterations"}


def test_certify_and_evaluate(design_files):
    d1, d2 = design_files
    code, out, _ = call("certify", "--design", str(d2), "--criterion", "A", "--lambda0", "0")
    assert code == 0 and out["pass"] is True
    code, out, _ = call("evaluate", "--design", str(d1), "--criterion", "T", "--reference", "optimal")
    assert code == 0 and out["efficiency"] == pytest.approx(0.9722, abs=1e-4)
    code, out, _ = call("evaluate", "--design", str(d2), "--criterion", "E", "--reference", str(d1))
    assert out["efficiency"] == pytest.approx(0.9931, abs=1e-4)


def test_point_prior_evaluation(design_files):
    d1, _ = design_files
    code, out, _ = call("evaluate", "--design", str(d1), "--criterion", "E", "--tau0", "0,1,-1")
    assert code == 0 and out["path"] == "point-prior"
    assert out["value"] == pytest.approx(29 / 36)
    code, _, _ = call("evaluate", "--design", str(d1), "--criterion", "E", "--tau0", "1,-1")
    assert code == 2


def test_other_subcommands(design_files):
    d1, _ = design_files
    code, out, _ = call("blocks", "--p", "3", "--t", "3")
    assert code == 0 and out["n_blocks"] == 5
    code, out, _ = call("envelope", "--p", "3", "--t", "3")
    assert out["y_star"] == pytest.approx(29 / 18) and out["x_star"] == pytest.approx(0.5)
    code, out, _ = call("envelope", "--p", "3", "--t", "3", "--lambda-problem", "--lambda0", "0.2")
    assert code == 0 and out["problem"] == "lambda"
    code, out, _ = call("lambda-design", "--p", "3", "--t", "3", "--lambda0", "0.5")
    assert code == 0 and out["certificate"]["details"]["trace_matches"] is True
    code, out, _ = call("sweep", "--p", "3", "--t", "3", "--criterion", "A",
                        "--lambda0-grid", "0.38:0.40:0.02")
    assert [r["breakpoint"] for r in out["rows"]] == [False, True]
    code, out, _ = call("round", "--design", str(d1), "--n", "36")
    assert code == 0 and out["weight_error"] == 0 and len(out["columns"]) == 36


def test_byte_stable_output():
    argv = ["optimize", "--p", "4", "--t", "3", "--criterion", "A", "--lambda0", "-0.5"]
    assert call(*argv)[2] == call(*argv)[2]


def test_number_format():
    text = dumps({"b": 1 / 3, "a": [2.0, True, None]})
    assert text.index('"a"') < text.index('"b"')
    assert "0.333333333333" in text and "0.3333333333333" not in text


@pytest.mark.parametrize("argv", [
    ["blocks", "--p", "3", "--t", "3", "--rho", "0.9"],
    ["blocks", "--p", "1", "--t", "3"],
    ["optimize", "--p", "3", "--t", "3", "--criterion", "Q"],
    ["certify", "--design", "/nonexistent.json", "--criterion", "A"],
    ["sweep", "--p", "3", "--t", "3", "--criterion", "A", "--lambda0-grid", "1:0:0.1"],
    ["optimize", "--p", "3", "--t", "3", "--criterion", "A", "--tol", "-1"],
])
def test_invalid_input_exit_code(argv, capsys):
    assert call(*argv)[0] == 2
    assert capsys.readouterr().err


def test_nonconvergence_exit_code(capsys):
    code, out, _ = call("optimize", "--p", "5", "--t", "3", "--criterion", "A",
                        "--lambda0", "0.3", "--max-iter", "1")
    assert code == 3 and out["certificate"]["pass"] is False
    assert "did not certify" in capsys.readouterr().err


def test_sigma_file(tmp_path):
    f = tmp_path / "sigma.json"
    f.write_text(json.dumps([[1, 0.2, 0], [0.2, 1, 0.2], [0, 0.2, 1]]))
    code, out, _ = call("blocks", "--p", "3", "--t", "3", "--sigma", str(f))
    assert code == 0 and out["space"]["sigma"]["kind"] == "custom"


def test_outputs_feed_later_commands(tmp_path):
    _, _, text = call("optimize", "--p", "3", "--t", "3", "--rho", "0.3", "--criterion", "A",
                      "--lambda0", "0.2")
    opt = tmp_path / "opt.json"
    opt.write_text(text)
    code, out, _ = call("certify", "--design", str(opt), "--criterion", "A", "--lambda0", "0.2")
    assert code == 0 and out["pass"] is True
    assert out["space"]["sigma"]["kind"] == "tridiagonal"
    _, _, text = call("round", "--design", str(opt), "--n", "12")
    rounded = tmp_path / "rounded.json"
    rounded.write_text(text)
    code, out, _ = call("evaluate", "--design", str(rounded), "--criterion", "A", "--lambda0", "0.2",
                        "--reference", "optimal")
    assert code == 0 and out["efficiency"] == pytest.approx(1.0, abs=1e-6)
