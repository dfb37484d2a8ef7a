import json

import pytest

from complexbrw.cli import EXIT_CONFIG, EXIT_FAILURE, EXIT_INDETERMINATE, EXIT_OK, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_classify_ndjson(capsys):
    code, out, _ = run(capsys, "classify", "--lambda", "0.3,0.4", "--lambda", "0.2,1.3")
    rows = [json.loads(line) for line in out.splitlines()]
    assert code == EXIT_OK and [r["tag"] for r in rows] == ["Interior", "Exterior"]


def test_classify_csv(capsys):
    code, out, _ = run(capsys, "--format", "csv", "classify", "--lambda", "0.3,0.4")
    assert code == EXIT_OK and out.splitlines()[1].startswith("0.3,0.4,Interior")


def test_classify_table_model(capsys):
    code, out, _ = run(capsys, "classify", "--model", "table", "--table", "[[0.5,[0.0]],[0.5,[0.0,0.0]]]",
                       "--lambda", "0,0")
    assert code == EXIT_OK and json.loads(out)["tag"]


def test_strict_indeterminate(capsys):
    # m(lambda) = cosh(lambda) vanishes at i pi/2
    code, _, _ = run(capsys, "--strict", "classify", "--model", "table", "--table", "[[1.0,[-1.0,1.0]]]",
                     "--lambda", "0,1.5707963267948966")
    assert code == EXIT_INDETERMINATE


def test_config_precedence(capsys, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('seed = 4\n[classify]\nlambda = ["0.2,1.3"]\n')
    code, out, _ = run(capsys, "--config", str(cfg), "classify")
    assert json.loads(out)["tag"] == "Exterior"
    code, out, _ = run(capsys, "--config", str(cfg), "classify", "--lambda", "0.3,0.4")
    assert json.loads(out)["tag"] == "Interior"


def test_config_errors(capsys, tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("nonsense_key = 1\n")
    assert run(capsys, "--config", str(bad), "classify", "--lambda", "0,0")[0] == EXIT_CONFIG
    assert run(capsys, "--config", str(tmp_path / "missing.toml"), "classify", "--lambda", "0,0")[0] == EXIT_CONFIG
    assert run(capsys, "classify")[0] == EXIT_CONFIG
    assert run(capsys, "classify", "--model", "table", "--table", "[[0.7,[0]]]", "--lambda", "0,0")[0] == EXIT_CONFIG


def test_phase_formats(capsys):
    code, out, _ = run(capsys, "phase", "--res", "11,11")
    assert code == EXIT_OK and len(out.splitlines()) == 122
    assert run(capsys, "--format", "ndjson", "phase", "--res", "11,11")[0] == EXIT_CONFIG


def test_simulate_and_diagnose(capsys, tmp_path):
    path = tmp_path / "t.ndjson"
    code, _, _ = run(capsys, "--out", str(path), "simulate", "--lambda", "0.3,0.4", "--gens", "12",
                     "--reps", "100", "--alpha", "1.5")
    assert code == EXIT_OK
    recs = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(recs) == 100 * 13 and recs[0]["z"] == [1.0, 0.0]
    code, out, _ = run(capsys, "diagnose", "--traces", str(path), "--p", "1.5", "--tail", "2,4")
    rep = json.loads(out)
    assert code == EXIT_OK and rep["verdict"] in ("Converged", "Diverged", "Indeterminate")
    assert "tail_survey" in rep


def test_simulate_population_cap_is_failure(capsys):
    code, _, err = run(capsys, "simulate", "--lambda", "0.5,0", "--gens", "12", "--reps", "1", "--cap", "100")
    assert code == EXIT_FAILURE and "PopulationCapExceeded" in err


def test_spine(capsys):
    code, out, _ = run(capsys, "spine", "--lambda", "0.4,0.7301692821256899", "--steps", "5", "--reps", "3")
    rows = [json.loads(line) for line in out.splitlines()]
    assert code == EXIT_OK and len(rows) == 4 and rows[-1]["summary"]
    assert rows[-1]["alpha"] == pytest.approx(2.0)


def test_tv(capsys):
    code, out, _ = run(capsys, "tv", "--alpha", "1.5", "--delta", "1.5", "--check")
    rep = json.loads(out)
    assert code == EXIT_OK and rep["u0"] == 8 and rep["passed"]
    code, out, _ = run(capsys, "tv", "--alpha", "1.9", "--delta", "3", "--u0", "1", "--check")
    assert code == EXIT_FAILURE and not json.loads(out)["passed"]


def test_similarity(capsys):
    code, out, _ = run(capsys, "similarity", "--from-complex", "--lambda", "0.3,0.4", "--gens", "6",
                       "--reps", "2", "--compare")
    rep = json.loads(out)
    assert code == EXIT_OK and rep["max_discrepancy"] <= 1e-10
    assert run(capsys, "similarity", "--lambda", "0.3,0.4")[0] == EXIT_CONFIG
