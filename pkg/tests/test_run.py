import csv
import json
import logging
import math
import sys

import pytest

from plcrit.lib import criticality, mingrowth, suites
from plcrit.lib.errors import ConvergenceError
from plcrit.main import run

EIG = """\
problem:
  p: 2
  d: 1
  domain: [0, 1]
command:
  name: eig
  level: [0, 1]
  resolution: 1001
"""

CRITICAL = """\
problem:
  p: 2
  d: 1
  domain: [-inf, inf]
exhaustion:
  levels: 10
  resolution: 201
command:
  name: critical
"""

VALIDATE = """\
problem:
  p: 2
command:
  name: validate
  suites: [vector-inequality]
"""

CERTIFY = """\
problem:
  p: 2
  d: 3
  domain: [0, inf]
exhaustion:
  levels: 6
  reference: 5
  resolution: 201
command:
  name: certify
  omega2: {k_lo: 0, k_hi: 2}
  B: [3, 4]
  u: {kind: power, c: 1, s: -1}
"""

SOLVE_NEGATIVE = """\
problem:
  p: 2
  d: 1
  domain: [0, 1]
  potential: {kind: constant, c: -20}
command:
  name: solve
  level: [0, 1]
  boundary: [1, 0]
  resolution: 101
"""


@pytest.fixture(autouse=True)
def restore_logging():
    root = logging.getLogger()
    saved = (root.handlers[:], root.level)
    yield
    for handler in root.handlers[:]:
        if handler not in saved[0]:
            handler.close()
    root.handlers[:] = saved[0]
    root.setLevel(saved[1])


def write_config(tmp_path, text, name="run.yaml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def read_report(out, name):
    with open(out / f"{name}.json", encoding="utf-8") as f:
        return json.load(f)


def test_main_usage_without_config(monkeypatch, capsys):
    monkeypatch.setattr(sys, "argv", ["plcrit"])
    assert run.main() == 1
    assert "Usage" in capsys.readouterr().out


def test_main_rejects_unknown_flag(capsys):
    assert run.main(["--bogus"]) == 1


def test_eig_run_writes_reports(tmp_path, capsys):
    out = tmp_path / "out"
    config = write_config(tmp_path, EIG)
    assert run.main(["--config", config, "--out", str(out)]) == 0
    report = read_report(out, "eig")
    assert report["command"] == "eig"
    assert report["seed"] == 0
    assert len(report["config_hash"]) == 64
    assert report["result"]["lambda"] == pytest.approx(math.pi ** 2, rel=1e-4)
    assert report["result"]["method"] == "direct"
    with open(out / "eigenfunction.csv", newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["node", "value"]
    assert len(rows) == 1002
    assert (out / "plcrit.log").exists()
    assert "eig: exit 0" in capsys.readouterr().out


def test_runs_are_byte_identical(tmp_path):
    out = tmp_path / "out"
    config = write_config(tmp_path, EIG)
    assert run.main(["--config", config, "--out", str(out)]) == 0
    first = ((out / "eig.json").read_bytes(), (out / "eigenfunction.csv").read_bytes())
    assert run.main(["--config", config, "--out", str(out)]) == 0
    second = ((out / "eig.json").read_bytes(), (out / "eigenfunction.csv").read_bytes())
    assert first == second


def test_flag_overrides_reach_report(tmp_path):
    out = tmp_path / "out"
    config = write_config(tmp_path, EIG)
    assert run.main(["--config", config, "--out", str(out), "--tol", "1e-6", "--seed", "5"]) == 0
    report = read_report(out, "eig")
    assert report["solver"]["tol"] == 1e-6
    assert report["seed"] == 5


def test_env_output_directory(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("PLCRIT_OUT", str(tmp_path / "from_env"))
    config = write_config(tmp_path, EIG)
    assert run.main(["--config", config]) == 0
    assert (tmp_path / "from_env" / "eig.json").exists()


def test_critical_run_on_line(tmp_path):
    out = tmp_path / "out"
    config = write_config(tmp_path, CRITICAL)
    assert run.main(["--config", config, "--out", str(out)]) == 0
    result = read_report(out, "critical")["result"]
    assert result["verdict"] == "critical"
    assert len(result["thresholds"]) == 10
    with open(out / "thresholds.csv", newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0][:4] == ["level", "a", "b", "t"]
    assert len(rows) == 11
    assert (out / "ground_state.csv").exists()


def test_levels_flag_shortens_exhaustion(tmp_path):
    out = tmp_path / "out"
    config = write_config(tmp_path, CRITICAL)
    assert run.main(["--config", config, "--out", str(out), "--levels", "4"]) == 0
    assert len(read_report(out, "critical")["result"]["thresholds"]) == 4


def test_bad_config_is_a_usage_error(tmp_path, capsys):
    config = write_config(tmp_path, EIG.replace("p: 2", "p: 0.5"))
    assert run.main(["--config", config, "--out", str(tmp_path / "out")]) == 1
    out = capsys.readouterr().out
    assert "Usage" in out and "line 2" in out


def test_missing_config_file(tmp_path, capsys):
    assert run.main(["--config", str(tmp_path / "nope.yaml")]) == 1
    assert "Usage" in capsys.readouterr().out


def test_failed_precondition_exits_one(tmp_path, capsys):
    config = write_config(tmp_path, SOLVE_NEGATIVE)
    assert run.main(["--config", config, "--out", str(tmp_path / "out")]) == 1
    assert "solve failed" in capsys.readouterr().out


def test_validate_suite(tmp_path):
    out = tmp_path / "out"
    config = write_config(tmp_path, VALIDATE)
    assert run.main(["--config", config, "--out", str(out), "--seed", "3"]) == 0
    report = read_report(out, "validate")
    assert report["seed"] == 3
    assert report["result"]["passed"]
    assert list(report["result"]["suites"]) == ["vector-inequality"]
    assert "comparison-battery" in report["result"]["available"]


def test_unknown_suite_exits_one(tmp_path):
    config = write_config(tmp_path, VALIDATE.replace("vector-inequality", "no-such-suite"))
    assert run.main(["--config", config, "--out", str(tmp_path / "out")]) == 1


def test_non_convergence_exits_two(tmp_path, monkeypatch):
    def diverge(ctx):
        raise ConvergenceError("no level produced a threshold")

    monkeypatch.setitem(run.HANDLERS, "eig", diverge)
    out = tmp_path / "out"
    config = write_config(tmp_path, EIG)
    assert run.main(["--config", config, "--out", str(out)]) == 2
    assert read_report(out, "eig")["result"] == {"error": "no level produced a threshold"}


def test_truncated_thresholds_exit_two(tmp_path, monkeypatch):
    full = criticality.null_sequence
    monkeypatch.setattr(criticality, "null_sequence", lambda *args, **kwargs: full(*args, **kwargs)[:-1])
    out = tmp_path / "out"
    config = write_config(tmp_path, CRITICAL)
    assert run.main(["--config", config, "--out", str(out)]) == 2
    result = read_report(out, "critical")["result"]
    assert result["converged"] is False
    assert len(result["thresholds"]) == 9


def test_critical_run_reports_convergence(tmp_path):
    out = tmp_path / "out"
    config = write_config(tmp_path, CRITICAL)
    assert run.main(["--config", config, "--out", str(out), "--levels", "4"]) == 0
    assert read_report(out, "critical")["result"]["converged"] is True


def test_certificate_level_without_convergence_exits_two(tmp_path, monkeypatch):
    linear = mingrowth._linear_certificate

    def stalled(*args):
        mu, w, _ = linear(*args)
        return mu, w, False

    monkeypatch.setattr(mingrowth, "_linear_certificate", stalled)
    out = tmp_path / "out"
    config = write_config(tmp_path, CERTIFY)
    assert run.main(["--config", config, "--out", str(out)]) == 2
    result = read_report(out, "certify")["result"]
    assert result["converged"] is False
    assert len(result["mu"]) == 6


def test_certify_run(tmp_path):
    out = tmp_path / "out"
    config = write_config(tmp_path, CERTIFY)
    assert run.main(["--config", config, "--out", str(out)]) == 0
    result = read_report(out, "certify")["result"]
    assert result["converged"] is True
    assert (out / "mu.csv").exists()


def test_stalled_suite_exits_two(tmp_path, monkeypatch):
    def stalls(rng, samples):
        raise ConvergenceError("stalled")

    monkeypatch.setitem(suites._SUITES, "vector-inequality", (stalls, "stalls"))
    out = tmp_path / "out"
    config = write_config(tmp_path, VALIDATE)
    assert run.main(["--config", config, "--out", str(out)]) == 2
    result = read_report(out, "validate")["result"]
    assert result["converged"] is False
    assert not result["suites"]["vector-inequality"]["passed"]


def test_validate_sample_count(tmp_path):
    out = tmp_path / "out"
    text = VALIDATE.replace("suites: [vector-inequality]", "suites: [wcp-battery]\n  samples: 4")
    config = write_config(tmp_path, text)
    assert run.main(["--config", config, "--out", str(out)]) == 0
    detail = read_report(out, "validate")["result"]["suites"]["wcp-battery"]["detail"]
    assert detail.startswith("4 pairs")
