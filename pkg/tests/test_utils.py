import csv
import json
import logging
import math

import numpy as np
import pytest

from plcrit.lib.domain import Field, RadialProblem, build_grid
from plcrit.lib.errors import ConfigError
from plcrit.lib.utils import (
    apply_overrides,
    config_hash,
    load_config,
    load_env,
    make_rng,
    parse_config,
    setup_logging,
    write_json,
    write_profile_csv,
    write_table_csv,
)

EIG = """\
problem:
  p: 2
  d: 1
  domain: [0, 1]
command:
  name: eig
  level: [0, 1]
  resolution: 201
output: results
"""


def test_parse_minimal_config():
    config = parse_config(EIG)
    problem = config.problem.build()
    assert problem.p == 2.0 and problem.r_hi == 1.0
    assert config.command.level == (0.0, 1.0)
    assert config.seed == 0
    assert config.solver.tolerance(2.0) == 1e-10


def test_parse_inf_strings():
    text = EIG.replace("domain: [0, 1]", "domain: [-inf, inf]")
    problem = parse_config(text).problem.build()
    assert problem.r_lo == -math.inf and problem.r_hi == math.inf
    text = EIG.replace("domain: [0, 1]", "domain: [0, .inf]")
    assert parse_config(text).problem.build().r_hi == math.inf


def test_unknown_key_reports_its_line():
    text = EIG.replace("  resolution: 201\n", "  resolution: 201\n  bogus: 3\n")
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == 9
    assert "bogus" in str(info.value)


def test_invalid_p_reports_problem_line():
    with pytest.raises(ConfigError) as info:
        parse_config(EIG.replace("p: 2", "p: 0.5"))
    assert info.value.line == 2
    assert str(info.value).startswith("line 2:")


def test_missing_command_keys():
    text = EIG.replace("name: eig", "name: capacity").replace("  level: [0, 1]\n", "")
    with pytest.raises(ConfigError, match="needs K"):
        parse_config(text)
    certify = EIG.replace("name: eig", "name: certify")
    with pytest.raises(ConfigError, match="omega2, B, u"):
        parse_config(certify)


def test_level_outside_domain():
    with pytest.raises(ConfigError, match="not inside the domain"):
        parse_config(EIG.replace("level: [0, 1]", "level: [0, 2]"))


def test_yaml_syntax_and_shape_errors():
    with pytest.raises(ConfigError) as info:
        parse_config("problem: [1, 2\ncommand: {}\n")
    assert info.value.line is not None
    with pytest.raises(ConfigError):
        parse_config("- 1\n- 2\n")


def test_load_config_from_file(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(EIG, encoding="utf-8")
    assert load_config(str(path)) == parse_config(EIG)


def test_load_env(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("PLCRIT_OUT", "elsewhere")
    monkeypatch.delenv("PLCRIT_LOG_LEVEL", raising=False)
    assert load_env() == {"output": "elsewhere", "log_level": None}


def test_override_precedence():
    config = parse_config(EIG)
    env = {"output": "from_env"}
    assert apply_overrides(config, env).output == "from_env"
    assert apply_overrides(config, env, output="from_flag").output == "from_flag"
    assert apply_overrides(config, {}).output == "results"
    changed = apply_overrides(config, seed=7, tol=1e-6, levels=4)
    assert changed.seed == 7
    assert changed.solver.tol == 1e-6
    assert changed.exhaustion.levels == 4
    with pytest.raises(ConfigError):
        apply_overrides(config, levels=0)


def test_config_hash_is_stable():
    a = parse_config(EIG)
    b = parse_config(EIG)
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 64
    assert config_hash(apply_overrides(a, seed=1)) != config_hash(a)


@pytest.fixture
def root_handlers():
    root = logging.getLogger()
    saved = (root.handlers[:], root.level)
    yield
    for handler in root.handlers[:]:
        handler.close()
    root.handlers[:] = saved[0]
    root.setLevel(saved[1])


def test_setup_logging_rolls_over(tmp_path, root_handlers):
    log_file = tmp_path / "plcrit.log"
    setup_logging(str(log_file))
    logging.getLogger("plcrit.test").info("first run")
    setup_logging(str(log_file))
    logging.getLogger("plcrit.test").info("second run")
    for handler in logging.getLogger().handlers:
        handler.flush()
    assert (tmp_path / "plcrit.log.1").exists()
    assert "first run" in (tmp_path / "plcrit.log.1").read_text(encoding="utf-8")
    assert "second run" in log_file.read_text(encoding="utf-8")


def test_write_json_is_sorted(tmp_path):
    path = tmp_path / "report.json"
    write_json(str(path), {"b": 1, "a": np.float64(0.5), "arr": np.arange(3)})
    text = path.read_text(encoding="utf-8")
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": 0.5, "arr": [0, 1, 2], "b": 1}


def test_csv_writers(tmp_path):
    problem = RadialProblem(p=2.0, d=1, r_lo=0.0, r_hi=1.0)
    grid = build_grid(problem, (0.0, 1.0), 3)
    profile = tmp_path / "profile.csv"
    write_profile_csv(str(profile), Field(grid, np.array([0.0, 0.1, 0.0])))
    with open(profile, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows == [["node", "value"], ["0.0", "0.0"], ["0.5", "0.1"], ["1.0", "0.0"]]
    table = tmp_path / "table.csv"
    write_table_csv(str(table), ("level", "t"), [(1, 0.25), (2, np.float64(1 / 3))])
    with open(table, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows == [["level", "t"], ["1", "0.25"], ["2", repr(1 / 3)]]


def test_make_rng_is_deterministic():
    assert make_rng(3).random() == make_rng(3).random()
