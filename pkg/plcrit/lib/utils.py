"""
utils.py - Logging, run configuration and report writers shared by the plcrit CLI.

Purpose:
    Everything a run needs around the numerics: a rotating log file, a validated YAML
    config with line-numbered diagnostics, environment overrides, a stable config hash,
    and deterministic JSON/CSV writers.

Config schema (YAML, one command per file):
    problem:    {p: 2, d: 1, domain: [0, inf], potential: {kind: zero}, punctured: false}
    exhaustion: {levels: 16, growth: 2.0, reference: null, x1: null, resolution: 1001}
    command:    {name: eig, level: [0, 1], resolution: 2000, ...}
    solver:     {tol: null, eps_start: 0.1, eps_end: 1.0e-8, max_newton: 200, ...}
    output: out
    seed: 0
    progress: false

Environment (read from .env when python-dotenv is installed):
    PLCRIT_OUT        output directory
    PLCRIT_LOG_LEVEL  logging level name

Dependencies:
    PyYAML, pydantic, python-dotenv (optional), numpy.
"""

import csv
import hashlib
import json
import logging
import logging.handlers
import math
import os
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field as ModelField, ValidationError, field_validator, model_validator

from plcrit.lib.criticality import VerdictSettings
from plcrit.lib.domain import (
    CompactSetSpec,
    ExhaustionSchedule,
    ExhaustionSettings,
    PotentialSpec,
    RadialProblem,
    default_exhaustion,
)
from plcrit.lib.errors import ConfigError
from plcrit.lib.solvers import SolverSettings

logger = logging.getLogger(__name__)

COMMANDS = ("eig", "solve", "critical", "capacity", "mingrowth", "singular", "certify", "validate")


def setup_logging(log_file="plcrit.log", backup_count=5, level=logging.INFO):
    """
    Log to a file and the console.
    The file is rolled over at the start of each run if it exists and is not empty.
    """
    try:
        handler = logging.handlers.RotatingFileHandler(
            log_file, maxBytes=0, backupCount=backup_count, encoding="utf-8"
        )
        if os.path.exists(log_file) and os.path.getsize(log_file) > 0:
            handler.doRollover()
        logging.basicConfig(
            level=level,
            format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
            handlers=[handler, logging.StreamHandler()],
            force=True,
        )
    except Exception as e:
        print(f"Logging setup failed: {e}")
        logging.basicConfig(level=level)


def load_env():
    """Load .env if python-dotenv is available; return the plcrit overrides found."""
    try:
        from dotenv import load_dotenv
        load_dotenv()
    except ImportError:
        pass
    return {
        "output": os.getenv("PLCRIT_OUT"),
        "log_level": os.getenv("PLCRIT_LOG_LEVEL"),
    }


def _as_float(value):
    if isinstance(value, str):
        try:
            return float(value.strip())
        except ValueError:
            return value
    return value


class ProblemConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    p: float
    d: int = ModelField(default=1, ge=1)
    domain: tuple[float, float] = (0.0, math.inf)
    potential: PotentialSpec = PotentialSpec()
    punctured: bool = False

    @field_validator("domain", mode="before")
    @classmethod
    def _parse_domain(cls, value):
        if isinstance(value, (list, tuple)):
            return [_as_float(v) for v in value]
        return value

    @model_validator(mode="after")
    def _check_problem(self):
        try:
            self.build()
        except ValidationError as e:
            raise ValueError(e.errors()[0]["msg"]) from None
        return self

    def build(self):
        return RadialProblem(p=self.p, d=self.d, r_lo=self.domain[0], r_hi=self.domain[1],
                             potential=self.potential, punctured=self.punctured)


class ExhaustionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    levels: int = ModelField(default=16, ge=1)
    growth: float = ModelField(default=2.0, gt=1.0)
    reference: Optional[float] = None
    x1: Optional[float] = None
    intervals: Optional[tuple[tuple[float, float], ...]] = None
    resolution: int = ModelField(default=1001, ge=3)
    grading: float = ModelField(default=1.02, gt=1.0)

    def schedule(self, problem):
        if self.intervals is not None:
            x0 = self.reference if self.reference is not None else 0.5 * sum(self.intervals[0])
            return ExhaustionSchedule(levels=self.intervals[:self.levels], x0=x0, x1=self.x1)
        return default_exhaustion(problem, self.levels, self.growth, self.reference, self.x1)

    def settings(self, progress=False):
        return ExhaustionSettings(resolution=self.resolution, grading=self.grading,
                                  progress=progress)


class CommandConfig(BaseModel):
    """One command with its parameters; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    name: Literal["eig", "solve", "critical", "capacity", "mingrowth", "singular", "certify",
                  "validate"]
    level: Optional[tuple[float, float]] = None
    resolution: int = ModelField(default=1001, ge=3)
    method: str = "auto"
    boundary: tuple[float, float] = (0.0, 0.0)
    load: Optional[PotentialSpec] = None
    probe: Optional[PotentialSpec] = None
    verdict: VerdictSettings = VerdictSettings()
    K: Optional[CompactSetSpec] = None
    window: Optional[tuple[float, float]] = None
    x0: Optional[float] = None
    x1: Optional[float] = None
    hole_law: Literal["geometric", "harmonic"] = "geometric"
    fit_window: Optional[tuple[float, float]] = None
    fit_mode: Literal["power", "log"] = "power"
    omega2: Optional[CompactSetSpec] = None
    B: Optional[tuple[float, float]] = None
    u: Optional[PotentialSpec] = None
    suites: Optional[tuple[str, ...]] = None
    samples: int = ModelField(default=200, ge=1)

    @field_validator("level", "window", "fit_window", "B", mode="before")
    @classmethod
    def _parse_interval(cls, value):
        if isinstance(value, (list, tuple)):
            return [_as_float(v) for v in value]
        return value

    @model_validator(mode="after")
    def _check_required(self):
        required = {
            "eig": ("level",),
            "solve": ("level",),
            "capacity": ("K",),
            "mingrowth": ("K",),
            "certify": ("omega2", "B", "u"),
        }
        missing = [key for key in required.get(self.name, ()) if getattr(self, key) is None]
        if missing:
            raise ValueError(f"command {self.name} needs {', '.join(missing)}")
        return self


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    problem: ProblemConfig
    exhaustion: ExhaustionConfig = ExhaustionConfig()
    command: CommandConfig
    solver: SolverSettings = SolverSettings()
    output: str = "out"
    seed: int = ModelField(default=0, ge=0, lt=2 ** 64)
    progress: bool = False

    @model_validator(mode="after")
    def _check_intervals(self):
        lo, hi = self.problem.domain
        for key in ("level", "window"):
            interval = getattr(self.command, key)
            if interval is not None and not (lo <= interval[0] < interval[1] <= hi):
                raise ValueError(f"command {key} {tuple(interval)} is not inside the domain ({lo}, {hi})")
        return self


def _key_line(node, loc):
    """1-based line of the YAML node addressed by a pydantic error location."""
    line = node.start_mark.line + 1
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            match = next((v for k, v in node.value if k.value == str(key)), None)
            if match is None:
                key_node = next((k for k, _ in node.value if k.value == str(key)), None)
                return key_node.start_mark.line + 1 if key_node is not None else line
            node = match
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
        line = node.start_mark.line + 1
    return line


def parse_config(text, source="<config>"):
    """Validate YAML text into a RunConfig; errors become ConfigError with a line number."""
    try:
        data = yaml.safe_load(text)
        root = yaml.compose(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"{source}: {e}", None if mark is None else mark.line + 1) from e
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: expected a mapping at the top level", 1)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = tuple(first["loc"])
        line = _key_line(root, loc) if root is not None else None
        where = ".".join(str(k) for k in loc) or "config"
        raise ConfigError(f"{source}: {where}: {first['msg']}", line) from e


def load_config(config_path):
    with open(config_path, "r", encoding="utf-8") as f:
        return parse_config(f.read(), config_path)


def apply_overrides(config, env=None, output=None, seed=None, tol=None, levels=None):
    """CLI flag > environment > config file > model default."""
    update = {}
    env = env or {}
    if output is not None:
        update["output"] = output
    elif env.get("output"):
        update["output"] = env["output"]
    if seed is not None:
        update["seed"] = seed
    if tol is not None:
        update["solver"] = config.solver.model_copy(update={"tol": tol})
    if levels is not None:
        update["exhaustion"] = config.exhaustion.model_copy(update={"levels": levels})
    if not update:
        return config
    try:
        return RunConfig.model_validate({**config.model_dump(), **{
            k: (v.model_dump() if isinstance(v, BaseModel) else v) for k, v in update.items()}})
    except ValidationError as e:
        raise ConfigError(f"override rejected: {e.errors()[0]['msg']}") from e


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, BaseModel):
        return obj.model_dump()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def config_hash(config):
    """sha256 of the canonical JSON of the validated config."""
    text = json.dumps(config.model_dump(), sort_keys=True, default=_jsonable)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_json(file_path, payload):
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_jsonable)
        f.write("\n")


def write_profile_csv(file_path, field, header=("node", "value")):
    """Two-column CSV of a Field with repr-formatted floats."""
    with open(file_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for x, y in zip(field.grid.nodes, field.values):
            writer.writerow([repr(float(x)), repr(float(y))])


def write_table_csv(file_path, header, rows):
    with open(file_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                             for v in row])


def make_rng(seed):
    return np.random.default_rng(seed)
