"""YAML experiment configuration.

Example::

    seed: 7
    matrix:
      labels: [open, filled]
      rows: [[2, 1], [1, 1]]      # rows[l][k]: label-l children of a label-k vertex
      root: filled
    solver:                       # optional, defaults shown in SolverSettings
      eta_floor: 1.0e-6
    perturbation:                 # random / gw commands
      lambda: 0.01
      v: {uniform: [-1, 1]}
      theta: {discrete: {values: [-0.5, 0.5], probs: [0.5, 0.5]}}
      labels:                     # optional per-label overrides
        open: {v: {uniform: [-0.5, 0.5]}}
    radial:                       # radial command
      lambda: 0.5
      values: [[1.0, 1.0], [-0.5, -0.5]]   # one row per generation, one column per label
    branching:                    # gw command
      open:
        - {offspring: [2, 1], probability: 0.9}
        - {offspring: [3, 1], probability: 0.1}
      filled:
        - {offspring: [1, 1], probability: 1.0}
    experiment:                   # optional defaults for command flags
      energy: 0.0
      samples: 200
    output: {dir: out, format: csv}
"""
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .errors import MalformedInputError, PreconditionError
from .galton_watson import BranchingProcess
from .green import SolverSettings
from .matrix import SubstitutionMatrix
from .perturbation import Discrete, PerturbationModel, RadialPotential, Uniform
from .rng import check_seed

BLOCKS = ("seed", "matrix", "solver", "perturbation", "radial", "branching", "experiment", "output")


class ConfigError(MalformedInputError):
    """Unreadable or ill-formed configuration; ``line``/``column`` are 1-based when known."""

    def __init__(self, message, line=None, column=None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


@dataclass
class ExperimentConfig:
    matrix: SubstitutionMatrix
    root: int
    solver: SolverSettings = field(default_factory=SolverSettings)
    perturbation: Optional[PerturbationModel] = None
    radial_lambda: float = 0.0
    radial: Optional[RadialPotential] = None
    branching: Optional[BranchingProcess] = None
    experiment: dict = field(default_factory=dict)
    output_dir: Optional[str] = None
    output_format: str = "csv"
    seed: int = 0
    path: Optional[Path] = None

    def require(self, *blocks):
        missing = [b for b in blocks if getattr(self, b) is None]
        if missing:
            raise ConfigError(f"config is missing block(s): {', '.join(missing)}")


def _number(value, where, kind=float):
    try:
        if isinstance(value, bool):
            raise ValueError
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a number, got {value!r}") from None


def _law(block, where):
    if not isinstance(block, dict) or len(block) != 1:
        raise ConfigError(f"{where}: expected {{uniform: [a, b]}} or {{discrete: {{...}}}}")
    (kind, body), = block.items()
    if kind == "uniform":
        if not isinstance(body, list) or len(body) != 2:
            raise ConfigError(f"{where}: uniform needs [low, high]")
        return Uniform(_number(body[0], where), _number(body[1], where))
    if kind == "discrete":
        vals = [_number(x, where) for x in body.get("values", [])]
        probs = [_number(x, where) for x in body.get("probs", [])]
        return Discrete(tuple(vals), tuple(probs))
    if kind == "point":
        return Discrete((_number(body, where),), (1.0,))
    raise ConfigError(f"{where}: unknown law {kind!r}")


def _labels(value, names, where):
    try:
        if isinstance(value, int) and not isinstance(value, bool):
            if not 0 <= value < len(names):
                raise ValueError
            return value
        return names.index(value)
    except ValueError:
        raise ConfigError(f"{where}: unknown label {value!r}") from None


def parse_config(text: str, path=None) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line, col = (mark.line + 1, mark.column + 1) if mark else (None, None)
        raise ConfigError(f"YAML parse error: {exc.problem}", line, col) from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML parse error: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping", 1, 1)
    unknown = sorted(set(raw) - set(BLOCKS))
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(map(str, unknown))}")
    try:
        return _build(raw, path)
    except ConfigError:
        raise
    except (MalformedInputError, PreconditionError, KeyError, TypeError, AttributeError) as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from None


def _build(raw: dict, path) -> ExperimentConfig:
    mblock = raw.get("matrix")
    if not isinstance(mblock, dict) or "rows" not in mblock:
        raise ConfigError("matrix block with 'rows' is required")
    rows = mblock["rows"]
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise ConfigError("matrix.rows must be a list of integer rows")
    if any(isinstance(x, bool) or not isinstance(x, int) for r in rows for x in r):
        raise ConfigError("matrix.rows entries must be integers")
    if len({len(r) for r in rows}) > 1:
        raise ConfigError("matrix.rows must all have the same length")
    names = tuple(str(n) for n in mblock.get("labels", [str(i) for i in range(len(rows))]))
    M = SubstitutionMatrix(np.array(rows, dtype=np.int64).reshape(len(rows), -1), names)
    root = _labels(mblock.get("root", 0), list(names), "matrix.root")

    solver = SolverSettings()
    if raw.get("solver") is not None:
        sblock = raw["solver"]
        if not isinstance(sblock, dict):
            raise ConfigError("solver must be a mapping")
        known = {f.name for f in fields(SolverSettings)}
        kw = {}
        for k, v in sblock.items():
            if k not in known:
                raise ConfigError(f"solver: unknown key {k!r}")
            if k == "eta_schedule":
                kw[k] = tuple(_number(x, "solver.eta_schedule") for x in v)
            elif k == "max_iterations":
                kw[k] = _number(v, f"solver.{k}", int)
            elif v is None:
                kw[k] = None
            else:
                kw[k] = _number(v, f"solver.{k}")
        if "eta_schedule" in kw and "eta_floor" not in kw:
            kw["eta_floor"] = kw["eta_schedule"][-1]
        if "eta_floor" in kw and "eta_schedule" not in kw:
            solver = solver.with_eta_floor(kw.pop("eta_floor"))
        solver = SolverSettings(**{**solver.__dict__, **kw})

    cfg = ExperimentConfig(M, root, solver, path=Path(path) if path else None)
    cfg.seed = check_seed(raw.get("seed", 0))

    if raw.get("perturbation") is not None:
        p = raw["perturbation"]
        lam = _number(p.get("lambda", 0.0), "perturbation.lambda")
        v = _law(p.get("v", {"uniform": [-1, 1]}), "perturbation.v")
        th = _law(p.get("theta", {"uniform": [-1, 1]}), "perturbation.theta")
        vs, ths = [v] * M.label_count, [th] * M.label_count
        for name, over in (p.get("labels") or {}).items():
            j = _labels(name, list(names), "perturbation.labels")
            if "v" in over:
                vs[j] = _law(over["v"], f"perturbation.labels.{name}.v")
            if "theta" in over:
                ths[j] = _law(over["theta"], f"perturbation.labels.{name}.theta")
        cfg.perturbation = PerturbationModel(lam, tuple(vs), tuple(ths))

    if raw.get("radial") is not None:
        r = raw["radial"]
        cfg.radial_lambda = _number(r.get("lambda", 1.0), "radial.lambda")
        values = r.get("values")
        if not isinstance(values, list):
            raise ConfigError("radial.values must be a list of generation rows")
        table = [[_number(x, "radial.values") for x in row] for row in values]
        pot = RadialPotential(np.array(table, dtype=float).reshape(len(table), -1)
                              if table else np.zeros((0, M.label_count)))
        if pot.values.shape[1] != M.label_count:
            raise ConfigError("radial.values needs one column per label")
        cfg.radial = pot

    if raw.get("branching") is not None:
        b = raw["branching"]
        if not isinstance(b, dict):
            raise ConfigError("branching must map label names to offspring laws")
        laws = [None] * M.label_count
        for name, law in b.items():
            j = _labels(name, list(names), "branching")
            laws[j] = tuple((tuple(_number(x, "branching.offspring", int) for x in item["offspring"]),
                             _number(item["probability"], "branching.probability"))
                            for item in law)
        missing = [names[j] for j, law in enumerate(laws) if law is None]
        if missing:
            raise ConfigError(f"branching: no law for label(s) {', '.join(missing)}")
        cfg.branching = BranchingProcess(tuple(laws))

    cfg.experiment = dict(raw.get("experiment") or {})
    out = raw.get("output") or {}
    cfg.output_dir = out.get("dir")
    cfg.output_format = out.get("format", "csv")
    if cfg.output_format not in ("csv", "json"):
        raise ConfigError(f"output.format must be csv or json, got {cfg.output_format!r}")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, path)
