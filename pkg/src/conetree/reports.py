"""Moment reports and the CSV/JSON/manifest writers used by the CLI.

Floats are written with ``repr`` so reruns are byte-identical.
"""
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

SCHEMA_VERSION = 1

MOMENT_COLUMNS = ("eta", "n", "mean", "stderr", "flag", "energy", "p", "lambda", "depth",
                  "seed", "boundary")


@dataclass
class MomentEntry:
    eta: float
    energy: float
    n: int
    mean: float
    stderr: float
    p: float
    lam: float
    depth: int
    seed: int
    boundary: str = "reference"
    extras: Dict[str, float] = field(default_factory=dict)

    def row(self, flag) -> dict:
        out = {"eta": self.eta, "n": self.n, "mean": self.mean, "stderr": self.stderr,
               "flag": flag, "energy": self.energy, "p": self.p, "lambda": self.lam,
               "depth": self.depth, "seed": self.seed, "boundary": self.boundary}
        out.update(self.extras)
        return out


def boundedness_flag(entries: List[MomentEntry], factor: float = 2.0) -> str:
    """'bounded' when the last two means differ by less than ``factor``."""
    if len(entries) < 2:
        return "undetermined"
    a, b = entries[-2].mean, entries[-1].mean
    if a == b:
        return "bounded"
    lo, hi = min(a, b), max(a, b)
    if lo <= 0:
        return "unbounded"
    return "bounded" if hi / lo < factor else "unbounded"


@dataclass
class MomentReport:
    kind: str
    entries: List[MomentEntry]
    flag: str = "undetermined"
    params: dict = field(default_factory=dict)

    @property
    def bounded(self) -> bool:
        return self.flag == "bounded"

    @property
    def means(self) -> List[float]:
        return [e.mean for e in self.entries]

    def rows(self) -> List[dict]:
        return [e.row(self.flag) for e in self.entries]

    def columns(self) -> List[str]:
        cols = list(MOMENT_COLUMNS)
        for e in self.entries:
            for k in e.extras:
                if k not in cols:
                    cols.append(k)
        return cols


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (complex, np.complexfloating)):
        return f"{float(value.real)!r}{float(value.imag):+}j"
    return str(value)


def write_csv(path, schema: str, columns, rows) -> Path:
    """CSV with a leading ``# schema`` comment line naming the column layout."""
    path = Path(path)
    lines = [f"# conetree {schema} schema v{SCHEMA_VERSION}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(fmt(row.get(c, "")) for c in columns))
    path.write_text("\n".join(lines) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, command: str, config_path, params: dict, outputs) -> Path:
    from . import __version__

    payload = {
        "command": command,
        "library_version": __version__,
        "config": str(config_path) if config_path else None,
        "config_sha256": sha256_file(config_path) if config_path else None,
        "parameters": params,
        "outputs": sorted(Path(o).name for o in outputs),
    }
    return write_json(path, payload)
