"""Run records, JSON-lines persistence, CSV summaries and growth fits."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

SCHEMA_VERSION = 1


@dataclass
class RunRecord:
    alg: str
    seed: int
    graph: dict
    config: dict
    n: int = 0
    m: int = 0
    max_degree: int = 0
    phase_rounds: dict = field(default_factory=dict)
    phase_max_awake: dict = field(default_factory=dict)
    total_rounds: int = 0
    max_awake: int = 0
    mean_awake: float = 0.0
    mis_size: int = 0
    independent: bool = True
    maximal: bool = True
    violations: int = 0
    budget_violations: int = 0
    drops: int = 0
    unintended_drops: int = 0
    flags: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def to_json(self, with_clock: bool = True) -> str:
        d = self.to_dict()
        if not with_clock:
            d.pop("wall_clock", None)
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def _plain(x):
    """numpy scalars and arrays to plain JSON types."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def write_records(records: Iterable[RunRecord], path) -> None:
    with open(path, "a") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_records(path) -> list[RunRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(RunRecord.from_dict(json.loads(line)))
    return out


# summaries -------------------------------------------------------------------

REPORT_FIELDS = ["schema_version", "alg", "n", "runs", "rounds_p50", "rounds_max",
                 "max_awake_p50", "max_awake_max", "mean_awake_p50", "mean_awake_max",
                 "independent_rate", "maximal_rate", "failure_rate"]


def summarize(records: Iterable[RunRecord]) -> list[dict]:
    """Per (alg, n) quantiles of rounds and energy plus failure rates; a pure fold."""
    cells: dict[tuple, list[RunRecord]] = {}
    for r in records:
        cells.setdefault((r.alg, r.n), []).append(r)
    rows = []
    for (alg, n), rs in sorted(cells.items()):
        rounds = np.array([r.total_rounds for r in rs], dtype=float)
        mx = np.array([r.max_awake for r in rs], dtype=float)
        mean = np.array([r.mean_awake for r in rs], dtype=float)
        rows.append({
            "schema_version": SCHEMA_VERSION, "alg": alg, "n": n, "runs": len(rs),
            "rounds_p50": float(np.median(rounds)), "rounds_max": float(rounds.max()),
            "max_awake_p50": float(np.median(mx)), "max_awake_max": float(mx.max()),
            "mean_awake_p50": float(np.median(mean)), "mean_awake_max": float(mean.max()),
            "independent_rate": float(np.mean([r.independent for r in rs])),
            "maximal_rate": float(np.mean([r.maximal for r in rs])),
            "failure_rate": float(np.mean([any(bool(v) for v in r.flags.values()) for r in rs])),
        })
    return rows


def report_csv(records: Iterable[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in summarize(records):
        w.writerow(row)
    return buf.getvalue()


# growth fits -----------------------------------------------------------------

def log_star(x: float) -> int:
    """Iterated base-2 logarithm; 0 for ``x <= 1``."""
    k = 0
    while x > 1:
        x = math.log2(x)
        k += 1
    return k


def _shape(model: str, n: float) -> float:
    l = math.log2(n)
    if model == "loglog":
        return math.log2(l)
    if model == "loglog_sq":
        return math.log2(l) ** 2
    if model == "log":
        return l
    if model == "logsq":
        return l * l
    if model == "log_loglog_logstar":
        return l * math.log2(l) * log_star(n)
    raise ValueError(f"unknown growth model {model!r}")


class InsufficientData(ValueError):
    pass


@dataclass
class GrowthFit:
    K: float
    residual: float
    pointwise: list          # metric / shape per n, in input order
    over_model: bool         # pointwise constants fall with n: metric grows slower than the shape


def fit_growth(series: Iterable[tuple[float, float]], model: str) -> GrowthFit:
    """Least-squares ``K`` for ``metric ~ K * shape(n)``; residual is the RMS error."""
    pts = sorted((float(n), float(y)) for n, y in series)
    if len({n for n, _ in pts}) < 3:
        raise InsufficientData("need at least three distinct n")
    s = np.array([_shape(model, n) for n, _ in pts])
    y = np.array([v for _, v in pts])
    K = float(s @ y / (s @ s))
    res = float(np.sqrt(np.mean((y - K * s) ** 2)))
    ratios = y / s
    over = bool(ratios.size >= 2 and np.all(np.diff(ratios) < 0) and ratios[-1] < 0.9 * ratios[0])
    return GrowthFit(K, res, ratios.tolist(), over)
