"""Single runs and sweeps over (algorithm, graph, seed) cells."""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator

from .config import Profile, get_profile
from .graph import Graph, ParameterError, generate_graph
from .records import RunRecord

ALGORITHMS = ("1", "2")


def run_algorithm(g: Graph, alg: str, prof: Profile, seed: int, avg_energy: bool = False,
                  phases: tuple = (1, 2, 3), graph_desc: dict | None = None):
    """Dispatch to one pipeline; returns ``(in_mis, record)``."""
    alg = str(alg)
    if alg == "1":
        from .alg1 import run_alg1
        return run_alg1(g, prof, seed, graph_desc=graph_desc, phases=phases, avg_energy=avg_energy)
    if alg == "2":
        from .alg2 import run_alg2
        return run_alg2(g, prof, seed, graph_desc=graph_desc, phases=phases, avg_energy=avg_energy)
    raise ParameterError(f"unknown algorithm {alg!r}")


@dataclass(frozen=True)
class Cell:
    alg: str
    model: str
    params: tuple            # sorted (key, value) pairs
    graph_seed: int
    seed: int
    avg_energy: bool = False
    profile: str = "desk"
    overrides: tuple = ()

    @property
    def graph_desc(self) -> dict:
        return {"model": self.model, "params": dict(self.params), "seed": self.graph_seed}


@dataclass
class SweepSpec:
    ns: list
    model: str = "gnp"
    params: dict = field(default_factory=lambda: {"avg_degree": 16})
    seeds: int = 1
    algs: list = field(default_factory=lambda: ["1"])
    profile: str = "desk"
    avg_energy: bool = False
    overrides: dict = field(default_factory=dict)
    same_graph: bool = False     # one graph per n, seeds vary the algorithm only

    def __post_init__(self):
        if self.seeds < 1:
            raise ParameterError("seeds per cell must be at least 1")
        if not self.ns:
            raise ParameterError("sweep needs at least one n")
        for a in self.algs:
            if str(a) not in ALGORITHMS:
                raise ParameterError(f"unknown algorithm {a!r}")

    def cells(self) -> Iterator[Cell]:
        ov = tuple(sorted(self.overrides.items()))
        for n, alg, s in itertools.product(self.ns, self.algs, range(self.seeds)):
            params = tuple(sorted({**self.params, "n": int(n)}.items()))
            yield Cell(str(alg), self.model, params, 0 if self.same_graph else s, s,
                       self.avg_energy, self.profile, ov)


def run_cell(cell: Cell) -> RunRecord:
    prof = get_profile(cell.profile, **dict(cell.overrides))
    g = generate_graph(cell.model, dict(cell.params), cell.graph_seed)
    _, rec = run_algorithm(g, cell.alg, prof, cell.seed, cell.avg_energy,
                           graph_desc=cell.graph_desc)
    return rec


def run_sweep(spec: SweepSpec, jobs: int = 1, sink: Callable[[RunRecord], None] | None = None
              ) -> list[RunRecord]:
    """Run every cell; records reach ``sink`` in cell order from this process only."""
    cells = list(spec.cells())
    out = []
    if jobs <= 1:
        results = map(run_cell, cells)
    else:
        pool = ProcessPoolExecutor(max_workers=jobs)
        results = pool.map(run_cell, cells)
    try:
        for rec in results:
            out.append(rec)
            if sink is not None:
                sink(rec)
    finally:
        if jobs > 1:
            pool.shutdown()
    return out
