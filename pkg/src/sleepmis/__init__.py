"""Low-energy maximal independent set algorithms on a sleeping-model simulator."""

from .alg1 import run_alg1
from .alg2 import degree_reduce_once, estimate_degree, resample_probability, run_alg2
from .avg_energy import phase1half_reduce, run_avg_energy_pipeline, sparsify_low_degree
from .config import PROFILES, Profile, get_profile
from .engine import Engine, EngineConfig
from .graph import Graph, generate_graph, is_independent, is_maximal_independent
from .oracle import enumerate_small_graphs, oracle_all_mis
from .records import RunRecord, fit_growth, read_records, report_csv
from .schedule import build_awake_sets, verify_awake_sets

__all__ = [
    "Engine", "EngineConfig", "Graph", "PROFILES", "Profile", "RunRecord",
    "build_awake_sets", "degree_reduce_once", "enumerate_small_graphs", "estimate_degree",
    "fit_growth", "generate_graph", "get_profile", "is_independent", "is_maximal_independent",
    "oracle_all_mis", "phase1half_reduce", "read_records", "report_csv", "resample_probability",
    "run_alg1", "run_alg2", "run_avg_energy_pipeline", "sparsify_low_degree", "verify_awake_sets",
]
