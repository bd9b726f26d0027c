"""Constant profiles and the per-run parameters derived from them.

``desk`` is tuned for graphs up to about a million nodes on one machine;
``paper`` keeps the asymptotic constants (larger sampling windows, the
``log^20 n`` threshold of the second pipeline) and is mostly useful for
inspecting schedules, since its thresholds are never reached at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

from .graph import ParameterError


@dataclass(frozen=True)
class Profile:
    name: str = "desk"
    # Phase I (first pipeline)
    c: int = 2                     # rounds per iteration = c * ceil(log2 n)
    C: int = 8                     # spoiled-neighbor constant in the invariant surrogate
    C_deg: int = 4                 # residual degree cap C_deg * log2(n)^2
    # second pipeline
    threshold_exp: float = 3.0     # stop once Delta <= log2(n) ** threshold_exp
    c2: int = 2                    # rounds of one reduction = c2 * ceil(log2 n)
    # Phase II
    c_mis: int = 4                 # desire-level rounds = c_mis * ceil(log2(Delta+1)) + mis_extra
    mis_extra: int = 8
    cluster_iters: int = 3
    cap_exp: float = 2.0           # component cap = cap_factor * log2(n) ** cap_exp
    cap_factor: float = 1.0
    # Phase III
    c_D: int = 4                   # tree depth bound = c_D * ceil(log2 n)
    c_pack: int = 2                # packed MIS rounds = c_pack * ceil(log2 cap) + pack_extra
    pack_extra: int = 4
    alg1_coloring_steps: int = 2
    # average-energy augmentation
    c_h: int = 40                  # rounds per iteration = c_h * ceil(log2 log2 n)
    C_f: int = 8                   # failure constant (i+1) * C_f * log2 log2 n
    avg_cap_exp: float = 3.0       # survivor degree target (log2 log2 n) ** avg_cap_exp
    c_sparse: int = 3              # Luby rounds per stage = c_sparse * ceil(log2(d+1)) + 2
    K_F: float = 1.0               # failed-set ceiling K_F * n / log2 n
    K_s: float = 1.0               # sparsify survivors ceiling K_s * n / 2^k
    A_max: float = 60.0            # node-averaged energy ceiling
    # engine
    budget_factor: int = 4

    def to_dict(self) -> dict:
        return asdict(self)


PROFILES = {
    "desk": Profile(),
    "paper": Profile(name="paper", c=4, C=400, C_deg=4, threshold_exp=20.0,
                     avg_cap_exp=100.0),
}


def get_profile(name: str = "desk", **overrides) -> Profile:
    try:
        p = PROFILES[name]
    except KeyError:
        raise ParameterError(f"unknown profile {name!r}") from None
    return replace(p, **overrides) if overrides else p


def log2c(x: float) -> int:
    """ceil(log2 x), at least 1."""
    return max(1, math.ceil(math.log2(max(x, 2))))


def loglog(n: int) -> float:
    return math.log2(max(math.log2(max(n, 2)), 2))


@dataclass(frozen=True)
class PhaseParams:
    """Parameters fixed by ``n``, ``Delta`` and the profile; known to every node."""
    n: int
    log_n: int
    radius: int
    cap: int
    D: int
    executions: int
    pack_rounds: int
    iteration_budget: int


def phase_params(n: int, prof: Profile) -> PhaseParams:
    ln = log2c(n)
    radius = max(1, math.ceil(loglog(n)))
    cap = max(2, int(prof.cap_factor * math.log2(max(n, 2)) ** prof.cap_exp))
    lc = log2c(cap)
    return PhaseParams(n=n, log_n=ln, radius=radius, cap=cap, D=prof.c_D * ln,
                       executions=ln, pack_rounds=prof.c_pack * lc + prof.pack_extra,
                       iteration_budget=lc)


def mis_rounds(delta_bound: int, prof: Profile) -> int:
    return prof.c_mis * log2c(delta_bound + 1) + prof.mis_extra
