"""Split instances too large for the sampler into small sub-tours and stitch them together.

Partition: a nearest-neighbour tour from node 0 is cut into contiguous, near-equal
segments. Each segment is solved as its own closed tour; consecutive cycles are then
joined by the cheapest two-edge exchange.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from . import oracle
from .sweep import SolverConfig, run_pipeline
from .tsp_instance import Instance, make_tour, subset

DEFAULT_MAX_SIZE = 7


def nearest_neighbour_tour(instance: Instance, start: int = 0) -> tuple[int, ...]:
    """Greedy tour; ties go to the lowest node index."""
    n = instance.n
    seen = np.zeros(n, dtype=bool)
    order = [start]
    seen[start] = True
    for _ in range(n - 1):
        d = np.where(seen, np.iinfo(np.int64).max, instance.dist[order[-1]])
        nxt = int(np.argmin(d))
        order.append(nxt)
        seen[nxt] = True
    return tuple(order)


@dataclass(frozen=True)
class Decomposition:
    parts: tuple[tuple[int, ...], ...]
    max_size: int
    seed_tour: tuple[int, ...]


def decompose(instance: Instance, max_size: int = DEFAULT_MAX_SIZE) -> Decomposition:
    if max_size < 3:
        raise ValueError(f"max_size must be >= 3, got {max_size}")
    seed = nearest_neighbour_tour(instance)
    k = math.ceil(instance.n / max_size)
    parts = tuple(tuple(int(v) for v in seg) for seg in np.array_split(np.array(seed), k))
    return Decomposition(parts, max_size, seed)


def _cycle_length(dist: np.ndarray, cycle: Sequence[int]) -> int:
    idx = np.asarray(cycle)
    return int(dist[idx, np.roll(idx, -1)].sum())


def merge_cycles(dist: np.ndarray, first: Sequence[int], second: Sequence[int]) -> list[int]:
    """Join two disjoint cycles by removing one edge from each and reconnecting cheaply.

    Single-node cycles are handled as a self-loop of length zero. Ties keep the first
    (edge, edge, orientation) in scan order.
    """
    a_cyc, b_cyc = list(first), list(second)
    la, lb = len(a_cyc), len(b_cyc)
    best = None
    for i in range(la):
        a, b = a_cyc[i], a_cyc[(i + 1) % la]
        for j in range(lb):
            c, d = b_cyc[j], b_cyc[(j + 1) % lb]
            removed = dist[a, b] + dist[c, d]
            for flip, added in ((False, dist[a, c] + dist[d, b]), (True, dist[a, d] + dist[c, b])):
                delta = int(added - removed)
                if best is None or delta < best[0]:
                    best = (delta, i, j, flip)
    _, i, j, flip = best
    # path through the second cycle after dropping its edge (c, d): d, ..., c going forward
    path = [b_cyc[(j + 1 + t) % lb] for t in range(lb)]
    if not flip:
        path.reverse()   # a -> c ... d -> b
    return a_cyc[:i + 1] + path + a_cyc[i + 1:]


@dataclass
class SubResult:
    nodes: tuple[int, ...]
    tour: tuple[int, ...]     # global node ids
    length: int
    solver: str               # "sampler", "fallback" or "trivial"
    n_feasible: int


def solve_sub(instance: Instance, nodes: Sequence[int], qubo_type: str, A: float, B: float,
              chain_strength: float, config: SolverConfig) -> SubResult:
    """Lowest-energy feasible read for one part; exact solve when no read is feasible."""
    nodes = tuple(int(v) for v in nodes)
    if len(nodes) < 3:
        return SubResult(nodes, nodes, _cycle_length(instance.dist, nodes), "trivial", 0)
    sub = subset(instance, nodes)
    try:
        out = run_pipeline(sub, qubo_type, A, B, chain_strength, config)
    except ValueError as exc:
        raise ValueError(f"sub-instance {list(nodes)}: {exc}") from exc
    n_feasible = sum(int(c) for d, c in zip(out.decodes, out.samples.occurrences) if d.feasible)
    # states are sorted by energy, so the first feasible decode is the best one
    local = next((d.order for d in out.decodes if d.feasible), None)
    solver = "sampler"
    if local is None:
        local = oracle.brute_optimum(sub).order
        solver = "fallback"
    tour = make_tour(sub, local)
    return SubResult(nodes, tuple(nodes[v] for v in tour.order), tour.length, solver, n_feasible)


@dataclass
class HybridResult:
    instance: str
    qubo_type: str
    A: float
    B: float
    chain_strength: float
    config: SolverConfig
    decomposition: Decomposition
    subs: list[SubResult]
    tour: tuple[int, ...]
    length: int

    @property
    def fallback_rate(self) -> float:
        return sum(s.solver == "fallback" for s in self.subs) / len(self.subs)

    def to_dict(self) -> dict:
        return {
            "instance": self.instance,
            "qubo_type": self.qubo_type,
            "A": self.A,
            "B": self.B,
            "chain_strength": self.chain_strength,
            "config": asdict(self.config),
            "max_size": self.decomposition.max_size,
            "seed_tour": list(self.decomposition.seed_tour),
            "sub_instances": [list(p) for p in self.decomposition.parts],
            "sub_tours": [list(s.tour) for s in self.subs],
            "sub_lengths": [s.length for s in self.subs],
            "sub_solvers": [s.solver for s in self.subs],
            "fallback": [s.solver == "fallback" for s in self.subs],
            "sub_feasible_reads": [s.n_feasible for s in self.subs],
            "tour": list(self.tour),
            "length": self.length,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def solve_hybrid(instance: Instance, qubo_type: str, A: float, B: float, chain_strength: float,
                 config: SolverConfig, max_size: int = DEFAULT_MAX_SIZE, jobs: int = 1) -> HybridResult:
    dec = decompose(instance, max_size)
    if jobs > 1 and len(dec.parts) > 1:
        inner = replace(config, jobs=1)
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            subs = list(pool.map(lambda p: solve_sub(instance, p, qubo_type, A, B, chain_strength, inner),
                                 dec.parts))
    else:
        subs = [solve_sub(instance, p, qubo_type, A, B, chain_strength, config) for p in dec.parts]
    merged = list(subs[0].tour)
    for s in subs[1:]:
        merged = merge_cycles(instance.dist, merged, s.tour)
    tour = make_tour(instance, merged)
    return HybridResult(instance.name, qubo_type, A, B, chain_strength, config, dec, subs,
                        tour.order, tour.length)
