"""Chimera topology, deterministic clique embedding, chain couplers and majority-vote unembedding.

Chimera node id: ``8 * (row * m + col) + 4 * side + k``. Side 0 qubits couple
vertically to the next row, side 1 qubits horizontally to the next column.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .qubo_model import IsingModel


class CapacityError(ValueError):
    pass


class EmbeddingError(ValueError):
    pass


def chimera_id(row: int, col: int, side: int, k: int, m: int) -> int:
    return 8 * (row * m + col) + 4 * side + k


def chimera_coords(q: int, m: int) -> tuple[int, int, int, int]:
    cell, rem = divmod(q, 8)
    row, col = divmod(cell, m)
    side, k = divmod(rem, 4)
    return row, col, side, k


@dataclass(frozen=True, eq=False)
class ChimeraGraph:
    m: int
    edges: tuple[tuple[int, int], ...]
    adjacency: dict[int, frozenset[int]] = field(repr=False)

    @property
    def num_nodes(self) -> int:
        return 8 * self.m * self.m

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.adjacency.get(u, ())


def chimera_graph(m: int) -> ChimeraGraph:
    if m < 1:
        raise ValueError(f"chimera size m must be >= 1, got {m}")
    edges = []
    for row in range(m):
        for col in range(m):
            for k0 in range(4):
                for k1 in range(4):
                    edges.append((chimera_id(row, col, 0, k0, m), chimera_id(row, col, 1, k1, m)))
            for k in range(4):
                if row + 1 < m:
                    edges.append((chimera_id(row, col, 0, k, m), chimera_id(row + 1, col, 0, k, m)))
                if col + 1 < m:
                    edges.append((chimera_id(row, col, 1, k, m), chimera_id(row, col + 1, 1, k, m)))
    edges = sorted((min(u, v), max(u, v)) for u, v in edges)
    adj: dict[int, set[int]] = defaultdict(set)
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    return ChimeraGraph(m, tuple(edges), {q: frozenset(n) for q, n in adj.items()})


@dataclass(frozen=True)
class Embedding:
    chains: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.chains)

    def to_dict(self) -> dict[str, list[int]]:
        return {str(v): list(c) for v, c in enumerate(self.chains)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Embedding":
        return cls(tuple(tuple(d[k]) for k in sorted(d, key=int)))


def min_chimera_size(num_logical: int) -> int:
    return max(1, math.ceil(num_logical / 4))


def clique_embedding(num_logical: int, g: ChimeraGraph) -> Embedding:
    """Triangular clique embedding of K_{4m} on C(m), truncated to ``num_logical`` chains.

    Variable ``4 i + k`` takes the side-0 qubits ``k`` of column ``i`` in rows ``0..i`` and
    the side-1 qubits ``k`` of row ``i`` in columns ``i..m-1``; the two runs meet in cell (i, i).
    """
    m = g.m
    if num_logical < 1:
        raise ValueError("num_logical must be >= 1")
    if num_logical > 4 * m:
        raise CapacityError(f"C({m}) holds a clique of at most {4 * m} variables, asked for {num_logical} "
                            f"(needs m >= {min_chimera_size(num_logical)})")
    chains = []
    for v in range(num_logical):
        i, k = divmod(v, 4)
        vertical = [chimera_id(r, i, 0, k, m) for r in range(i + 1)]
        horizontal = [chimera_id(i, c, 1, k, m) for c in range(i, m)]
        chains.append(tuple(vertical + horizontal))
    emb = Embedding(tuple(chains))
    check_embedding(emb, g)
    return emb


def _connected(chain: Sequence[int], g: ChimeraGraph) -> bool:
    members = set(chain)
    seen = {chain[0]}
    queue = deque([chain[0]])
    while queue:
        q = queue.popleft()
        for nb in g.adjacency.get(q, ()):
            if nb in members and nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return seen == members


def inter_chain_couplers(e: Embedding, g: ChimeraGraph) -> dict[tuple[int, int], list[tuple[int, int]]]:
    """Physical couplers between each pair of chains, keyed by logical (u, v), u < v."""
    owner = {q: v for v, chain in enumerate(e.chains) for q in chain}
    out: dict[tuple[int, int], list[tuple[int, int]]] = defaultdict(list)
    for p, q in g.edges:
        a, b = owner.get(p), owner.get(q)
        if a is None or b is None or a == b:
            continue
        key, pair = ((a, b), (p, q)) if a < b else ((b, a), (q, p))
        out[key].append(pair)
    return dict(out)


def check_embedding(e: Embedding, g: ChimeraGraph,
                    logical_edges: Iterable[tuple[int, int]] | None = None) -> None:
    """Raise ``EmbeddingError`` unless chains are disjoint, connected and cover every logical edge.

    ``logical_edges`` defaults to the complete graph on the chains.
    """
    seen: dict[int, int] = {}
    for v, chain in enumerate(e.chains):
        if not chain:
            raise EmbeddingError(f"chain {v} is empty")
        for q in chain:
            if not 0 <= q < g.num_nodes:
                raise EmbeddingError(f"chain {v} uses qubit {q} outside C({g.m})")
            if q in seen:
                raise EmbeddingError(f"qubit {q} is shared by chains {seen[q]} and {v}")
            seen[q] = v
        if not _connected(chain, g):
            raise EmbeddingError(f"chain {v} is not connected")
    couplers = inter_chain_couplers(e, g)
    if logical_edges is None:
        logical_edges = combinations(range(len(e.chains)), 2)
    for u, v in logical_edges:
        key = (u, v) if u < v else (v, u)
        if key not in couplers:
            raise EmbeddingError(f"no physical coupler between chains {u} and {v}")


@dataclass(frozen=True, eq=False)
class EmbeddedIsing:
    model: IsingModel                # indexed by position in ``qubits``
    qubits: tuple[int, ...]          # chimera ids
    embedding: Embedding             # chimera ids
    local: Embedding                 # same chains as positions in ``model``
    chain_strength: float
    chain_bonds: tuple[tuple[int, int], ...]
    # coupler (model positions) -> ("chain", var, 1.0) or ("edge", (u, v), share)
    provenance: dict[tuple[int, int], tuple]

    def unembed(self, states, seed: int = 0):
        return unembed(states, self.local, seed)


def embed_ising(m: IsingModel, e: Embedding, g: ChimeraGraph, chain_strength: float) -> EmbeddedIsing:
    if not (chain_strength > 0 and math.isfinite(chain_strength)):
        raise ValueError(f"chain_strength must be positive, got {chain_strength!r}")
    if len(e.chains) != m.num_spins:
        raise EmbeddingError(f"embedding has {len(e.chains)} chains for {m.num_spins} variables")
    qubits = tuple(q for chain in e.chains for q in chain)
    pos = {q: i for i, q in enumerate(qubits)}
    local = Embedding(tuple(tuple(pos[q] for q in chain) for chain in e.chains))

    h = np.zeros(len(qubits))
    for v, chain in enumerate(local.chains):
        h[list(chain)] = m.h[v] / len(chain)

    couplers = inter_chain_couplers(e, g)
    J: dict[tuple[int, int], float] = {}
    provenance: dict[tuple[int, int], tuple] = {}
    for (u, v), w in m.J.items():
        key = (u, v) if u < v else (v, u)
        if key not in couplers:
            raise EmbeddingError(f"logical coupling {key} has no physical coupler")
        phys = couplers[key]
        share = w / len(phys)
        for p, q in phys:
            a, b = sorted((pos[p], pos[q]))
            J[(a, b)] = J.get((a, b), 0.0) + share
            provenance[(a, b)] = ("edge", key, share)

    bonds = []
    for v, chain in enumerate(e.chains):
        members = set(chain)
        for p in chain:
            for q in g.adjacency.get(p, ()):
                if q in members and p < q:
                    a, b = sorted((pos[p], pos[q]))
                    bonds.append((a, b))
                    J[(a, b)] = -chain_strength
                    provenance[(a, b)] = ("chain", v, 1.0)
    model = IsingModel(h, J, m.offset, m.ref_offset, m.meta)
    return EmbeddedIsing(model, qubits, e, local, chain_strength, tuple(sorted(bonds)), provenance)


def unembed(states, e: Embedding, seed: int = 0):
    """Majority vote per chain; ties drawn from a seeded stream.

    ``states`` is one state or a ``(reads, qubits)`` array indexed like the chains.
    Returns ``(logical, chain_break_fraction)`` with matching shapes.
    """
    arr = np.asarray(states)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    reads = len(arr)
    nchains = len(e.chains)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    ties = rng.integers(0, 2, size=(reads, nchains)).astype(np.int8) * 2 - 1
    logical = np.empty((reads, nchains), dtype=np.int8)
    broken = np.zeros(reads, dtype=np.int64)
    for v, chain in enumerate(e.chains):
        sub = arr[:, list(chain)].astype(np.int64)
        total = sub.sum(axis=1)
        logical[:, v] = np.where(total > 0, 1, np.where(total < 0, -1, ties[:, v]))
        broken += (np.abs(total) != len(chain))
    frac = broken / nchains
    if single:
        return logical[0], float(frac[0])
    return logical, frac
