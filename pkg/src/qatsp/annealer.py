"""Simulated-annealing sampler for Ising models.

Each read is an independent restart seeded from ``SeedSequence(seed).spawn``, so
results do not depend on how reads are split across worker threads.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .qubo_model import IsingModel


class DegenerateModelError(ValueError):
    pass


@dataclass(frozen=True)
class Schedule:
    beta_hot: float
    beta_cold: float
    sweeps: int = 1000
    interpolation: str = "geometric"
    # finish each read with zero-temperature sweeps until no single flip lowers the energy
    quench: bool = True

    def __post_init__(self):
        if not (0 < self.beta_hot < self.beta_cold) or not math.isfinite(self.beta_cold):
            raise ValueError(f"need 0 < beta_hot < beta_cold, got {self.beta_hot}, {self.beta_cold}")
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.interpolation not in ("geometric", "linear"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")

    def betas(self) -> np.ndarray:
        if self.sweeps == 1:
            return np.array([self.beta_cold])
        if self.interpolation == "geometric":
            return np.geomspace(self.beta_hot, self.beta_cold, self.sweeps)
        return np.linspace(self.beta_hot, self.beta_cold, self.sweeps)


def flip_bounds(m: IsingModel) -> np.ndarray:
    """Per-spin bound ``2 (|h_i| + sum_j |J_ij|)`` on the single-flip energy change."""
    bound = np.abs(m.h).astype(np.float64)
    rows, cols, vals = m.coupling_arrays()
    np.add.at(bound, rows, np.abs(vals))
    np.add.at(bound, cols, np.abs(vals))
    return 2.0 * bound


def default_schedule(m: IsingModel, sweeps: int = 1000, **kwargs) -> Schedule:
    """Hot end flips the stiffest spin with probability 1/2; cold end accepts the smallest
    possible uphill move (twice the smallest nonzero coefficient) with probability 1/100."""
    if m.num_spins == 0:
        raise ValueError("empty model")
    bounds = flip_bounds(m)
    _, _, vals = m.coupling_arrays()
    coefs = np.abs(np.concatenate([m.h, vals]))
    coefs = coefs[coefs > 0]
    if len(coefs) == 0:
        raise DegenerateModelError("all biases and couplings are zero")
    de_max = float(bounds.max())
    de_min = 2.0 * float(coefs.min())
    return Schedule(math.log(2.0) / de_max, math.log(100.0) / de_min, sweeps, **kwargs)


@dataclass(eq=False)
class SampleSet:
    """Distinct final states with reported energies, counts and mean chain-break fraction."""

    states: np.ndarray          # (k, n) int8 spins
    energies: np.ndarray        # (k,)
    occurrences: np.ndarray     # (k,) int64
    chain_break_fraction: np.ndarray  # (k,)
    num_reads: int
    seed: int

    @classmethod
    def from_reads(cls, states: np.ndarray, energies: np.ndarray, seed: int,
                   chain_break: np.ndarray | None = None) -> "SampleSet":
        states = np.asarray(states, dtype=np.int8)
        reads = len(states)
        if chain_break is None:
            chain_break = np.zeros(reads)
        uniq, first, inverse, counts = np.unique(states, axis=0, return_index=True,
                                                 return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        cbf = np.bincount(inverse, weights=chain_break, minlength=len(uniq)) / counts
        en = np.asarray(energies, dtype=np.float64)[first]
        # np.unique sorts lexicographically; a stable sort by energy keeps that as tiebreak
        order = np.argsort(en, kind="stable")
        return cls(uniq[order], en[order], counts[order].astype(np.int64), cbf[order], reads, seed)

    def __len__(self) -> int:
        return len(self.states)

    def records(self):
        for s, e, c, b in zip(self.states, self.energies, self.occurrences, self.chain_break_fraction):
            yield s, float(e), int(c), float(b)

    def lowest(self) -> tuple[np.ndarray, float]:
        return self.states[0], float(self.energies[0])

    def mean_chain_break(self) -> float:
        return float((self.chain_break_fraction * self.occurrences).sum() / self.num_reads)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state", "energy", "occurrences", "chain_break_fraction"])
        for s, e, c, b in self.records():
            w.writerow(["".join("1" if v > 0 else "0" for v in s), repr(e), c, repr(b)])
        return buf.getvalue()


def read_seeds(seed: int, num_reads: int) -> np.ndarray:
    """One 64-bit generator state per read, from independent ``SeedSequence`` children."""
    children = np.random.SeedSequence(seed).spawn(num_reads)
    return np.array([c.generate_state(1, np.uint64)[0] for c in children], dtype=np.uint64)


def _csr(m: IsingModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = m.num_spins
    rows, cols, vals = m.coupling_arrays()
    src = np.concatenate([rows, cols])
    dst = np.concatenate([cols, rows])
    w = np.concatenate([vals, vals])
    order = np.lexsort((dst, src))
    src, dst, w = src[order], dst[order], w[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    return np.cumsum(indptr), dst.astype(np.int64), w.astype(np.float64)


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TO_UNIT = 1.0 / 9007199254740992.0


@numba.njit(inline="always")
def _next_u64(state):
    # splitmix64; numba's np.random costs ~30 ns per draw in this loop
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@numba.njit(inline="always")
def _uniform(state):
    return float(_next_u64(state) >> np.uint64(11)) * _TO_UNIT


@numba.njit(cache=True, nogil=True)
def _flip(i, s, field, indptr, indices, data):
    s[i] = -s[i]
    d = 2.0 * s[i]
    for p in range(indptr[i], indptr[i + 1]):
        field[indices[p]] += d * data[p]


@numba.njit(cache=True, nogil=True)
def _anneal(h, indptr, indices, data, betas, seeds, quench,
            cptr, cmem, bptr, bu, bv, bw, out):
    n = len(h)
    nc = len(cptr) - 1
    field = np.empty(n)
    order = np.arange(n)
    corder = np.arange(max(nc, 1))
    state = np.zeros(1, dtype=np.uint64)
    for r in range(len(seeds)):
        state[0] = seeds[r]
        s = out[r]
        for i in range(n):
            s[i] = 1 if _uniform(state) < 0.5 else -1
        for i in range(n):
            f = h[i]
            for p in range(indptr[i], indptr[i + 1]):
                f += data[p] * s[indices[p]]
            field[i] = f
        for i in range(n):
            order[i] = i
        for c in range(nc):
            corder[c] = c
        for beta in betas:
            for i in range(n - 1, 0, -1):
                j = int(_uniform(state) * (i + 1))
                t = order[i]
                order[i] = order[j]
                order[j] = t
            for k in range(n):
                i = order[k]
                de = -2.0 * s[i] * field[i]
                if de <= 0.0 or _uniform(state) < math.exp(-beta * de):
                    _flip(i, s, field, indptr, indices, data)
            if nc == 0:
                continue
            # one whole-cluster flip proposal per cluster; internal couplings are
            # counted twice by the summed single-spin terms, hence the correction
            for c in range(nc - 1, 0, -1):
                j = int(_uniform(state) * (c + 1))
                t = corder[c]
                corder[c] = corder[j]
                corder[j] = t
            for k in range(nc):
                c = corder[k]
                de = 0.0
                for p in range(cptr[c], cptr[c + 1]):
                    i = cmem[p]
                    de -= 2.0 * s[i] * field[i]
                for p in range(bptr[c], bptr[c + 1]):
                    de += 4.0 * bw[p] * s[bu[p]] * s[bv[p]]
                if de <= 0.0 or _uniform(state) < math.exp(-beta * de):
                    for p in range(cptr[c], cptr[c + 1]):
                        _flip(cmem[p], s, field, indptr, indices, data)
        if quench:
            for _ in range(10 * n + 10):
                changed = False
                for i in range(n):
                    if -2.0 * s[i] * field[i] < -1e-12:
                        _flip(i, s, field, indptr, indices, data)
                        changed = True
                if not changed:
                    break


def _cluster_arrays(m: IsingModel, clusters):
    """Flattened cluster members plus the couplings internal to each cluster."""
    clusters = [] if clusters is None else [list(c) for c in clusters]
    owner = np.full(m.num_spins, -1, dtype=np.int64)
    for c, members in enumerate(clusters):
        for i in members:
            if not 0 <= i < m.num_spins:
                raise ValueError(f"cluster {c} has spin {i} outside the model")
            if owner[i] >= 0:
                raise ValueError(f"spin {i} is in clusters {owner[i]} and {c}")
            owner[i] = c
    inner: list[list[tuple[int, int, float]]] = [[] for _ in clusters]
    rows, cols, vals = m.coupling_arrays()
    for u, v, w in zip(rows, cols, vals):
        if owner[u] >= 0 and owner[u] == owner[v]:
            inner[owner[u]].append((int(u), int(v), float(w)))
    cptr = np.cumsum([0] + [len(c) for c in clusters]).astype(np.int64)
    cmem = np.array([i for c in clusters for i in c], dtype=np.int64)
    bptr = np.cumsum([0] + [len(b) for b in inner]).astype(np.int64)
    flat = [x for b in inner for x in b]
    bu = np.array([x[0] for x in flat], dtype=np.int64)
    bv = np.array([x[1] for x in flat], dtype=np.int64)
    bw = np.array([x[2] for x in flat], dtype=np.float64)
    return cptr, cmem, bptr, bu, bv, bw


def anneal_reads(m: IsingModel, num_reads: int, schedule: Schedule | None = None,
                 seed: int = 0, jobs: int = 1, clusters=None) -> np.ndarray:
    """Final spin state of every read, shape ``(num_reads, n)``.

    ``clusters`` are disjoint spin groups (typically embedding chains) that also get a
    joint flip proposal once per sweep.
    """
    if num_reads < 1:
        raise ValueError("num_reads must be >= 1")
    if m.num_spins == 0:
        raise ValueError("empty model")
    schedule = schedule or default_schedule(m)
    indptr, indices, data = _csr(m)
    h = np.ascontiguousarray(m.h, dtype=np.float64)
    betas = schedule.betas()
    seeds = read_seeds(seed, num_reads)
    carrs = _cluster_arrays(m, clusters)
    out = np.empty((num_reads, m.num_spins), dtype=np.int8)
    jobs = max(1, min(jobs, num_reads))
    bounds = np.linspace(0, num_reads, jobs + 1).astype(int)

    def work(k):
        lo, hi = bounds[k], bounds[k + 1]
        _anneal(h, indptr, indices, data, betas, seeds[lo:hi], schedule.quench, *carrs, out[lo:hi])

    if jobs == 1:
        work(0)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(work, range(jobs)))
    return out


def sample(m: IsingModel, num_reads: int, schedule: Schedule | None = None,
           seed: int = 0, jobs: int = 1, clusters=None) -> SampleSet:
    states = anneal_reads(m, num_reads, schedule, seed, jobs, clusters)
    return SampleSet.from_reads(states, m.reported_energies(states), seed)
