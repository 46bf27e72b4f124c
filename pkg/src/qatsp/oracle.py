"""Exhaustive ground truth for small TSP QUBOs.

Everything here evaluates the QUBO object it is handed on explicit 0/1 states, so it
checks the builders rather than re-deriving their closed forms.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .qubo_model import Qubo, build_constraint_qubo, decode_state
from .tsp_instance import Instance, Tour, make_tour

MAX_TOUR_ENUM_N = 10
MAX_COLUMN_FUNCTIONS = 10**8
MAX_BRUTE_N = 12
_CHUNK = 1 << 14


class BudgetError(ValueError):
    pass


@dataclass
class LandscapeSummary:
    n: int
    qubo_type: str | None
    A: float
    B: float
    n_feasible: int
    best_energy: float
    worst_energy: float
    best_coef: float
    worst_coef: float
    optimal_orders: list[tuple[int, ...]]
    optimal_length: int
    n_nonpenalized: int | None = None
    n_penalized: int | None = None
    best_nonpenalized_coef: float | None = None
    worst_nonpenalized_coef: float | None = None
    # fewest penalized steps among penalized tours, and the B-coefficient of the
    # remaining (non-penalized) steps for the best such tour
    best_penalized_steps: int | None = None
    best_penalized_coef: float | None = None
    best_infeasible: "InfeasibleRecord | None" = None
    energies: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("energies")
        d["optimal_orders"] = [list(o) for o in self.optimal_orders]
        for key in ("best_coef", "worst_coef", "best_nonpenalized_coef",
                    "worst_nonpenalized_coef", "best_penalized_coef"):
            if d[key] is not None:
                d[key + "_5dp"] = round(d[key], 5)
        if self.best_infeasible is not None:
            d["best_infeasible"] = self.best_infeasible.to_dict()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass
class InfeasibleRecord:
    bits: np.ndarray
    cities_by_position: tuple[int, ...]
    energy: float
    constraint_energy: float
    b_coef: float
    # min energy restricted to the -(2n-2)A stratum (one city missing, one doubled)
    stratum_energy: float
    stratum_b_coef: float

    def to_dict(self) -> dict:
        return {
            "bits": "".join(str(int(b)) for b in self.bits),
            "cities_by_position": list(self.cities_by_position),
            "energy": self.energy,
            "constraint_energy": self.constraint_energy,
            "b_coef": self.b_coef,
            "b_coef_5dp": round(self.b_coef, 5),
            "stratum_energy": self.stratum_energy,
            "stratum_b_coef": self.stratum_b_coef,
            "stratum_b_coef_5dp": round(self.stratum_b_coef, 5),
        }


def _qubo_params(qubo: Qubo) -> tuple[int, float, float]:
    if qubo.meta is None or qubo.meta.A is None or qubo.meta.B is None:
        raise ValueError("qubo has no (n, A, B) metadata")
    return qubo.meta.n, qubo.meta.A, qubo.meta.B


def _evaluate(qubo: Qubo, X: np.ndarray) -> np.ndarray:
    Q = qubo.upper_matrix()
    Xf = X.astype(np.float64)
    return Xf @ qubo.linear + np.einsum("ij,ij->i", Xf @ Q, Xf)


def _perm_states(perms: np.ndarray, n: int) -> np.ndarray:
    """Rows of ``perms`` give the city at each position."""
    X = np.zeros((len(perms), n * n), dtype=np.int8)
    rows = np.arange(len(perms))[:, None]
    X[rows, perms * n + np.arange(n)] = 1
    return X


def enumerate_tours(instance: Instance, qubo: Qubo, keep_energies: bool = False,
                    jobs: int = 1) -> LandscapeSummary:
    """Evaluate ``qubo`` on all n! position sequences (rotations counted separately)."""
    n, A, B = _qubo_params(qubo)
    if n != instance.n:
        raise ValueError(f"qubo is for n={n}, instance has n={instance.n}")
    if n > MAX_TOUR_ENUM_N:
        raise BudgetError(f"n={n} exceeds the tour enumeration budget (n <= {MAX_TOUR_ENUM_N})")
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    chunks = [perms[i:i + _CHUNK] for i in range(0, len(perms), _CHUNK)]

    def work(p):
        return _evaluate(qubo, _perm_states(p, n))

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        energies = np.concatenate(list(pool.map(work, chunks)))

    base = -2.0 * n * A
    coefs = (energies - base) / B
    best = int(np.argmin(energies))
    worst = int(np.argmax(energies))
    opt_mask = np.isclose(energies, energies[best], rtol=0.0, atol=1e-9)
    optimal_orders = [tuple(int(c) for c in p) for p in perms[opt_mask]]
    summary = LandscapeSummary(
        n=n, qubo_type=qubo.meta.qubo_type, A=A, B=B,
        n_feasible=len(perms),
        best_energy=float(energies[best]), worst_energy=float(energies[worst]),
        best_coef=float(coefs[best]), worst_coef=float(coefs[worst]),
        optimal_orders=optimal_orders,
        optimal_length=make_tour(instance, optimal_orders[0]).length,
        energies=energies if keep_energies else None,
    )
    pen = qubo.meta.penalized
    if qubo.meta.qubo_type == "heuristic" and pen is not None:
        steps = pen[perms, np.roll(perms, -1, axis=1)].sum(axis=1)
        clean = steps == 0
        summary.n_nonpenalized = int(clean.sum())
        summary.n_penalized = int((~clean).sum())
        if clean.any():
            summary.best_nonpenalized_coef = float(coefs[clean].min())
            summary.worst_nonpenalized_coef = float(coefs[clean].max())
        if (~clean).any():
            k = int(steps[~clean].min())
            resid = (energies - base - 2.0 * A * steps) / B
            summary.best_penalized_steps = k
            summary.best_penalized_coef = float(resid[steps == k].min())
    return summary


def _column_function_block(start: int, count: int, n: int) -> np.ndarray:
    """City-per-position arrays for function indices ``start .. start+count-1`` (base-n digits)."""
    idx = np.arange(start, start + count, dtype=np.int64)
    digits = np.empty((count, n), dtype=np.int64)
    for j in range(n - 1, -1, -1):
        idx, digits[:, j] = np.divmod(idx, n)
    return digits


def enumerate_column_functions(instance: Instance, qubo: Qubo, jobs: int = 1) -> InfeasibleRecord:
    """Best non-permutation state among states with exactly one city per position."""
    n, A, B = _qubo_params(qubo)
    if n != instance.n:
        raise ValueError(f"qubo is for n={n}, instance has n={instance.n}")
    total = n ** n
    if total > MAX_COLUMN_FUNCTIONS:
        raise BudgetError(f"{n}^{n} = {total} column functions exceeds the budget {MAX_COLUMN_FUNCTIONS}")
    stratum = -(2 * n - 2) * A
    starts = list(range(0, total, _CHUNK))

    def work(start):
        f = _column_function_block(start, min(_CHUNK, total - start), n)
        counts = _row_counts(f, n)
        constraint = A * ((1 - counts) ** 2).sum(axis=1) - 2.0 * n * A
        nonperm = (counts != 1).any(axis=1)
        E = _evaluate(qubo, _perm_states(f, n))
        E_all = np.where(nonperm, E, np.inf)
        in_stratum = nonperm & np.isclose(constraint, stratum, rtol=0, atol=1e-9)
        E_str = np.where(in_stratum, E, np.inf)
        i = int(np.argmin(E_all))
        s = int(np.argmin(E_str))
        return (E_all[i], start + i), (E_str[s], start + s)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(work, starts))
    # ties resolve to the lowest function index, independent of chunking
    best_e, best_idx = min((r[0] for r in results), key=lambda t: (t[0], t[1]))
    str_e, _ = min((r[1] for r in results), key=lambda t: (t[0], t[1]))
    f = _column_function_block(best_idx, 1, n)
    bits = _perm_states(f, n)[0]
    constraint_q = build_constraint_qubo(n, A)
    cons = constraint_q.energy(bits)
    return InfeasibleRecord(
        bits=bits,
        cities_by_position=tuple(int(c) for c in f[0]),
        energy=float(best_e),
        constraint_energy=float(cons),
        b_coef=float((best_e - cons) / B),
        stratum_energy=float(str_e),
        stratum_b_coef=float((str_e - stratum) / B),
    )


def _row_counts(f: np.ndarray, n: int) -> np.ndarray:
    counts = np.zeros((len(f), n), dtype=np.int64)
    for c in range(n):
        counts[:, c] = (f == c).sum(axis=1)
    return counts


@numba.njit(cache=True, nogil=True)
def _best_in_branch(dist, second, rest):
    """Lexicographic scan of tours 0 -> second -> perm(rest); first minimum wins."""
    m = len(rest)
    perm = rest.copy()
    best = np.iinfo(np.int64).max
    best_perm = perm.copy()
    while True:
        length = dist[0, second]
        prev = second
        for k in range(m):
            length += dist[prev, perm[k]]
            prev = perm[k]
        length += dist[prev, 0]
        if length < best:
            best = length
            best_perm[:] = perm
        # next lexicographic permutation
        i = m - 2
        while i >= 0 and perm[i] >= perm[i + 1]:
            i -= 1
        if i < 0:
            break
        j = m - 1
        while perm[j] <= perm[i]:
            j -= 1
        perm[i], perm[j] = perm[j], perm[i]
        perm[i + 1:] = perm[i + 1:][::-1]
    return best, best_perm


def brute_optimum(instance: Instance, jobs: int = 1) -> Tour:
    """Exact minimum cyclic tour with city 0 held first; (n-1)! candidates."""
    n = instance.n
    if n > MAX_BRUTE_N:
        raise BudgetError(f"n={n} exceeds the brute-force budget (n <= {MAX_BRUTE_N})")
    dist = np.ascontiguousarray(instance.dist, dtype=np.int64)

    def branch(second):
        rest = np.array([c for c in range(1, n) if c != second], dtype=np.int64)
        length, perm = _best_in_branch(dist, second, rest)
        return int(length), (0, second, *(int(c) for c in perm))

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(branch, range(1, n)))
    length, order = min(results, key=lambda r: r[0])
    return Tour(order=order, length=length)


def energy_rows_csv(instance: Instance, qubo: Qubo) -> str:
    """All n! sequence states with energy and class (feasible / penalized)."""
    summary = enumerate_tours(instance, qubo, keep_energies=True)
    n = summary.n
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["state", "energy", "class"])
    for perm, e in zip(itertools.permutations(range(n)), summary.energies):
        bits = np.zeros(n * n, dtype=np.int8)
        bits[np.asarray(perm) * n + np.arange(n)] = 1
        dec = decode_state(bits, qubo.meta)
        cls = "penalized" if dec.penalized else "feasible"
        w.writerow(["".join(map(str, bits)), repr(float(e)), cls])
    return buf.getvalue()

