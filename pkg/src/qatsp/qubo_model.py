"""TSP QUBO builders (reference and median-penalized heuristic), Ising conversion,
auto-scaling to device ranges and state decoding.

Variable layout: ``v(i, j) = i * n + j`` is 1 when city ``i`` sits at position ``j``.
Tours are cyclic: position ``n - 1`` is followed by position 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Literal, Mapping

import numpy as np

QuboType = Literal["reference", "heuristic"]

H_RANGE = 2.0
J_RANGE = 1.0

_SHORT = {"r": "reference", "h": "heuristic", "reference": "reference", "heuristic": "heuristic",
          "r-qubo": "reference", "h-qubo": "heuristic"}


def qubo_type_name(name: str) -> QuboType:
    try:
        return _SHORT[name.lower()]  # type: ignore[return-value]
    except KeyError:
        raise ValueError(f"unknown QUBO type {name!r}; expected r/reference or h/heuristic") from None


def _sig(x: float) -> float:
    return float(f"{x:.12g}")


@dataclass(frozen=True, eq=False)
class QuboMeta:
    qubo_type: QuboType | None
    n: int
    A: float | None = None
    B: float | None = None
    C: float | None = None
    # directed penalized-edge mask E_p (heuristic only)
    penalized: np.ndarray | None = None

    def to_dict(self) -> dict:
        out: dict = {"qubo_type": self.qubo_type, "n": self.n, "A": self.A, "B": self.B, "C": self.C}
        if self.penalized is not None:
            out["penalized_edges"] = [[int(u), int(i)] for u, i in zip(*np.nonzero(self.penalized))]
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "QuboMeta":
        pen = None
        if d.get("penalized_edges") is not None:
            pen = np.zeros((d["n"], d["n"]), dtype=bool)
            for u, i in d["penalized_edges"]:
                pen[u, i] = True
        return cls(qubo_type=d.get("qubo_type"), n=d["n"], A=d.get("A"), B=d.get("B"),
                   C=d.get("C"), penalized=pen)


class _Quadratic:
    """Helpers shared by the 0/1 and +-1 frames: dict coupling storage plus array views."""

    @cached_property
    def _pairs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        items = sorted(self._coupling_map().items())
        if not items:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty.copy(), np.zeros(0)
        rows = np.array([k[0] for k, _ in items], dtype=np.int64)
        cols = np.array([k[1] for k, _ in items], dtype=np.int64)
        vals = np.array([v for _, v in items], dtype=np.float64)
        return rows, cols, vals

    def _coupling_map(self) -> dict[tuple[int, int], float]:
        raise NotImplementedError

    def _form(self, states: np.ndarray, lin: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        rows, cols, vals = self._pairs
        out = states @ lin
        if len(vals):
            out = out + (states[:, rows] * states[:, cols]) @ vals
        return out


@dataclass(frozen=True, eq=False)
class Qubo(_Quadratic):
    """``sum_i a_i x_i + sum_{i<j} b_ij x_i x_j``; ``offset`` is the dropped constant."""

    n_vars: int
    linear: np.ndarray
    quadratic: dict[tuple[int, int], float]
    offset: float = 0.0
    meta: QuboMeta | None = None

    def _coupling_map(self):
        return self.quadratic

    def energy(self, x) -> float:
        """Reported energy (offset excluded)."""
        return float(self._form(np.asarray(x), self.linear)[0])

    def energies(self, X) -> np.ndarray:
        return self._form(X, self.linear)

    def upper_matrix(self) -> np.ndarray:
        Q = np.zeros((self.n_vars, self.n_vars))
        rows, cols, vals = self._pairs
        Q[rows, cols] = vals
        return Q

    def to_dict(self) -> dict:
        return {
            "n_vars": self.n_vars,
            "linear": [[i, _sig(a)] for i, a in enumerate(self.linear) if a != 0.0],
            "quadratic": [[u, v, _sig(b)] for (u, v), b in sorted(self.quadratic.items())],
            "offset": _sig(self.offset),
            "meta": self.meta.to_dict() if self.meta else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping) -> "Qubo":
        lin = np.zeros(d["n_vars"])
        for i, a in d["linear"]:
            lin[i] = a
        quad = {(int(u), int(v)): float(b) for u, v, b in d["quadratic"]}
        meta = QuboMeta.from_dict(d["meta"]) if d.get("meta") else None
        return cls(d["n_vars"], lin, quad, float(d["offset"]), meta)


@dataclass(frozen=True, eq=False)
class IsingModel(_Quadratic):
    """``sum_i h_i s_i + sum_{i<j} J_ij s_i s_j + offset``.

    ``ref_offset`` is the part of ``offset`` excluded from reported energies, so
    ``reported_energy`` agrees with the originating QUBO's reported energy.
    """

    h: np.ndarray
    J: dict[tuple[int, int], float]
    offset: float = 0.0
    ref_offset: float = 0.0
    meta: QuboMeta | None = None

    def _coupling_map(self):
        return self.J

    @property
    def num_spins(self) -> int:
        return len(self.h)

    def energy(self, s) -> float:
        return float(self.energies(s)[0])

    def energies(self, S) -> np.ndarray:
        return self._form(S, self.h) + self.offset

    def reported_energy(self, s) -> float:
        return self.energy(s) - self.ref_offset

    def reported_energies(self, S) -> np.ndarray:
        return self.energies(S) - self.ref_offset

    def coupling_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self._pairs

    def max_abs(self) -> tuple[float, float]:
        hmax = float(np.abs(self.h).max()) if len(self.h) else 0.0
        jmax = max((abs(v) for v in self.J.values()), default=0.0)
        return hmax, jmax

    def scaled(self, factor: float) -> "IsingModel":
        """Divide every coefficient (and offsets) by ``factor``."""
        return IsingModel(self.h / factor, {k: v / factor for k, v in self.J.items()},
                          self.offset / factor, self.ref_offset / factor, self.meta)

    def to_dict(self) -> dict:
        return {
            "n_spins": self.num_spins,
            "h": [[i, _sig(v)] for i, v in enumerate(self.h) if v != 0.0],
            "J": [[u, v, _sig(w)] for (u, v), w in sorted(self.J.items())],
            "offset": _sig(self.offset),
            "ref_offset": _sig(self.ref_offset),
            "meta": self.meta.to_dict() if self.meta else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class ScaledParams:
    scale: float
    A_real: float | None
    B_real: float | None
    cs_real: float | None


@dataclass(frozen=True)
class TourDecode:
    feasible: bool
    order: tuple[int, ...] | None = None
    # ("row", city) or ("column", position) for the first violated constraint
    violation: tuple[str, int] | None = None
    penalized: bool = False
    n_penalized_steps: int = 0


def var_index(i: int, j: int, n: int) -> int:
    return i * n + j


def _add(quad: dict, u: int, v: int, b: float) -> None:
    if u == v:
        raise ValueError("diagonal entries belong in the linear part")
    key = (u, v) if u < v else (v, u)
    quad[key] = quad.get(key, 0.0) + b


def _check_positive(**params: float) -> None:
    for name, val in params.items():
        if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
            raise ValueError(f"{name} must be a finite positive number, got {val!r}")


def _constraint_terms(n: int, A: float, lin: np.ndarray, quad: dict) -> float:
    """Accumulate A*(1 - sum x)^2 over every row and column; returns the constant."""
    offset = 0.0
    for line in range(n):
        for members in ([var_index(line, j, n) for j in range(n)],
                        [var_index(i, line, n) for i in range(n)]):
            for a_pos, u in enumerate(members):
                lin[u] -= A
                for v in members[a_pos + 1:]:
                    _add(quad, u, v, 2.0 * A)
            offset += A
    return offset


def build_constraint_qubo(n: int, A: float) -> Qubo:
    """The permutation-constraint part alone."""
    _check_positive(A=A)
    lin = np.zeros(n * n)
    quad: dict[tuple[int, int], float] = {}
    offset = _constraint_terms(n, A, lin, quad)
    return Qubo(n * n, lin, quad, offset, QuboMeta(None, n, A=A))


def _tour_terms(weights: np.ndarray, B: float, quad: dict) -> None:
    n = len(weights)
    for u in range(n):
        for i in range(n):
            if u == i:
                continue
            w = B * weights[u, i]
            if w == 0.0:
                continue
            for j in range(n):
                _add(quad, var_index(u, j, n), var_index(i, (j + 1) % n, n), w)


def _validated(dist_norm, A: float, B: float) -> np.ndarray:
    _check_positive(A=A, B=B)
    d = np.asarray(dist_norm, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 3:
        raise ValueError(f"dist_norm must be a square matrix with n >= 3, got shape {d.shape}")
    if np.any(d < 0) or np.any(d > 1) or np.any(np.diag(d) != 0):
        raise ValueError("dist_norm entries must lie in [0, 1] with a zero diagonal")
    return d


def build_r_qubo(dist_norm, A: float, B: float) -> Qubo:
    d = _validated(dist_norm, A, B)
    n = len(d)
    lin = np.zeros(n * n)
    quad: dict[tuple[int, int], float] = {}
    offset = _constraint_terms(n, A, lin, quad)
    _tour_terms(d, B, quad)
    return Qubo(n * n, lin, quad, offset, QuboMeta("reference", n, A=A, B=B))


def penalized_edges(dist_norm) -> np.ndarray:
    """Directed mask ``D[u, i] > median of the n-1 distances departing u``."""
    d = np.asarray(dist_norm, dtype=np.float64)
    n = len(d)
    off = ~np.eye(n, dtype=bool)
    medians = np.array([np.median(d[u, off[u]]) for u in range(n)])
    return (d > medians[:, None]) & off


def build_h_qubo(dist_norm, A: float, B: float) -> Qubo:
    d = _validated(dist_norm, A, B)
    C = 2.0 * A / B
    if not math.isfinite(C) or not math.isfinite(B * C):
        raise ValueError(f"B={B!r} is too small: C = 2A/B overflows")
    pen = penalized_edges(d)
    weights = np.where(pen, C, d)
    n = len(d)
    lin = np.zeros(n * n)
    quad: dict[tuple[int, int], float] = {}
    offset = _constraint_terms(n, A, lin, quad)
    _tour_terms(weights, B, quad)
    pen.setflags(write=False)
    return Qubo(n * n, lin, quad, offset, QuboMeta("heuristic", n, A=A, B=B, C=C, penalized=pen))


def build_qubo(qubo_type: str, dist_norm, A: float, B: float) -> Qubo:
    kind = qubo_type_name(qubo_type)
    return build_r_qubo(dist_norm, A, B) if kind == "reference" else build_h_qubo(dist_norm, A, B)


def qubo_to_ising(q: Qubo) -> IsingModel:
    """Substitute ``x = (1 + s) / 2``."""
    h = q.linear / 2.0
    J: dict[tuple[int, int], float] = {}
    const = float(q.linear.sum()) / 2.0
    for (u, v), b in q.quadratic.items():
        J[(u, v)] = b / 4.0
        h[u] += b / 4.0
        h[v] += b / 4.0
        const += b / 4.0
    return IsingModel(h, J, q.offset + const, q.offset, q.meta)


def auto_scale(m: IsingModel, chain_strength: float | None = None,
               h_range: float = H_RANGE, j_range: float = J_RANGE) -> tuple[IsingModel, ScaledParams]:
    """Uniformly shrink ``m`` into ``|h| <= h_range``, ``|J| <= j_range``; never expands."""
    if m.num_spins == 0:
        raise ValueError("cannot auto-scale an empty model")
    hmax, jmax = m.max_abs()
    s = max(1.0, hmax / h_range, jmax / j_range)
    scaled = m if s == 1.0 else m.scaled(s)
    A = m.meta.A if m.meta else None
    B = m.meta.B if m.meta else None
    params = ScaledParams(
        scale=s,
        A_real=None if A is None else A / s,
        B_real=None if B is None else B / s,
        cs_real=None if chain_strength is None else chain_strength / s,
    )
    return scaled, params


def spins_to_bits(s) -> np.ndarray:
    return ((np.asarray(s) + 1) // 2).astype(np.int8)


def bits_to_spins(x) -> np.ndarray:
    return (2 * np.asarray(x, dtype=np.int8) - 1).astype(np.int8)


def decode_state(bits, meta: QuboMeta) -> TourDecode:
    n = meta.n
    bits = np.asarray(bits)
    if bits.shape != (n * n,):
        raise ValueError(f"expected {n * n} bits, got shape {bits.shape}")
    X = bits.reshape(n, n)
    rows = X.sum(axis=1)
    bad_rows = np.nonzero(rows != 1)[0]
    if len(bad_rows):
        return TourDecode(False, violation=("row", int(bad_rows[0])))
    cols = X.sum(axis=0)
    bad_cols = np.nonzero(cols != 1)[0]
    if len(bad_cols):
        return TourDecode(False, violation=("column", int(bad_cols[0])))
    order = tuple(int(c) for c in np.argmax(X, axis=0))
    k = 0
    if meta.qubo_type == "heuristic" and meta.penalized is not None:
        idx = np.asarray(order)
        k = int(meta.penalized[idx, np.roll(idx, -1)].sum())
    return TourDecode(True, order=order, penalized=k > 0, n_penalized_steps=k)


def order_to_bits(order: Iterable[int], n: int) -> np.ndarray:
    x = np.zeros(n * n, dtype=np.int8)
    for j, city in enumerate(order):
        x[var_index(city, j, n)] = 1
    return x
