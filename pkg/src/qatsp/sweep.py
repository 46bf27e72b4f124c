"""Parameter grids, the end-to-end sampling pipeline and per-cell metrics.

A cell is one (qubo_type, A, B, chain_strength) configuration. Every cell of a sweep
uses the same master seed, so cells differ only through their model coefficients.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from . import annealer, embedding, oracle
from .qubo_model import (Qubo, QuboMeta, TourDecode, auto_scale, build_qubo, decode_state,
                         qubo_to_ising, qubo_type_name, spins_to_bits)
from .tsp_instance import Instance, tour_length

DEFAULT_A_VALUES = (0.4, 0.55, 0.7, 0.85, 1.0)
GRID_POINTS = 5
B_MIN = 0.001

CSV_HEADER = ("qubo_type", "A", "B", "chain_strength", "A_real", "B_real", "cs_real", "scale",
              "num_reads", "n_feasible", "n_optimum", "n_nonpenalized", "feasible_ratio",
              "optimum_ratio", "optimum_by_feasible", "min_energy", "mean_chain_break", "seed")
UNDEFINED = "NA"
METRICS = ("feasible_ratio", "optimum_ratio", "optimum_by_feasible")


def _check_A(A: float) -> None:
    if not (0.0 < A <= 1.0):
        raise ValueError(f"A must lie in (0, 1], got {A!r}")


def b_values(A: float) -> list[float]:
    _check_A(A)
    step = (A / 2.0 - B_MIN) / (GRID_POINTS - 1)
    return [B_MIN + k * step for k in range(GRID_POINTS)]


def chain_values(A: float) -> list[float]:
    _check_A(A)
    step = (1.0 - A) / (GRID_POINTS - 1)
    return [A + k * step for k in range(GRID_POINTS)]


@dataclass(frozen=True)
class Cell:
    qubo_type: str
    A: float
    B: float
    chain_strength: float

    def key(self) -> tuple:
        return (self.qubo_type, self.A, self.B, self.chain_strength)


@dataclass(frozen=True)
class GridSpec:
    A_values: tuple[float, ...] = DEFAULT_A_VALUES
    qubo_types: tuple[str, ...] = ("reference", "heuristic")
    num_reads: int = 200
    sweeps: int = 1000
    seed: int = 0

    def __post_init__(self):
        for A in self.A_values:
            _check_A(A)
        object.__setattr__(self, "qubo_types", tuple(qubo_type_name(t) for t in self.qubo_types))

    def cells(self) -> list[Cell]:
        return build_grid(self.A_values, self.qubo_types)


def build_grid(A_values: Iterable[float] = DEFAULT_A_VALUES,
               qubo_types: Iterable[str] = ("reference", "heuristic")) -> list[Cell]:
    """Cross product per A: 5 B values by 5 chain strengths, for each QUBO type."""
    cells = []
    for kind in qubo_types:
        kind = qubo_type_name(kind)
        for A in A_values:
            for B in b_values(A):
                for cs in chain_values(A):
                    cells.append(Cell(kind, float(A), B, cs))
    return cells


@dataclass(frozen=True)
class SolverConfig:
    num_reads: int = 200
    sweeps: int = 1000
    seed: int = 0
    embed: bool = True
    # None picks the smallest Chimera that holds the clique
    chimera_m: int | None = None
    # joint chain-flip proposals in the annealer (only used when embedding)
    chain_moves: bool = True
    jobs: int = 1

    def __post_init__(self):
        if self.num_reads < 1:
            raise ValueError("num_reads must be >= 1")
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.chimera_m is not None and self.chimera_m < 1:
            raise ValueError("chimera_m must be >= 1")


@lru_cache(maxsize=16)
def _clique(num_vars: int, m: int) -> tuple[embedding.ChimeraGraph, embedding.Embedding]:
    g = embedding.chimera_graph(m)
    return g, embedding.clique_embedding(num_vars, g)


@dataclass(eq=False)
class PipelineOutput:
    qubo: Qubo
    scale: float
    A_real: float
    B_real: float
    cs_real: float
    # logical states with unscaled QUBO energies (offset excluded)
    samples: annealer.SampleSet
    decodes: list[TourDecode]


def run_pipeline(instance: Instance, qubo_type: str, A: float, B: float, chain_strength: float,
                 config: SolverConfig) -> PipelineOutput:
    """Build, convert, embed, auto-scale, sample, unembed and decode one configuration."""
    qubo = build_qubo(qubo_type, instance.dist_norm, A, B)
    ising = qubo_to_ising(qubo)
    clusters = None
    if config.embed:
        m = config.chimera_m or embedding.min_chimera_size(ising.num_spins)
        g, emb = _clique(ising.num_spins, m)
        embedded = embedding.embed_ising(ising, emb, g, chain_strength)
        physical = embedded.model
        if config.chain_moves:
            clusters = embedded.local.chains
    else:
        if not (chain_strength > 0 and math.isfinite(chain_strength)):
            raise ValueError(f"chain_strength must be positive, got {chain_strength!r}")
        embedded, physical = None, ising
    scaled, params = auto_scale(physical, chain_strength)
    schedule = annealer.default_schedule(scaled, sweeps=config.sweeps)
    raw = annealer.anneal_reads(scaled, config.num_reads, schedule, config.seed, config.jobs, clusters)
    if embedded is not None:
        spins, cbf = embedded.unembed(raw, seed=config.seed)
    else:
        spins, cbf = raw, np.zeros(len(raw))
    energies = qubo.energies(spins_to_bits(spins))
    samples = annealer.SampleSet.from_reads(spins, energies, config.seed, chain_break=cbf)
    decodes = [decode_state(spins_to_bits(s), qubo.meta) for s in samples.states]
    return PipelineOutput(qubo, params.scale, params.A_real, params.B_real, params.cs_real,
                          samples, decodes)


@dataclass
class RunRecord:
    qubo_type: str
    A: float
    B: float
    chain_strength: float
    A_real: float | None = None
    B_real: float | None = None
    cs_real: float | None = None
    scale: float | None = None
    num_reads: int = 0
    n_feasible: int | None = None
    n_optimum: int | None = None
    n_nonpenalized: int | None = None
    feasible_ratio: float | None = None
    optimum_ratio: float | None = None
    optimum_by_feasible: float | None = None
    min_energy: float | None = None
    mean_chain_break: float | None = None
    seed: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def cell(self) -> Cell:
        return Cell(self.qubo_type, self.A, self.B, self.chain_strength)

    def to_row(self) -> list[str]:
        row = []
        for name in CSV_HEADER:
            v = getattr(self, name)
            if v is None:
                row.append(UNDEFINED if name == "optimum_by_feasible" and self.ok else "")
            elif isinstance(v, float):
                row.append(repr(v))
            else:
                row.append(str(v))
        return row

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def metrics_from_samples(samples: annealer.SampleSet, decodes: Sequence[TourDecode],
                         instance: Instance, optimum_length: int) -> dict:
    """Feasible / optimum / non-penalized counts and ratios, weighted by occurrences."""
    n_feasible = n_optimum = n_clean = 0
    for dec, count in zip(decodes, samples.occurrences):
        if not dec.feasible:
            continue
        count = int(count)
        n_feasible += count
        if not dec.penalized:
            n_clean += count
        if tour_length(instance, dec.order) == optimum_length:
            n_optimum += count
    reads = samples.num_reads
    return {
        "num_reads": reads,
        "n_feasible": n_feasible,
        "n_optimum": n_optimum,
        "n_nonpenalized": n_clean,
        "feasible_ratio": n_feasible / reads,
        "optimum_ratio": n_optimum / reads,
        "optimum_by_feasible": n_optimum / n_feasible if n_feasible else None,
        "min_energy": float(samples.energies.min()),
        "mean_chain_break": samples.mean_chain_break(),
    }


def run_cell(instance: Instance, cell: Cell, config: SolverConfig, optimum_length: int,
             keep: bool = False):
    """RunRecord for one cell; stage failures become an ``error`` entry instead of raising.

    With ``keep`` the pipeline output is returned as well (``None`` on failure).
    """
    rec = RunRecord(cell.qubo_type, cell.A, cell.B, cell.chain_strength,
                    num_reads=config.num_reads, seed=config.seed)
    out = None
    try:
        out = run_pipeline(instance, cell.qubo_type, cell.A, cell.B, cell.chain_strength, config)
    except (ValueError, ArithmeticError) as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
    else:
        rec.A_real, rec.B_real, rec.cs_real, rec.scale = out.A_real, out.B_real, out.cs_real, out.scale
        for k, v in metrics_from_samples(out.samples, out.decodes, instance, optimum_length).items():
            setattr(rec, k, v)
    return (rec, out) if keep else rec


@dataclass
class SweepResult:
    instance: str
    optimum_length: int
    config: SolverConfig
    records: list[RunRecord] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.records:
            w.writerow(r.to_row())
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "instance": self.instance,
            "optimum_length": self.optimum_length,
            "config": asdict(self.config),
            "num_cells": len(self.records),
            "num_failed": sum(not r.ok for r in self.records),
            "distinct_real_configs": distinct_real_configs(self.records),
            "records": [asdict(r) for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def run_sweep(instance: Instance, cells: Sequence[Cell], config: SolverConfig,
              optimum_length: int | None = None, jobs: int = 1) -> SweepResult:
    """Run every cell; cells are spread over ``jobs`` threads, each sampling single-threaded."""
    if optimum_length is None:
        optimum_length = oracle.brute_optimum(instance, jobs=jobs).length
    cells = sorted(cells, key=Cell.key)
    if jobs > 1 and len(cells) > 1:
        inner = SolverConfig(**{**asdict(config), "jobs": 1})
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(lambda c: run_cell(instance, c, inner, optimum_length), cells))
    else:
        records = [run_cell(instance, c, config, optimum_length) for c in cells]
    return SweepResult(instance.name, optimum_length, config, records)


def distinct_real_configs(records: Iterable[RunRecord], decimals: int = 3) -> dict[str, int]:
    """Cell count per QUBO type before and after collapsing equal post-scale triples."""
    raw: dict[str, int] = {}
    real: dict[str, set] = {}
    for r in records:
        raw[r.qubo_type] = raw.get(r.qubo_type, 0) + 1
        if r.ok:
            key = tuple(round(v, decimals) for v in (r.A_real, r.B_real, r.cs_real))
            real.setdefault(r.qubo_type, set()).add(key)
    out = {f"{k}_cells": v for k, v in sorted(raw.items())}
    out.update({f"{k}_distinct_real": len(v) for k, v in sorted(real.items())})
    return out


@dataclass(eq=False)
class LandscapeGrid:
    metric: str
    a_edges: np.ndarray
    b_edges: np.ndarray
    values: np.ndarray   # (len(a_edges)-1, len(b_edges)-1), nan where a bin is empty
    counts: np.ndarray

    @property
    def empty(self) -> bool:
        return self.values.size == 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["A_real_lo", "A_real_hi", "B_real_lo", "B_real_hi", self.metric, "count"])
        if self.empty:
            w.writerow(["EMPTY", "", "", "", "", 0])
            return buf.getvalue()
        for i in range(self.values.shape[0]):
            for j in range(self.values.shape[1]):
                v = self.values[i, j]
                w.writerow([repr(float(self.a_edges[i])), repr(float(self.a_edges[i + 1])),
                            repr(float(self.b_edges[j])), repr(float(self.b_edges[j + 1])),
                            "" if np.isnan(v) else repr(float(v)), int(self.counts[i, j])])
        return buf.getvalue()


def _bin_index(x: np.ndarray, edges: np.ndarray) -> np.ndarray:
    if len(edges) == 2 and edges[0] == edges[1]:
        return np.zeros(len(x), dtype=np.int64)
    return np.clip(np.searchsorted(edges, x, side="right") - 1, 0, len(edges) - 2)


def landscape_grid(records: Iterable[RunRecord], metric: str = "feasible_ratio",
                   where: Callable[[RunRecord], bool] | None = None, bins: int = 20) -> LandscapeGrid:
    """Mean of ``metric`` per (A_real, B_real) bin, uniform over the observed range.

    Each axis uses ``min(bins, distinct values)`` bins. Cells that failed or whose metric is
    undefined are skipped; if nothing is left the grid is empty.
    """
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    rows = [r for r in records if r.ok and (where is None or where(r))
            and getattr(r, metric) is not None]
    if not rows:
        z = np.zeros(0)
        return LandscapeGrid(metric, z, z, np.zeros((0, 0)), np.zeros((0, 0), dtype=np.int64))
    a = np.array([r.A_real for r in rows])
    b = np.array([r.B_real for r in rows])
    v = np.array([getattr(r, metric) for r in rows], dtype=np.float64)

    def edges(x):
        k = min(bins, len(np.unique(x)))
        return np.linspace(x.min(), x.max(), k + 1)

    a_edges, b_edges = edges(a), edges(b)
    ia, ib = _bin_index(a, a_edges), _bin_index(b, b_edges)
    shape = (len(a_edges) - 1, len(b_edges) - 1)
    sums = np.zeros(shape)
    counts = np.zeros(shape, dtype=np.int64)
    np.add.at(sums, (ia, ib), v)
    np.add.at(counts, (ia, ib), 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return LandscapeGrid(metric, a_edges, b_edges, values, counts)


@dataclass(eq=False)
class Histogram:
    edges: np.ndarray
    feasible: np.ndarray      # non-penalized feasible
    penalized: np.ndarray     # feasible but using a penalized edge
    infeasible: np.ndarray

    @property
    def total(self) -> int:
        return int(self.feasible.sum() + self.penalized.sum() + self.infeasible.sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["energy_lo", "energy_hi", "feasible", "penalized", "infeasible"])
        for k in range(len(self.feasible)):
            w.writerow([repr(float(self.edges[k])), repr(float(self.edges[k + 1])),
                        int(self.feasible[k]), int(self.penalized[k]), int(self.infeasible[k])])
        return buf.getvalue()


def energy_histogram(samples: annealer.SampleSet, meta: QuboMeta, bins: int = 30) -> Histogram:
    """Occurrence-weighted energy histogram split by decode class."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    decodes = [decode_state(spins_to_bits(s), meta) for s in samples.states]
    edges = np.histogram_bin_edges(samples.energies, bins=bins)
    classes = np.array([0 if d.feasible and not d.penalized else 1 if d.feasible else 2
                        for d in decodes])

    def count(c):
        mask = classes == c
        h, _ = np.histogram(samples.energies[mask], bins=edges, weights=samples.occurrences[mask])
        return h.astype(np.int64)

    return Histogram(edges, count(0), count(1), count(2))


def histogram_svg(hist: Histogram, title: str = "") -> str:
    """Stacked bar chart as SVG text (needs matplotlib)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    centers = (hist.edges[:-1] + hist.edges[1:]) / 2
    width = np.diff(hist.edges)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    bottom = np.zeros(len(centers))
    for label, counts in (("feasible", hist.feasible), ("penalized", hist.penalized),
                          ("infeasible", hist.infeasible)):
        ax.bar(centers, counts, width=width, bottom=bottom, label=label)
        bottom = bottom + counts
    ax.set_xlabel("energy")
    ax.set_ylabel("occurrences")
    ax.set_title(title)
    ax.legend()
    return _svg_text(fig, plt)


def landscape_svg(grid: LandscapeGrid, title: str = "") -> str:
    """Heatmap of a landscape grid as SVG text (needs matplotlib)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    if not grid.empty:
        mesh = ax.pcolormesh(grid.b_edges if grid.b_edges[0] != grid.b_edges[-1] else [0, 1],
                             grid.a_edges if grid.a_edges[0] != grid.a_edges[-1] else [0, 1],
                             np.ma.masked_invalid(grid.values), shading="flat")
        fig.colorbar(mesh, ax=ax, label=grid.metric)
    ax.set_xlabel("B_real")
    ax.set_ylabel("A_real")
    ax.set_title(title)
    return _svg_text(fig, plt)


def _svg_text(fig, plt) -> str:
    buf = io.StringIO()
    # fixed salt and no date keep the SVG byte-stable between runs
    with plt.rc_context({"svg.hashsalt": "qatsp"}):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()
