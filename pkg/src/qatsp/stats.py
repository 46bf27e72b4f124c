"""Repeated-run aggregation and the Wilcoxon rank-sum comparison."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm, rankdata

ALPHA = 0.05
VERDICTS = ("no-significance", "first-better", "second-better")
# table symbols: a filled triangle marks a significant difference, a dash none
SYMBOLS = {"no-significance": "-", "first-better": "▲", "second-better": "▲"}


def aggregate(values: Sequence[float], ddof: int = 0) -> tuple[float, float]:
    """Mean and standard deviation; ``ddof=0`` gives the population (1/n) convention."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("aggregate needs at least one value")
    if x.size <= ddof:
        raise ValueError(f"need more than {ddof} values for ddof={ddof}")
    return float(x.mean()), float(x.std(ddof=ddof))


@dataclass(frozen=True)
class ComparisonResult:
    z: float
    p_two_sided: float
    verdict: str
    mean_x: float
    std_x: float
    mean_y: float
    std_y: float
    # sample (1/(n-1)) deviations, kept alongside the reported population ones
    sample_std_x: float
    sample_std_y: float
    rank_sum_x: float

    @property
    def significant(self) -> bool:
        return self.verdict != "no-significance"

    def p_one_sided(self, alternative: str = "less") -> float:
        """``less``: first sample tends lower; ``greater``: first sample tends higher."""
        if alternative == "less":
            return float(norm.cdf(self.z))
        if alternative == "greater":
            return float(norm.sf(self.z))
        raise ValueError(f"alternative must be 'less' or 'greater', got {alternative!r}")


def wilcoxon_rank_sum(xs: Sequence[float], ys: Sequence[float], alpha: float = ALPHA,
                      lower_is_better: bool = True) -> ComparisonResult:
    """Normal-approximation rank-sum test, midranks for ties, tie-corrected variance.

    ``z`` is for the first sample's rank sum, so it is negative when ``xs`` tends lower.
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if len(x) < 3 or len(y) < 3:
        raise ValueError("each sample needs at least 3 values")
    n, m = len(x), len(y)
    N = n + m
    pooled = np.concatenate([x, y])
    ranks = rankdata(pooled)
    W = float(ranks[:n].sum())
    mu = n * (N + 1) / 2.0
    _, ties = np.unique(pooled, return_counts=True)
    var = n * m / 12.0 * ((N + 1) - float((ties**3 - ties).sum()) / (N * (N - 1)))
    if var <= 0:
        z, p = 0.0, 1.0
    else:
        z = (W - mu) / math.sqrt(var)
        p = float(min(1.0, 2.0 * norm.sf(abs(z))))
    if p >= alpha or z == 0:
        verdict = "no-significance"
    elif (z < 0) == lower_is_better:
        verdict = "first-better"
    else:
        verdict = "second-better"
    mx, sx = aggregate(x)
    my, sy = aggregate(y)
    return ComparisonResult(z=z, p_two_sided=p, verdict=verdict, mean_x=mx, std_x=sx,
                            mean_y=my, std_y=sy, sample_std_x=float(x.std(ddof=1)),
                            sample_std_y=float(y.std(ddof=1)), rank_sum_x=W)


TABLE_HEADER = ("instance", "optimum", "r_mean", "r_std", "h_mean", "h_std", "verdict", "symbol", "z")


@dataclass(frozen=True)
class TableRow:
    instance: str
    optimum: int
    r_lengths: tuple[float, ...]
    h_lengths: tuple[float, ...]

    def compare(self) -> ComparisonResult:
        return wilcoxon_rank_sum(self.r_lengths, self.h_lengths)


def comparison_table_csv(rows: Sequence[TableRow]) -> str:
    """One line per instance: per-QUBO mean and population deviation, verdict and z."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_HEADER)
    for row in rows:
        rm, rs = aggregate(row.r_lengths)
        hm, hs = aggregate(row.h_lengths)
        if len(row.r_lengths) >= 3 and len(row.h_lengths) >= 3:
            c = row.compare()
            verdict, symbol, z = c.verdict, SYMBOLS[c.verdict], f"{c.z:.4f}"
        else:
            verdict, symbol, z = "", "", ""
        w.writerow([row.instance, row.optimum, f"{rm:.1f}", f"{rs:.1f}", f"{hm:.1f}", f"{hs:.1f}",
                    verdict, symbol, z])
    return buf.getvalue()
