"""Chain-break fraction and feasible ratio against chain strength on Burma'7.

Runs one h-QUBO cell (A=0.4, B=0.1005) at every chain strength of its grid row over
several seeds, then tests lowest versus highest chain strength with a one-sided
rank-sum test.
"""

import argparse

import numpy as np

from qatsp import stats
from qatsp import sweep as sw
from qatsp import tsp_instance as tsp


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--qubo", default="heuristic")
    ap.add_argument("-A", type=float, default=0.4)
    ap.add_argument("-B", type=float, default=0.1005)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--reads", type=int, default=30)
    args = ap.parse_args()
    inst = tsp.first_k(tsp.burma14(), 7)
    cbf = {}
    for cs in sw.chain_values(args.A):
        recs = [sw.run_cell(inst, sw.Cell(args.qubo, args.A, args.B, cs),
                            sw.SolverConfig(num_reads=args.reads, seed=s), 2378)
                for s in range(args.seeds)]
        cbf[cs] = [r.mean_chain_break for r in recs]
        print(f"cs={cs:.4f} chain_break={np.mean(cbf[cs]):.3f} "
              f"feasible={np.mean([r.feasible_ratio for r in recs]):.4f}")
    lo, hi = min(cbf), max(cbf)
    test = stats.wilcoxon_rank_sum(cbf[hi], cbf[lo])
    print(f"top vs bottom chain strength: z={test.z:.3f} one-sided p={test.p_one_sided('less'):.3g}")


if __name__ == "__main__":
    main()
