"""Compare the r-QUBO and h-QUBO configurations on sub-instances through the hybrid solver.

For each instance size, runs ``--seeds`` hybrid solves per configuration, then writes a
comparison table (means, population standard deviations, rank-sum verdict).
"""

import argparse
from pathlib import Path

from qatsp import hybrid, oracle, stats
from qatsp import sweep as sw
from qatsp import tsp_instance as tsp

CONFIGS = {"reference": (0.65, 0.25, 1.0), "heuristic": (0.4, 0.01, 1.0)}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="5,7,12", help="comma-separated leading-node counts")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--reads", type=int, default=100)
    ap.add_argument("--sweeps", type=int, default=1000)
    ap.add_argument("--max-size", type=int, default=hybrid.DEFAULT_MAX_SIZE)
    ap.add_argument("--out", type=Path, default=Path("results/comparison.csv"))
    args = ap.parse_args()
    base = tsp.burma14()
    rows = []
    for k in (int(t) for t in args.sizes.split(",")):
        inst = tsp.first_k(base, k)
        opt = oracle.brute_optimum(inst).length if k <= oracle.MAX_BRUTE_N else 0
        lengths = {}
        for kind, (A, B, cs) in CONFIGS.items():
            lengths[kind] = tuple(
                float(hybrid.solve_hybrid(inst, kind, A, B, cs,
                                          sw.SolverConfig(num_reads=args.reads, sweeps=args.sweeps,
                                                          seed=s), args.max_size).length)
                for s in range(args.seeds))
        row = stats.TableRow(f"burma'{k}", opt, lengths["reference"], lengths["heuristic"])
        rows.append(row)
        c = row.compare()
        print(f"burma'{k}: optimum {opt}; r {c.mean_x:.1f} +- {c.std_x:.1f}; "
              f"h {c.mean_y:.1f} +- {c.std_y:.1f}; {c.verdict} (z={c.z:.3f})")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(stats.comparison_table_csv(rows))


if __name__ == "__main__":
    main()
