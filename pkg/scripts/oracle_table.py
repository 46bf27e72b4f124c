"""Exhaustive landscape summary of the first seven Burma nodes for both QUBO types.

Prints the feasible counts and the B-coefficients (energy above the -2nA base, in
units of B) of the best and worst tours and of the best column-function state.
"""

import argparse
import json

from qatsp import oracle
from qatsp import qubo_model as qm
from qatsp import tsp_instance as tsp


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("-k", type=int, default=7, help="number of leading Burma nodes")
    ap.add_argument("-A", type=float, default=1.0)
    ap.add_argument("-B", type=float, default=0.5)
    args = ap.parse_args()
    inst = tsp.first_k(tsp.burma14(), args.k)
    rows = {}
    for kind in ("reference", "heuristic"):
        q = qm.build_qubo(kind, inst.dist_norm, args.A, args.B)
        s = oracle.enumerate_tours(inst, q)
        s.best_infeasible = oracle.enumerate_column_functions(inst, q)
        rows[kind] = s.to_dict()
        print(f"{kind:9s} feasible={s.n_feasible} best={s.best_coef:.5f}B worst={s.worst_coef:.5f}B "
              f"column-best={s.best_infeasible.b_coef:.5f}B at {s.best_infeasible.constraint_energy:g}")
        if s.n_penalized is not None:
            print(f"{'':9s} non-penalized={s.n_nonpenalized} penalized={s.n_penalized} "
                  f"fewest penalized steps={s.best_penalized_steps} "
                  f"residual={s.best_penalized_coef:.5f}B")
    print(json.dumps(rows, indent=2))


if __name__ == "__main__":
    main()
