"""TSP QUBO formulations, a classical annealing stand-in and the experiment harness around them."""

from .qubo_model import IsingModel, Qubo, build_qubo, qubo_to_ising
from .tsp_instance import Instance, burma14, first_k, subset

__all__ = ["Instance", "IsingModel", "Qubo", "build_qubo", "burma14", "first_k", "qubo_to_ising", "subset"]
__version__ = "0.1.0"
