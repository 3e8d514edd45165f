"""
Privacy-preserving genetic algorithm for encrypted traveling-salesman instances.
"""

from .engine import User, PegaSession, submit, run_pega, finalize
from .ga import GaParams, Seeds, Selection, RunStats, run_ga
from .tsp import load_instance, parse_tsplib, build_matrix, pseudonymize, encrypt_tsp

__all__ = [
    'User', 'PegaSession', 'submit', 'run_pega', 'finalize',
    'GaParams', 'Seeds', 'Selection', 'RunStats', 'run_ga',
    'load_instance', 'parse_tsplib', 'build_matrix', 'pseudonymize', 'encrypt_tsp',
]
