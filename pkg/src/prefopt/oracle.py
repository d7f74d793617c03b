"""Exact reference solvers used for optimality gaps and cross-checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import TooLarge
from .instances import Instance, Tour, tour_length

EXHAUSTIVE_MAX_N = 10
HELD_KARP_MAX_N = 18


@dataclass(frozen=True)
class OracleResult:
    best_perm: tuple[int, ...]
    best_length: float
    method: str  # "exhaustive" | "held_karp"


def canonical_perm(perm) -> np.ndarray:
    """Rotate to start at node 0 and orient so that ``perm[1] < perm[-1]``."""
    p = np.asarray(perm, dtype=np.int64)
    p = np.roll(p, -int(np.flatnonzero(p == 0)[0]))
    if p.shape[0] > 2 and p[1] > p[-1]:
        p = np.concatenate(([0], p[1:][::-1]))
    return p


def _result(inst: Instance, perm, method: str) -> OracleResult:
    p = canonical_perm(perm)
    return OracleResult(tuple(int(v) for v in p), tour_length(inst, p), method)


def solve_exhaustive(inst: Instance) -> OracleResult:
    """Enumerate all ``(n-1)!/2`` distinct closed tours (n <= 10)."""
    if inst.n > EXHAUSTIVE_MAX_N:
        raise TooLarge(f"exhaustive search supports n <= {EXHAUSTIVE_MAX_N}, got {inst.n}")
    return _result(inst, kernels.exhaustive(np.asarray(inst.dist)), "exhaustive")


def solve_held_karp(inst: Instance, max_n: int = HELD_KARP_MAX_N) -> OracleResult:
    if inst.n > max_n:
        raise TooLarge(f"Held-Karp is bounded to n <= {max_n}, got {inst.n}")
    return _result(inst, kernels.held_karp(np.asarray(inst.dist)), "held_karp")


def optimality_gap(inst: Instance, tour: Tour | float, oracle: OracleResult) -> float:
    length = tour.length if isinstance(tour, Tour) else float(tour)
    return (length - oracle.best_length) / oracle.best_length
