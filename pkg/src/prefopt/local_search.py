"""2-opt local search and LS-augmented batches for fine-tuning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidArgument
from .instances import Instance, Tour, check_perm, tour_length
from .policy import HeatmapPolicy, SampleBatch, score_tours

STRATEGIES = ("first_improvement", "best_improvement")


@dataclass(frozen=True)
class LsConfig:
    max_iters: int = 20
    strategy: str = "first_improvement"

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise InvalidArgument(f"max_iters must be >= 1, got {self.max_iters}")
        if self.strategy not in STRATEGIES:
            raise InvalidArgument(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")


def two_opt_perm(dist: np.ndarray, perm: np.ndarray, cfg: LsConfig, rng: np.random.Generator | None) -> tuple[np.ndarray, int]:
    """Kernel-level 2-opt on a validated permutation; returns ``(perm, moves)``.

    A random scan order over edge positions is drawn for first-improvement;
    best-improvement consumes no randomness.
    """
    n = perm.shape[0]
    best = cfg.strategy == "best_improvement"
    if best or rng is None:
        order = np.arange(n - 1, dtype=np.int64)
    else:
        order = rng.permutation(n - 1).astype(np.int64)
    return kernels.two_opt(dist, perm, int(cfg.max_iters), best, order)


def two_opt(inst: Instance, tour: Tour, cfg: LsConfig, rng: np.random.Generator | None = None) -> Tour:
    """Apply up to ``cfg.max_iters`` improving 2-opt moves.

    Moves are accepted only when the O(1) delta is below ``-1e-12``, so the
    returned tour is never longer than the input.
    """
    p = check_perm(inst.n, tour.perm)
    out, _ = two_opt_perm(np.asarray(inst.dist), p, cfg, rng)
    length = tour_length(inst, out)
    assert length <= tour.length, "2-opt produced a longer tour"
    return Tour(tuple(int(v) for v in out), length)


def make_finetune_pairs(policy: HeatmapPolicy, inst: Instance, batch: SampleBatch, cfg: LsConfig, rng: np.random.Generator) -> SampleBatch:
    """Return ``batch`` followed by the 2-opt refinement of each of its tours.

    Refined tours are scored under ``policy``; labels are computed downstream.
    """
    dist = np.asarray(inst.dist)
    refined = np.empty_like(batch.perms)
    for i, p in enumerate(batch.perms):
        refined[i], _ = two_opt_perm(dist, p, cfg, rng)
    return batch.concat(score_tours(policy, inst, refined))
