"""REINFORCE with a shared mean baseline over the sampled batch."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .policy import SampleBatch


@dataclass(frozen=True, eq=False)
class ReinforceBatchResult:
    baseline: float
    advantages: np.ndarray
    loss: float


def reinforce_advantages(batch: SampleBatch, rewards=None) -> ReinforceBatchResult:
    """Advantages ``r_i - mean(r)`` and the score-function surrogate loss.

    The loss ``-(1/N) sum_i A_i log pi_i`` treats the advantages as constants.
    """
    r = batch.rewards if rewards is None else np.asarray(rewards, dtype=np.float64)
    n = r.shape[0]
    if n < 2:
        raise InvalidArgument(f"REINFORCE needs at least 2 samples, got {n}")
    baseline = float(r.mean())
    adv = r - baseline
    loss = -float(np.dot(adv, batch.log_probs)) / n
    return ReinforceBatchResult(baseline, adv, loss)
