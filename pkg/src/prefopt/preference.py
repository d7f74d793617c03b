"""Preference labels, preference models, and the preference-optimization loss.

Per-tour advantages follow one convention for every model: the gradient of the
returned loss with respect to theta is

    -(1/N) * sum_j advantage[j] * grad_theta log pi(tour_j)

so the trainer can treat PO and REINFORCE identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_expit, log_ndtr

from .errors import InvalidArgument, WrongModel
from .policy import SampleBatch

MODELS = ("bradley_terry", "thurstone", "plackett_luce", "exponential")
ALIASES = {"bt": "bradley_terry", "thurstone": "thurstone", "th": "thurstone", "pl": "plackett_luce", "exp": "exponential"}
SHORT_NAMES = {"bradley_terry": "bt", "thurstone": "thurstone", "plackett_luce": "pl", "exponential": "exp"}
DEFAULT_TIE_TOL = 1e-12

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class PreferenceModel:
    kind: str = "bradley_terry"
    margin: float = 0.0
    length_control: bool = False

    def __post_init__(self):
        kind = ALIASES.get(self.kind, self.kind)
        if kind not in MODELS:
            raise InvalidArgument(f"unknown preference model {self.kind!r}")
        if not self.margin >= 0:
            raise InvalidArgument(f"margin must be >= 0, got {self.margin}")
        object.__setattr__(self, "kind", kind)


@dataclass(frozen=True, eq=False)
class PreferenceLabels:
    wins: np.ndarray  # (N, N) uint8, wins[j, k] = 1 iff tour j beats tour k

    @property
    def size(self) -> int:
        return self.wins.shape[0]


def make_labels(rewards, tie_tol: float = DEFAULT_TIE_TOL) -> PreferenceLabels:
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.shape[0] < 2:
        raise InvalidArgument("need a 1-D vector of at least 2 rewards")
    if not tie_tol >= 0:
        raise InvalidArgument(f"tie_tol must be >= 0, got {tie_tol}")
    wins = (r[:, None] - r[None, :]) > tie_tol
    return PreferenceLabels(wins.astype(np.uint8))


def implied_reward_diff(alpha: float, log_prob_1: float, log_prob_2: float) -> float:
    """Latent reward difference ``alpha * (log pi_1 - log pi_2)``; log Z(x) cancels."""
    if not alpha > 0:
        raise InvalidArgument(f"alpha must be > 0, got {alpha}")
    return alpha * (log_prob_1 - log_prob_2)


def log_preference(kind: str, z):
    """``log f(z)`` for a pairwise model."""
    kind = ALIASES.get(kind, kind)
    z = np.asarray(z, dtype=np.float64)
    if kind == "bradley_terry":
        return log_expit(z)
    if kind == "thurstone":
        return log_ndtr(z)
    if kind == "exponential":
        return z
    raise WrongModel(f"{kind} has no pairwise form")


def _weight(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "bradley_terry":
        # f'/f of the logistic is sigma(-z)
        return np.exp(log_expit(-z))
    if kind == "thurstone":
        # phi(z)/Phi(z) through logs: finite far into the left tail
        return np.exp(-0.5 * z * z - _LOG_SQRT_2PI - log_ndtr(z))
    if kind == "exponential":
        return np.ones_like(z)
    raise WrongModel(f"{kind} has no pairwise form")


def pair_weight(model: PreferenceModel, z):
    """``f'(z - margin) / f(z - margin)`` for the model's link function."""
    z = np.asarray(z, dtype=np.float64) - model.margin
    out = _weight(model.kind, z)
    return float(out) if out.ndim == 0 else out


def _effective_inputs(model: PreferenceModel, alpha: float, batch: SampleBatch) -> tuple[float, np.ndarray, np.ndarray]:
    """Return ``(alpha_eff, scores, per_tour_scale)`` after length control.

    With length control each log-prob is divided by its tour's step count.
    When every tour has the same step count this folds into alpha exactly.
    """
    lp = np.asarray(batch.log_probs, dtype=np.float64)
    if not model.length_control:
        return alpha, lp, np.ones_like(lp)
    steps = batch.n_steps.astype(np.float64)
    if np.all(steps == steps[0]):
        return alpha / steps[0], lp, np.ones_like(lp)
    return alpha, lp / steps, 1.0 / steps


def po_loss_pairwise(model: PreferenceModel, alpha: float, batch: SampleBatch, labels: PreferenceLabels) -> tuple[float, np.ndarray]:
    """Pairwise PO loss and per-tour advantages.

    ``loss = -(1/N^2) sum_{j,k} y[j,k] log f(alpha * (l_j - l_k) - margin)``
    averaged over the full N x N grid, diagonal included.
    """
    if model.kind == "plackett_luce":
        raise WrongModel("use po_loss_pl for the Plackett-Luce model")
    if not alpha > 0:
        raise InvalidArgument(f"alpha must be > 0, got {alpha}")
    if labels.size != batch.size:
        raise InvalidArgument(f"labels are {labels.size}x{labels.size} but the batch has {batch.size} tours")
    n = batch.size
    alpha_eff, scores, scale = _effective_inputs(model, alpha, batch)
    z = alpha_eff * (scores[:, None] - scores[None, :]) - model.margin
    y = labels.wins.astype(bool)
    loss = -float(np.sum(np.where(y, log_preference(model.kind, z), 0.0))) / (n * n)
    g = np.where(y, _weight(model.kind, z), 0.0)
    adv = alpha_eff * (g.sum(axis=1) - g.sum(axis=0)) * scale / n
    return loss, adv


def po_loss_pl(alpha: float, batch: SampleBatch, rewards=None) -> tuple[float, np.ndarray]:
    """Plackett-Luce likelihood of the reward ranking.

    ``loss = -sum_k [alpha * l_(k) - logsumexp_{j >= k} alpha * l_(j)]`` with
    tours ordered by descending reward (ties keep sample order). Not divided
    by N^2: for N = 2 this is exactly 4x the pairwise Bradley-Terry loss, and
    the advantages are 4x as well.
    """
    n = batch.size
    if n < 2:
        raise InvalidArgument("Plackett-Luce needs at least 2 tours")
    if not alpha > 0:
        raise InvalidArgument(f"alpha must be > 0, got {alpha}")
    r = batch.rewards if rewards is None else np.asarray(rewards, dtype=np.float64)
    order = np.argsort(-r, kind="stable")
    s = alpha * np.asarray(batch.log_probs, dtype=np.float64)[order]
    # tail[k] = logsumexp(s[k:])
    tail = np.logaddexp.accumulate(s[::-1])[::-1]
    loss = -float(np.sum(s - tail))
    # d loss / d s_m = -1 + sum_{k <= m} softmax over s[k:] evaluated at m
    soft = np.exp(s[None, :] - tail[:, None])
    soft = np.triu(soft)
    dloss_ds = -1.0 + soft.sum(axis=0)
    adv_sorted = -n * alpha * dloss_ds
    adv = np.empty(n)
    adv[order] = adv_sorted
    return loss, adv


def po_loss(model: PreferenceModel, alpha: float, batch: SampleBatch, rewards=None, tie_tol: float = DEFAULT_TIE_TOL) -> tuple[float, np.ndarray]:
    """Dispatch on the model kind; ``rewards`` default to the batch's own rewards."""
    r = batch.rewards if rewards is None else np.asarray(rewards, dtype=np.float64)
    if model.kind == "plackett_luce":
        return po_loss_pl(alpha, batch, r)
    return po_loss_pairwise(model, alpha, batch, make_labels(r, tie_tol))
