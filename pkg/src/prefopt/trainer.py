"""Per-instance training loop, diagnostics, and metrics I/O.

Each instance gets its own heatmap policy (active-search regime). A step is:
sample N tours, optionally append their 2-opt refinements (fine-tune phase),
turn rewards into per-tour advantages (preference optimization or REINFORCE),
and take one ascent step on ``(1/N) sum_j A_j grad log pi(tour_j)``.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import InvalidArgument, InvalidConfig, UndefinedMetric
from .instances import Instance, instance_rng
from .local_search import STRATEGIES, LsConfig, make_finetune_pairs
from .optim import OPTIMIZERS, OptimizerConfig, OptimizerState, optimizer_step
from .policy import HeatmapPolicy, SampleBatch, grad_log_probs, init_heatmap, sample_tours, score_tours
from .preference import ALIASES, DEFAULT_TIE_TOL, PreferenceModel, make_labels, po_loss
from .reinforce import reinforce_advantages

TRAIN_STREAM = 1
EVAL_STREAM = 2
FINETUNE_STREAM = 3
ANALYZE_STREAM = 4

ALPHA_GRID = (0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 2.0)
ALGORITHMS = ("po", "reinforce")
INIT_MODES = ("zeros", "neg_distance")
METRICS_HEADER = ("step", "mean_reward", "best_reward", "gap", "entropy", "consistency", "loss")


@dataclass(frozen=True)
class TrainConfig:
    """Flat training configuration; field names double as config-file keys."""

    algorithm: str = "po"
    preference_model: str = "bt"
    alpha: float = 0.05
    margin: float = 0.0
    length_control: bool = False
    tie_tol: float = DEFAULT_TIE_TOL
    samples_per_step: int = 16
    steps: int = 500
    finetune_steps: int = 0
    ls_iters: int = 20
    ls_strategy: str = "first_improvement"
    optimizer: str = "adam"
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    init: str = "zeros"
    init_scale: float = 1.0
    temperature: float = 1.0
    # affine reward transform applied before labels/advantages (invariance checks)
    reward_scale: float = 1.0
    reward_shift: float = 0.0

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_dict(cls, raw: dict[str, Any], allow_zero_steps: bool = False) -> "TrainConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        bad = sorted(k for k in raw if k not in known)
        if bad:
            raise InvalidConfig(f"unknown config keys: {', '.join(bad)}", bad)
        kwargs = {}
        for key, value in raw.items():
            typ = known[key].type
            try:
                kwargs[key] = _coerce(typ, value)
            except (TypeError, ValueError):
                bad.append(key)
        if bad:
            raise InvalidConfig(f"bad values for config keys: {', '.join(bad)}", bad)
        return cls(**kwargs).validate(allow_zero_steps)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def invalid_keys(self, allow_zero_steps: bool = False) -> list[str]:
        bad = []
        if self.algorithm not in ALGORITHMS:
            bad.append("algorithm")
        if ALIASES.get(self.preference_model, self.preference_model) not in ALIASES.values():
            bad.append("preference_model")
        if not self.alpha > 0:
            bad.append("alpha")
        if not self.margin >= 0:
            bad.append("margin")
        if not self.tie_tol >= 0:
            bad.append("tie_tol")
        if self.samples_per_step < 2:
            bad.append("samples_per_step")
        if self.steps < (0 if allow_zero_steps else 1):
            bad.append("steps")
        if self.finetune_steps < 0 or (allow_zero_steps and self.steps + self.finetune_steps < 1):
            bad.append("finetune_steps")
        if self.ls_iters < 1:
            bad.append("ls_iters")
        if self.ls_strategy not in STRATEGIES:
            bad.append("ls_strategy")
        if self.optimizer not in OPTIMIZERS:
            bad.append("optimizer")
        if not self.learning_rate > 0:
            bad.append("learning_rate")
        if not (0 <= self.beta1 < 1):
            bad.append("beta1")
        if not (0 <= self.beta2 < 1):
            bad.append("beta2")
        if not self.epsilon > 0:
            bad.append("epsilon")
        if self.init not in INIT_MODES:
            bad.append("init")
        if self.init == "neg_distance" and not self.init_scale > 0:
            bad.append("init_scale")
        if not self.temperature > 0:
            bad.append("temperature")
        if not self.reward_scale > 0:
            bad.append("reward_scale")
        if not math.isfinite(self.reward_shift):
            bad.append("reward_shift")
        return bad

    def validate(self, allow_zero_steps: bool = False) -> "TrainConfig":
        bad = self.invalid_keys(allow_zero_steps)
        if bad:
            raise InvalidConfig(f"invalid values for config keys: {', '.join(bad)}", bad)
        return self

    @property
    def preference(self) -> PreferenceModel:
        return PreferenceModel(self.preference_model, self.margin, self.length_control)

    @property
    def ls(self) -> LsConfig:
        return LsConfig(self.ls_iters, self.ls_strategy)

    @property
    def optim(self) -> OptimizerConfig:
        return OptimizerConfig(self.optimizer, self.learning_rate, self.beta1, self.beta2, self.epsilon)


def _coerce(typ, value):
    typ = str(typ)
    if typ == "bool":
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "1", "0", "yes", "no"):
            return value.lower() in ("true", "1", "yes")
        raise ValueError(value)
    if typ == "int":
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ValueError(value)
        return int(value)
    if typ == "float":
        if isinstance(value, bool):
            raise ValueError(value)
        return float(value)
    if not isinstance(value, str):
        raise TypeError(value)
    return value


@dataclass
class StepMetrics:
    step: int
    mean_reward: float
    best_reward: float
    gap: float | None
    trajectory_entropy: float
    consistency: float | None
    loss: float
    advantage_values: np.ndarray = field(repr=False)

    def row(self) -> list[str]:
        return [
            str(self.step),
            repr(self.mean_reward),
            repr(self.best_reward),
            _fmt(self.gap),
            repr(self.trajectory_entropy),
            _fmt(self.consistency),
            repr(self.loss),
        ]


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


@dataclass
class TrainResult:
    policy: HeatmapPolicy
    metrics: list[StepMetrics]
    instance_id: str = ""


def consistency_counts(rewards, log_probs, tie_tol: float = DEFAULT_TIE_TOL) -> tuple[int, int, int]:
    """``(agree, log_prob_ties, ordered_pairs)`` over pairs with ``r_j > r_k``."""
    y = make_labels(rewards, tie_tol).wins.astype(bool)
    lp = np.asarray(log_probs, dtype=np.float64)
    d = lp[:, None] - lp[None, :]
    return int(np.sum(y & (d > 0))), int(np.sum(y & (d == 0))), int(np.sum(y))


def consistency_metric(policy: HeatmapPolicy, inst: Instance, batch: SampleBatch, tie_tol: float = DEFAULT_TIE_TOL) -> float:
    """Fraction of reward-ordered pairs that the policy ranks the same way.

    Log-prob ties count as disagreement. Raises UndefinedMetric when the batch
    has no strictly ordered pair.
    """
    lp = score_tours(policy, inst, batch.perms).log_probs
    agree, _, total = consistency_counts(batch.rewards, lp, tie_tol)
    if total == 0:
        raise UndefinedMetric("no strictly reward-ordered pair in the batch")
    return agree / total


def compute_advantages(batch: SampleBatch, cfg: TrainConfig, rewards=None) -> tuple[float, np.ndarray]:
    """Loss and per-tour advantages under the configured algorithm."""
    r = batch.rewards if rewards is None else np.asarray(rewards, dtype=np.float64)
    if cfg.algorithm == "reinforce":
        res = reinforce_advantages(batch, r)
        return res.loss, res.advantages
    return po_loss(cfg.preference, cfg.alpha, batch, r, cfg.tie_tol)


def advantage_report(batch: SampleBatch, cfg: TrainConfig) -> list[tuple[float, float]]:
    """``(length, advantage)`` pairs sorted by ascending tour length."""
    if batch.size == 0:
        raise InvalidArgument("empty batch")
    _, adv = compute_advantages(batch, cfg)
    order = np.argsort(batch.lengths, kind="stable")
    return [(float(batch.lengths[i]), float(adv[i])) for i in order]


def ascent_direction(policy: HeatmapPolicy, batch: SampleBatch, advantages: np.ndarray) -> np.ndarray:
    """``(1/N) sum_j A_j grad log pi(tour_j)``, i.e. minus the loss gradient."""
    return grad_log_probs(policy, batch.perms, np.asarray(advantages) / batch.size)


def train_instance(
    inst: Instance,
    cfg: TrainConfig,
    *,
    index: int = 0,
    optimum: float | None = None,
    policy: HeatmapPolicy | None = None,
    stream: int = TRAIN_STREAM,
) -> TrainResult:
    """Run ``cfg.steps`` standard steps then ``cfg.finetune_steps`` LS-augmented steps.

    ``index`` selects the instance's random sub-stream, so results depend only
    on ``(cfg.seed, index)``. ``policy`` resumes from an existing heatmap.
    """
    cfg.validate(allow_zero_steps=policy is not None)
    rng = instance_rng(cfg.seed, index, stream)
    if policy is None:
        policy = init_heatmap(inst, cfg.init, cfg.init_scale, cfg.temperature)
    state = OptimizerState()
    optim = cfg.optim
    ls = cfg.ls
    metrics = []
    for step in range(1, cfg.steps + cfg.finetune_steps + 1):
        batch = sample_tours(policy, inst, cfg.samples_per_step, rng)
        train_batch = batch
        if step > cfg.steps:
            train_batch = make_finetune_pairs(policy, inst, batch, ls, rng)
        rewards = cfg.reward_scale * train_batch.rewards + cfg.reward_shift
        loss, adv = compute_advantages(train_batch, cfg, rewards)
        grad = ascent_direction(policy, train_batch, adv)
        theta, state = optimizer_step(policy.theta, grad, state, optim)
        metrics.append(_step_metrics(step, batch, loss, adv, optimum, cfg.tie_tol))
        policy = policy.with_theta(theta)
    return TrainResult(policy, metrics, inst.id)


def _step_metrics(step, batch: SampleBatch, loss, adv, optimum, tie_tol) -> StepMetrics:
    best = float(batch.rewards.max())
    gap = None if optimum is None else (-best - optimum) / optimum
    agree, _, total = consistency_counts(batch.rewards, batch.log_probs, tie_tol)
    return StepMetrics(
        step=step,
        mean_reward=float(batch.rewards.mean()),
        best_reward=best,
        gap=gap,
        trajectory_entropy=float(batch.trajectory_entropy.mean()),
        consistency=agree / total if total else None,
        loss=float(loss),
        advantage_values=np.asarray(adv, dtype=np.float64),
    )


def iterations_to_gap(metrics: Sequence[StepMetrics], threshold: float) -> int | None:
    """First step at which the best-sampled-so-far gap is ``<= threshold``."""
    best = math.inf
    for m in metrics:
        if m.gap is None:
            raise UndefinedMetric("metrics carry no gap; train with a known optimum")
        best = min(best, m.gap)
        if best <= threshold:
            return m.step
    return None


def best_sampled_gap(metrics: Sequence[StepMetrics]) -> float:
    gaps = [m.gap for m in metrics if m.gap is not None]
    if not gaps:
        raise UndefinedMetric("metrics carry no gap")
    return min(gaps)


def metrics_csv(metrics: Sequence[StepMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for m in metrics:
        w.writerow(m.row())
    return buf.getvalue()


def read_metrics_csv(text: str) -> list[dict[str, float | None]]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append({k: (float(v) if v != "" else None) for k, v in rec.items()})
    return rows


def _train_job(args):
    inst, cfg, index, optimum, policy, stream = args
    return train_instance(inst, cfg, index=index, optimum=optimum, policy=policy, stream=stream)


def train_many(
    instances: Sequence[Instance],
    cfg: TrainConfig,
    *,
    optima: Sequence[float | None] | None = None,
    policies: Sequence[HeatmapPolicy | None] | None = None,
    jobs: int = 1,
    stream: int = TRAIN_STREAM,
    indices: Sequence[int] | None = None,
) -> list[TrainResult]:
    """Train every instance independently; results come back in input order.

    Each instance's sub-stream index is its position (or ``indices[i]``), so
    ``jobs`` never changes the outcome and subsets can be re-run alone.
    """
    optima = list(optima) if optima is not None else [None] * len(instances)
    policies = list(policies) if policies is not None else [None] * len(instances)
    indices = list(indices) if indices is not None else list(range(len(instances)))
    tasks = [(inst, cfg, indices[i], optima[i], policies[i], stream) for i, inst in enumerate(instances)]
    if jobs <= 1 or len(tasks) <= 1:
        return [_train_job(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_train_job, tasks))
