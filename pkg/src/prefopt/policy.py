"""Per-instance heatmap policy over tours.

A tour always starts at node 0. At each step the next node is drawn from a
softmax of ``theta[current, j] / temperature`` restricted to unvisited ``j``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import InvalidArgument, ParseError
from .instances import Instance, Tour, check_perm, tour_lengths

START_NODE = 0


@dataclass(frozen=True, eq=False)
class HeatmapPolicy:
    theta: np.ndarray = field(repr=False)
    temperature: float = 1.0

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64)
        if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
            raise InvalidArgument(f"theta must be square, got shape {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise InvalidArgument("theta entries must be finite")
        if not self.temperature > 0:
            raise InvalidArgument(f"temperature must be > 0, got {self.temperature}")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    def with_theta(self, theta: np.ndarray) -> "HeatmapPolicy":
        return HeatmapPolicy(theta, self.temperature)

    def to_json(self) -> dict:
        return {"n": self.n, "temperature": self.temperature, "theta": self.theta.ravel().tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "HeatmapPolicy":
        try:
            n = int(obj["n"])
            theta = np.asarray(obj["theta"], dtype=np.float64)
            temperature = float(obj.get("temperature", 1.0))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad policy checkpoint: {exc}") from None
        if theta.size != n * n:
            raise ParseError(f"checkpoint theta has {theta.size} entries, expected {n * n}")
        return cls(theta.reshape(n, n), temperature)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "HeatmapPolicy":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """N tours of one instance with their log-probabilities and step entropies."""

    perms: np.ndarray  # (N, n) int64
    log_probs: np.ndarray  # (N,)
    step_entropies: np.ndarray  # (N, n - 1)
    lengths: np.ndarray  # (N,)

    @property
    def rewards(self) -> np.ndarray:
        return -self.lengths

    @property
    def size(self) -> int:
        return self.perms.shape[0]

    def __len__(self) -> int:
        return self.size

    @property
    def n_steps(self) -> np.ndarray:
        return np.full(self.size, self.step_entropies.shape[1], dtype=np.int64)

    @property
    def trajectory_entropy(self) -> np.ndarray:
        return self.step_entropies.sum(axis=1)

    @property
    def tours(self) -> list[Tour]:
        return [Tour(tuple(int(v) for v in p), float(l)) for p, l in zip(self.perms, self.lengths)]

    def concat(self, other: "SampleBatch") -> "SampleBatch":
        return SampleBatch(
            np.concatenate([self.perms, other.perms]),
            np.concatenate([self.log_probs, other.log_probs]),
            np.concatenate([self.step_entropies, other.step_entropies]),
            np.concatenate([self.lengths, other.lengths]),
        )


def _check_policy(policy: HeatmapPolicy, inst: Instance) -> None:
    if policy.n != inst.n:
        raise InvalidArgument(f"policy has n={policy.n} but instance has n={inst.n}")


def init_heatmap(inst: Instance, mode: str = "zeros", scale: float = 1.0, temperature: float = 1.0) -> HeatmapPolicy:
    if mode == "zeros":
        return HeatmapPolicy(np.zeros((inst.n, inst.n)), temperature)
    if mode == "neg_distance":
        if not scale > 0:
            raise InvalidArgument(f"neg_distance init needs scale > 0, got {scale}")
        return HeatmapPolicy(-np.asarray(inst.dist) * scale, temperature)
    raise InvalidArgument(f"unknown init mode {mode!r}")


def step_distribution(policy: HeatmapPolicy, current: int, visited) -> np.ndarray:
    """Next-node probabilities from ``current`` given a visited mask (zero on visited nodes)."""
    visited = np.asarray(visited, dtype=bool)
    logits = policy.theta[current] / policy.temperature
    feasible = ~visited
    out = np.zeros(policy.n)
    z = logits[feasible] - logits[feasible].max()
    e = np.exp(z)
    out[feasible] = e / e.sum()
    return out


def sample_tours(policy: HeatmapPolicy, inst: Instance, n_samples: int, rng: np.random.Generator) -> SampleBatch:
    if n_samples < 2:
        raise InvalidArgument(f"need at least 2 samples per batch, got {n_samples}")
    _check_policy(policy, inst)
    uniforms = rng.random((n_samples, inst.n - 1))
    perms, log_probs, ent = kernels.sample_tours(policy.theta, 1.0 / policy.temperature, START_NODE, uniforms)
    return SampleBatch(perms, log_probs, ent, tour_lengths(np.asarray(inst.dist), perms))


def score_tours(policy: HeatmapPolicy, inst: Instance, perms) -> SampleBatch:
    """Score a batch of (possibly off-policy) tours; each is rotated to start at node 0."""
    _check_policy(policy, inst)
    perms = np.atleast_2d(np.asarray(perms))
    rows = []
    for p in perms:
        p = check_perm(inst.n, p)
        rows.append(np.roll(p, -int(np.flatnonzero(p == START_NODE)[0])))
    perms = np.array(rows, dtype=np.int64)
    log_probs, ent = kernels.score_tours(policy.theta, 1.0 / policy.temperature, perms)
    return SampleBatch(perms, log_probs, ent, tour_lengths(np.asarray(inst.dist), perms))


def score_tour(policy: HeatmapPolicy, inst: Instance, perm) -> tuple[float, np.ndarray]:
    """Exact ``log pi(perm)`` and the per-step entropies along it.

    Tours are cycles, so ``perm`` is first rotated to begin at node 0.
    """
    batch = score_tours(policy, inst, [perm])
    return float(batch.log_probs[0]), batch.step_entropies[0]


def grad_log_probs(policy: HeatmapPolicy, perms: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``sum_i weights[i] * grad_theta log pi(perms[i])`` with a fixed reduction order."""
    perms = np.asarray(perms, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    return kernels.grad_weighted(policy.theta, 1.0 / policy.temperature, perms, weights)


def grad_log_prob(policy: HeatmapPolicy, inst: Instance, perm) -> np.ndarray:
    _check_policy(policy, inst)
    p = check_perm(inst.n, perm)
    p = np.roll(p, -int(np.flatnonzero(p == START_NODE)[0]))
    return grad_log_probs(policy, p[None, :], np.ones(1))


def greedy_decode(policy: HeatmapPolicy, inst: Instance) -> Tour:
    """Argmax decoding; ties go to the lowest node index."""
    _check_policy(policy, inst)
    n = inst.n
    visited = np.zeros(n, dtype=bool)
    cur = START_NODE
    visited[cur] = True
    perm = [cur]
    for _ in range(n - 1):
        row = np.where(visited, -np.inf, policy.theta[cur])
        cur = int(np.argmax(row))
        visited[cur] = True
        perm.append(cur)
    p = np.array(perm)
    return Tour(tuple(perm), float(tour_lengths(np.asarray(inst.dist), p[None, :])[0]))
