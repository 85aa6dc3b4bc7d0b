"""Gradient training of policies against demonstration rows.

Both policy families train the same way: mean squared error between the
policy's output and the demonstrated action columns, minimized with Adam
over a fixed number of uniformly resampled batches.  Batch composition is
a pure function of (seed, batch index), so a training run is reproducible
bit for bit given the same demos and starting weights.

Structured policies fit only their declared action columns, looked up by
name, so a two-pedal policy can train against three-column driving demos.
Dense policies fit the pre-clip head; their clip is applied at inference.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .demos import DemoSet
from .dense import DensePolicy
from .graph import (
    ACTION,
    OBSERVED,
    PolicyStructure,
    WeightVector,
    backward,
    evaluate_batch,
    weight_checksum,
)
from .observation import ACTION_NAMES, FEATURE_SIZES, split


class TrainError(Exception):
    pass


@dataclass
class NormalizationSpec:
    """Per-column affine map applied to observation rows before the policy.

    normalized = (raw - offset) / scale.  The driving schema already feeds
    normalized signals, so the identity spec is the default; the field
    exists so externally recorded demos can be brought into range without
    rewriting them, and it must stay invertible for playback.
    """

    offset: np.ndarray
    scale: np.ndarray

    def __post_init__(self) -> None:
        self.offset = np.asarray(self.offset, dtype=np.float64)
        self.scale = np.asarray(self.scale, dtype=np.float64)
        if self.offset.shape != self.scale.shape or self.offset.ndim != 1:
            raise TrainError("offset and scale must be parallel 1-d arrays")
        if not np.all(np.isfinite(self.offset)) or not np.all(np.isfinite(self.scale)):
            raise TrainError("normalization values must be finite")
        if np.any(self.scale == 0.0):
            raise TrainError("scale entries must be nonzero")

    @classmethod
    def identity(cls, width: int) -> "NormalizationSpec":
        return cls(np.zeros(width), np.ones(width))

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.offset == 0.0) and np.all(self.scale == 1.0))

    def apply(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        if rows.shape[-1] != len(self.offset):
            raise TrainError(f"rows have width {rows.shape[-1]}, spec covers {len(self.offset)}")
        return (rows - self.offset) / self.scale

    def invert(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        return rows * self.scale + self.offset


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 512
    batches: int = 800


@dataclass
class TrainReport:
    losses: list[float]
    wall_time_s: float
    checksum: str

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")


class Adam:
    """Bias-corrected Adam over a flat parameter vector."""

    def __init__(self, size: int, config: TrainConfig):
        self.config = config
        self.m = np.zeros(size, dtype=np.float64)
        self.v = np.zeros(size, dtype=np.float64)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        c = self.config
        self.t += 1
        self.m = c.beta1 * self.m + (1.0 - c.beta1) * grad
        self.v = c.beta2 * self.v + (1.0 - c.beta2) * grad * grad
        m_hat = self.m / (1.0 - c.beta1**self.t)
        v_hat = self.v / (1.0 - c.beta2**self.t)
        return theta - c.learning_rate * m_hat / (np.sqrt(v_hat) + c.epsilon)


def sample_batch(seed: int, batch_index: int, n_rows: int, batch_size: int) -> np.ndarray:
    """Row indices for one batch: uniform with replacement, seeded per batch."""
    if n_rows <= 0:
        raise TrainError("cannot sample from an empty demo set")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, batch_index))))
    return rng.integers(0, n_rows, size=batch_size)


class StructuredPolicyAdapter:
    """Trains the weight vector of a policy graph from flat observation rows."""

    def __init__(self, structure: PolicyStructure, weights: WeightVector):
        self.structure = structure
        self.weights = weights
        unknown = [f.name for f in structure.features
                   if f.kind == OBSERVED and f.name not in FEATURE_SIZES]
        if unknown:
            raise TrainError(
                f"policy reads {unknown} which the driving observation schema does not provide")
        self.action_names = tuple(f.name for f in structure.features if f.kind == ACTION)

    def param_count(self) -> int:
        return len(self.weights.values)

    def get_params(self) -> np.ndarray:
        return self.weights.values.copy()

    def set_params(self, theta: np.ndarray) -> None:
        self.weights.values[:] = theta

    def loss_and_grad(self, obs_rows: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
        named = split(obs_rows)
        pred, trace = evaluate_batch(self.structure, self.weights, named)
        diff = pred - labels
        loss = float(np.mean(diff * diff))
        grad = backward(trace, 2.0 * diff / diff.size)
        return loss, grad


class DensePolicyAdapter:
    """Trains the flat parameter vector of a dense policy on its pre-clip head."""

    def __init__(self, policy: DensePolicy):
        self.policy = policy
        self.action_names = ACTION_NAMES

    def param_count(self) -> int:
        return len(self.policy.get_params())

    def get_params(self) -> np.ndarray:
        return self.policy.get_params()

    def set_params(self, theta: np.ndarray) -> None:
        self.policy.set_params(theta)

    def loss_and_grad(self, obs_rows: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
        pre, h, z1 = self.policy.forward_raw(obs_rows)
        diff = pre - labels
        loss = float(np.mean(diff * diff))
        grad = self.policy.backward_raw(obs_rows, h, z1, 2.0 * diff / diff.size)
        return loss, grad


def select_labels(demos: DemoSet, wanted: tuple[str, ...]) -> np.ndarray:
    """Label matrix with one column per requested action, matched by name."""
    missing = [n for n in wanted if n not in demos.action_names]
    if missing:
        raise TrainError(f"demos lack action column(s) {missing}; have {list(demos.action_names)}")
    cols = [demos.action_names.index(n) for n in wanted]
    return demos.actions[:, cols]


def train(adapter, demos: DemoSet, config: TrainConfig = TrainConfig(),
          normalization: NormalizationSpec | None = None,
          on_batch: "Callable[[int, float], None] | None" = None) -> TrainReport:
    """Fit the adapter's parameters to the demo rows; mutates the policy.

    ``on_batch`` hears (batch index, loss) after every optimizer step; the
    optimization itself never depends on it.
    """
    started = time.perf_counter()
    width = demos.observations.shape[1]
    norm = normalization if normalization is not None else NormalizationSpec.identity(width)
    obs = norm.apply(demos.observations)
    labels = select_labels(demos, tuple(adapter.action_names))

    theta = adapter.get_params()
    opt = Adam(len(theta), config)
    losses: list[float] = []
    for index in range(config.batches):
        rows = sample_batch(config.seed, index, len(obs), config.batch_size)
        loss, grad = adapter.loss_and_grad(obs[rows], labels[rows])
        theta = opt.step(theta, grad)
        adapter.set_params(theta)
        losses.append(loss)
        if on_batch is not None:
            on_batch(index, loss)
    return TrainReport(losses, time.perf_counter() - started, weight_checksum(theta))
