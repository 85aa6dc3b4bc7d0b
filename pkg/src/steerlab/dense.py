"""Dense baseline policy: a small fully-connected network over the flat observation.

Architecture is affine -> rectifier -> affine (58 -> 80 -> 3 for the driving
task); outputs are clipped to the action ranges at inference.  Training runs
on the pre-clip head so a freshly initialized policy, whose outputs sit
exactly on the accelerate/brake lower bound, still receives gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import observation
from .graph import weight_checksum

DEFAULT_SIZES = (observation.FLAT_WIDTH, 80, len(observation.ACTION_NAMES))


@dataclass
class DensePolicy:
    """Two-layer perceptron with per-output clip ranges."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    clip: tuple[tuple[float, float], ...]

    @classmethod
    def initialize(cls, seed: int, sizes: tuple[int, int, int] = DEFAULT_SIZES,
                   clip: tuple[tuple[float, float], ...] | None = None) -> "DensePolicy":
        """Symmetric uniform init scaled by fan-in; biases start at zero."""
        n_in, n_hidden, n_out = sizes
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        lim1 = 1.0 / np.sqrt(n_in)
        lim2 = 1.0 / np.sqrt(n_hidden)
        if clip is None:
            clip = tuple(observation.ACTION_RANGES[name] for name in observation.ACTION_NAMES)
            if len(clip) != n_out:
                clip = tuple((-1.0, 1.0) for _ in range(n_out))
        return cls(
            w1=rng.uniform(-lim1, lim1, size=(n_hidden, n_in)),
            b1=np.zeros(n_hidden),
            w2=rng.uniform(-lim2, lim2, size=(n_out, n_hidden)),
            b2=np.zeros(n_out),
            clip=tuple(clip),
        )

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (self.w1.shape[1], self.w1.shape[0], self.w2.shape[0])

    # Flat parameter order: w1 rows, b1, w2 rows, b2.
    def get_params(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    def set_params(self, flat: np.ndarray) -> None:
        n_in, n_hidden, n_out = self.sizes
        flat = np.asarray(flat, dtype=np.float64)
        expected = n_hidden * n_in + n_hidden + n_out * n_hidden + n_out
        if flat.shape != (expected,):
            raise ValueError(f"expected {expected} parameters, got {flat.shape}")
        i = 0
        self.w1 = flat[i : i + n_hidden * n_in].reshape(n_hidden, n_in).copy(); i += n_hidden * n_in
        self.b1 = flat[i : i + n_hidden].copy(); i += n_hidden
        self.w2 = flat[i : i + n_out * n_hidden].reshape(n_out, n_hidden).copy(); i += n_out * n_hidden
        self.b2 = flat[i : i + n_out].copy()

    def checksum(self) -> str:
        return weight_checksum(self.get_params())

    def forward_raw(self, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pre-clip head over a (B, n_in) batch; returns (pre, hidden, pre-activation)."""
        obs = np.asarray(obs, dtype=np.float64)
        z1 = obs @ self.w1.T + self.b1
        h = np.maximum(z1, 0.0)
        pre = h @ self.w2.T + self.b2
        return pre, h, z1

    def backward_raw(self, obs: np.ndarray, h: np.ndarray, z1: np.ndarray, d_pre: np.ndarray) -> np.ndarray:
        """Gradient of a scalar loss w.r.t. the flat parameters, given d(loss)/d(pre)."""
        obs = np.asarray(obs, dtype=np.float64)
        g_w2 = d_pre.T @ h
        g_b2 = d_pre.sum(axis=0)
        d_h = d_pre @ self.w2
        d_z1 = d_h * (z1 > 0.0)
        g_w1 = d_z1.T @ obs
        g_b1 = d_z1.sum(axis=0)
        return np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])


def dense_forward(policy: DensePolicy, obs: np.ndarray) -> np.ndarray:
    """Clipped action(s) for one observation (n_in,) or a batch (B, n_in)."""
    obs = np.asarray(obs, dtype=np.float64)
    single = obs.ndim == 1
    pre, _, _ = policy.forward_raw(obs[None, :] if single else obs)
    out = pre.copy()
    for j, (lo, hi) in enumerate(policy.clip):
        out[:, j] = np.clip(out[:, j], lo, hi)
    return out[0] if single else out
