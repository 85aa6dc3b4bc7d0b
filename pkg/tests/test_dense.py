"""Dense baseline policy: forward against loop-based linear algebra, gradients, init."""

from __future__ import annotations

import numpy as np
import pytest

from steerlab.dense import DensePolicy, dense_forward

import oracles


def small_policy(seed=3, sizes=(5, 4, 3)):
    return DensePolicy.initialize(seed, sizes=sizes, clip=((-1.0, 1.0), (0.0, 1.0), (0.0, 1.0)))


def test_forward_matches_naive_matmul():
    policy = small_policy()
    rng = np.random.Generator(np.random.PCG64(9))
    obs = rng.uniform(-1, 1, size=(6, 5))
    pre, _, _ = policy.forward_raw(obs)

    z1 = np.array(oracles.naive_matmul(obs.tolist(), policy.w1.T.tolist())) + policy.b1
    h = np.maximum(z1, 0.0)
    want = np.array(oracles.naive_matmul(h.tolist(), policy.w2.T.tolist())) + policy.b2
    assert np.allclose(pre, want, atol=1e-12)


def test_dense_forward_clips_to_action_ranges():
    policy = small_policy()
    policy.b2 = np.array([5.0, -5.0, 0.5])  # force saturation on the first two heads
    out = dense_forward(policy, np.zeros(5))
    assert out[0] == 1.0 and out[1] == 0.0
    assert 0.0 <= out[2] <= 1.0
    batch = dense_forward(policy, np.zeros((4, 5)))
    assert batch.shape == (4, 3)
    assert np.all(batch[:, 0] == 1.0)


def test_backward_matches_finite_differences():
    policy = small_policy(seed=11)
    rng = np.random.Generator(np.random.PCG64(4))
    obs = rng.uniform(-1, 1, size=(7, 5))
    target = rng.uniform(-0.5, 0.5, size=(7, 3))

    def loss_at(flat):
        probe = small_policy(seed=11)
        probe.set_params(flat)
        pre, _, _ = probe.forward_raw(obs)
        return oracles.naive_mse(pre, target)

    pre, h, z1 = policy.forward_raw(obs)
    d_pre = 2.0 * (pre - target) / target.size
    analytic = policy.backward_raw(obs, h, z1, d_pre)
    numeric = oracles.fd_flat_gradient(loss_at, policy.get_params())
    scale = np.maximum(1.0, np.maximum(np.abs(numeric), np.abs(analytic)))
    assert np.all(np.abs(analytic - numeric) / scale < 1e-4)


def test_initialize_is_seeded_and_fan_in_scaled():
    a = DensePolicy.initialize(7)
    b = DensePolicy.initialize(7)
    c = DensePolicy.initialize(8)
    assert np.array_equal(a.get_params(), b.get_params())
    assert not np.array_equal(a.get_params(), c.get_params())
    assert a.sizes == (58, 80, 3)
    assert np.abs(a.w1).max() <= 1.0 / np.sqrt(58)
    assert np.abs(a.w2).max() <= 1.0 / np.sqrt(80)
    assert np.all(a.b1 == 0.0) and np.all(a.b2 == 0.0)


def test_param_roundtrip():
    policy = small_policy()
    flat = policy.get_params()
    other = small_policy(seed=99)
    other.set_params(flat)
    assert np.array_equal(other.get_params(), flat)
    with pytest.raises(ValueError):
        other.set_params(flat[:-1])
