#!/usr/bin/env python3
"""
Тесты самовнимания, предсказателя оценки и обратного прохода.
tests/test_relation_net.py
"""
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from network.gradcheck import gradient_check, run_gradcheck
from network.relation_net import (
    MODE_EVAL, MODE_TRAIN, PARAM_KEYS, AttentionParams, BranchNet, backward, forward, multi_head_self_attention,
    predict_scores, scaled_dot_attention, self_attentive_features, softmax_rows,
)


def _net(dim: int = 4, heads: int = 2, seed: int = 0, **kwargs) -> BranchNet:
    params = dict(hidden1=6, hidden2=3, dropout=0.0)
    params.update(kwargs)
    return BranchNet.initialize('tube', dim, np.random.default_rng(seed), heads=heads, **params)


def _zero_net(dim: int = 4, heads: int = 2) -> BranchNet:
    net = _net(dim, heads)
    for key in PARAM_KEYS:
        net.params[key] = np.zeros_like(net.params[key])
    return net


def _loop_attention(F: np.ndarray, params: AttentionParams) -> np.ndarray:
    """Построчная реализация многоголового внимания на циклах."""
    dim, n = F.shape
    dq = dim // params.heads
    out = np.zeros((dim, n))
    for j in range(params.heads):
        Q, K, V = params.wq[j] @ F, params.wk[j] @ F, params.wv[j] @ F
        for a in range(n):
            logits = [sum(Q[r, a] * K[r, b] for r in range(dq)) / np.sqrt(dq) for b in range(n)]
            top = max(logits)
            weights = [np.exp(x - top) for x in logits]
            total = sum(weights)
            for r in range(dq):
                out[j * dq + r, a] = sum(weights[b] / total * V[r, b] for b in range(n))
    return out


# --- Внимание ---

def test_attention_single_instance_returns_value():
    Q, K, V = np.array([[0.3]]), np.array([[-2.0]]), np.array([[5.0]])
    assert np.allclose(scaled_dot_attention(Q, K, V), [[5.0]])


def test_attention_identical_columns():
    v = np.array([[1.0], [2.0]])
    Q = K = V = np.hstack([v, v])
    out = scaled_dot_attention(Q, K, V)
    assert np.allclose(out, [[1.0, 2.0], [1.0, 2.0]])


def test_attention_uniform_weights():
    out = scaled_dot_attention(np.zeros((1, 2)), np.zeros((1, 2)), np.array([[1.0, 3.0]]))
    assert np.allclose(out, [[2.0], [2.0]])


def test_attention_shape_mismatch():
    with pytest.raises(ValueError):
        scaled_dot_attention(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 2)))


def test_multi_head_identity_single_instance():
    f = np.array([[0.5], [-1.5]])
    assert np.allclose(multi_head_self_attention(f, AttentionParams.identity(2, 1)), f)


def test_multi_head_matches_loop_oracle():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        for dim in (2, 4):
            F = rng.normal(size=(dim, 3))
            w = [rng.normal(size=(2, dim // 2, dim)) for _ in range(3)]
            params = AttentionParams(2, *w)
            assert np.allclose(multi_head_self_attention(F, params), _loop_attention(F, params), atol=1e-12)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(1, 8))
        scale = float(rng.choice([1e-3, 1.0, 1e2, 1e4]))
        weights = softmax_rows(rng.normal(0.0, scale, size=(n, n)))
        assert np.all(np.abs(weights.sum(axis=1) - 1.0) < 1e-9)
        assert np.all(weights >= 0.0)


def test_residual_adds_attention_exactly():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        heads = int(rng.choice([1, 2]))
        dim = heads * int(rng.integers(1, 4))
        F = rng.normal(size=(dim, int(rng.integers(1, 6))))
        params = AttentionParams(heads, *(rng.normal(size=(heads, dim // heads, dim)) for _ in range(3)))
        out = self_attentive_features(F, params)
        assert out.shape == F.shape
        assert np.array_equal(out, multi_head_self_attention(F, params) + F)


def test_zero_projections_preserve_input():
    F = np.random.default_rng(3).normal(size=(4, 5))
    zero = np.zeros((2, 2, 4))
    assert np.allclose(self_attentive_features(F, AttentionParams(2, zero, zero, zero)), F)


def test_identity_single_instance_doubles():
    f = np.array([[1.0], [2.0], [-3.0]])
    assert np.allclose(self_attentive_features(f, AttentionParams.identity(3, 1)), 2 * f)


def test_attention_params_validate_heads():
    with pytest.raises(ValueError):
        AttentionParams(2, np.zeros((1, 2, 4)), np.zeros((1, 2, 4)), np.zeros((1, 2, 4)))


# --- Предсказатель ---

def test_zero_network_scores_half():
    scores = predict_scores(np.random.default_rng(0).normal(size=(4, 7)), _zero_net())
    assert np.allclose(scores, 0.5)


def test_scores_strictly_inside_unit_interval():
    net = _net()
    F = np.random.default_rng(4).normal(0.0, 50.0, size=(4, 20))
    scores = predict_scores(F, net)
    assert np.all((scores > 0.0) & (scores < 1.0))


def test_eval_mode_is_deterministic():
    net = _net(dropout=0.6)
    F = np.random.default_rng(5).normal(size=(4, 6))
    assert np.array_equal(predict_scores(F, net), predict_scores(F, net))


def test_train_mode_depends_on_seed_only():
    net = _net(dropout=0.6)
    F = np.random.default_rng(6).normal(size=(4, 6))
    first = predict_scores(F, net, MODE_TRAIN, rng_seed=11)
    assert np.array_equal(first, predict_scores(F, net, MODE_TRAIN, rng_seed=11))


def test_monotone_one_dimensional_predictor():
    params = {
        'wq': np.zeros((1, 1, 1)), 'wk': np.zeros((1, 1, 1)), 'wv': np.zeros((1, 1, 1)),
        'w1': np.ones((1, 1)), 'b1': np.zeros(1),
        'w2': np.ones((1, 1)), 'b2': np.zeros(1),
        'w3': np.ones((1, 1)), 'b3': np.zeros(1),
    }
    net = BranchNet('temporal', params, heads=1, dropout=0.0, use_attention=False)
    scores = predict_scores(np.array([[0.1, 0.5, 2.0]]), net)
    assert scores[0] < scores[1] < scores[2]


def test_forward_rejects_wrong_shape():
    with pytest.raises(ValueError):
        forward(np.zeros((3, 2)), _net())
    with pytest.raises(ValueError):
        forward(np.zeros((4, 0)), _net())


def test_branch_net_rejects_bad_params():
    net = _net()
    params = dict(net.params)
    del params['w3']
    with pytest.raises(ValueError):
        BranchNet('tube', params)
    with pytest.raises(ValueError):
        BranchNet('spatial', net.params)


def test_copy_is_independent():
    net = _net()
    clone = net.copy()
    clone.params['w1'] += 1.0
    assert not np.array_equal(net.params['w1'], clone.params['w1'])


# --- Обратный проход ---

def test_zero_upstream_gives_zero_gradients():
    net = _net()
    F = np.random.default_rng(7).normal(size=(4, 3))
    grads, dF = backward(F, net, np.zeros(3))
    assert all(not np.any(grads[k]) for k in PARAM_KEYS)
    assert not np.any(dF)


def test_gradient_shapes_match_params():
    net = _net()
    F = np.random.default_rng(8).normal(size=(4, 5))
    grads, dF = backward(F, net, np.ones(5))
    assert all(grads[k].shape == net.params[k].shape for k in PARAM_KEYS)
    assert dF.shape == F.shape


def test_residual_path_gradient_without_attention_weights():
    net = _net(seed=9)
    for key in ('wq', 'wk', 'wv'):
        net.params[key] = np.zeros_like(net.params[key])
    plain = net.copy()
    plain.use_attention = False
    F = np.random.default_rng(9).normal(size=(4, 3))
    upstream = np.array([0.3, -1.0, 0.7])
    _, dF = backward(F, net, upstream)
    _, dF_plain = backward(F, plain, upstream)
    assert np.allclose(dF, dF_plain)


def test_gradient_check_twenty_seeds():
    results = run_gradcheck(range(20))
    worst = max(results, key=lambda r: r.max_error)
    assert all(r.passed for r in results), f"seed {worst.seed}: {worst.errors}"


def test_gradient_check_with_fixed_dropout_masks():
    result = gradient_check(3, dropout=0.5)
    assert result.passed, result.errors
    assert set(result.errors) == set(PARAM_KEYS) | {'F'}


def test_eval_forward_ignores_rng():
    net = _net(dropout=0.6)
    F = np.random.default_rng(10).normal(size=(4, 3))
    a, _ = forward(F, net, MODE_EVAL, rng=np.random.default_rng(1))
    b, _ = forward(F, net, MODE_EVAL, rng=np.random.default_rng(2))
    assert np.array_equal(a, b)
