import math

import numpy as np
import pytest

from groupdance.autodiff import Tensor, backward
from groupdance.errors import FullyMaskedRowError, ValidationError
from groupdance.nn import (
    NEG_INF,
    AttentionConfig,
    CrossAttentionLayer,
    SpatialLayer,
    TemporalSelfLayer,
    causal_mask,
    positional_encoding,
    scaled_dot_attention,
)

from conftest import fd_grad, rel_err

CFG = AttentionConfig(model_dim=8, num_heads=2)


def test_config_validation():
    with pytest.raises(ValidationError):
        AttentionConfig(model_dim=6, num_heads=4)
    with pytest.raises(ValidationError):
        AttentionConfig(model_dim=0, num_heads=1)


def test_causal_mask_support():
    m = causal_mask(4)
    assert (m[np.tril_indices(4)] == 0).all()
    assert (m[np.triu_indices(4, k=1)] == NEG_INF).all()


def test_single_key_returns_value_exactly(rng):
    q = rng.normal(size=(3, 4))
    k = rng.normal(size=(1, 4))
    v = rng.normal(size=(1, 4))
    out = scaled_dot_attention(q, k, v).data
    for row in out:
        np.testing.assert_allclose(row, v[0], atol=1e-12)


def test_uniform_scores_give_column_mean(rng):
    k = rng.normal(size=(5, 4))
    v = rng.normal(size=(5, 4))
    out = scaled_dot_attention(np.zeros((2, 4)), k, v).data
    np.testing.assert_allclose(out, np.tile(v.mean(axis=0), (2, 1)), atol=1e-12)


def test_two_key_softmax_hand_computed():
    # C=1 so the scale is 1; scores (ln 3, 0) weight the values 0.75 / 0.25
    q = np.array([[math.log(3.0)]])
    k = np.array([[1.0], [0.0]])
    v = np.array([[10.0], [-2.0]])
    out = scaled_dot_attention(q, k, v).item()
    expected = 0.75 * 10.0 + 0.25 * (-2.0)
    assert abs(out - expected) < 1e-6


def test_fully_masked_row_raises():
    mask = np.full((2, 3), NEG_INF)
    mask[0] = 0.0
    with pytest.raises(FullyMaskedRowError):
        scaled_dot_attention(np.zeros((2, 4)), np.zeros((3, 4)), np.zeros((3, 4)), mask)


def test_attention_rows_sum_to_one(rng):
    from groupdance._kernels import attn_forward

    q = rng.normal(size=(2, 2, 6, 4))
    k = rng.normal(size=(2, 2, 6, 4))
    v = rng.normal(size=(2, 2, 6, 4))
    _, w = attn_forward(q, k, v, causal_mask(6), 0.5)
    np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-6)
    assert (w[..., np.triu_indices(6, k=1)[0], np.triu_indices(6, k=1)[1]] == 0).all()


def test_attention_gradients_match_finite_differences(rng):
    q0 = rng.normal(size=(3, 4))
    k0 = rng.normal(size=(5, 4))
    v0 = rng.normal(size=(5, 4))
    w = rng.normal(size=(3, 4))
    mask = np.zeros((3, 5))
    mask[0, 3:] = NEG_INF

    def loss_val(q, k, v):
        return (scaled_dot_attention(Tensor(q), Tensor(k), Tensor(v), mask) * w).sum()

    qt, kt, vt = Tensor(q0, True), Tensor(k0, True), Tensor(v0, True)
    backward((scaled_dot_attention(qt, kt, vt, mask) * w).sum())
    assert rel_err(qt.grad, fd_grad(lambda q: loss_val(q, k0, v0).item(), q0)) < 1e-3
    assert rel_err(kt.grad, fd_grad(lambda k: loss_val(q0, k, v0).item(), k0)) < 1e-3
    assert rel_err(vt.grad, fd_grad(lambda v: loss_val(q0, k0, v).item(), v0)) < 1e-3


def test_temporal_layer_causality(rng):
    layer = TemporalSelfLayer(CFG, rng)
    x = rng.normal(size=(7, 8))
    base = layer(Tensor(x), causal=True).data
    for t in (0, 3, 5):
        bumped = x.copy()
        bumped[t + 1:] += rng.normal(size=bumped[t + 1:].shape)
        out = layer(Tensor(bumped), causal=True).data
        assert np.abs(out[: t + 1] - base[: t + 1]).max() < 1e-5


def test_temporal_layer_shapes_and_t1(rng):
    layer = TemporalSelfLayer(CFG, rng)
    for t in (1, 2, 5, 16):
        out = layer(Tensor(rng.normal(size=(t, 8))), causal=False)
        assert out.shape == (t, 8)
    # T=1: self-attention reads the single token, so output has no
    # cross-position dependence at all
    single = rng.normal(size=(1, 8))
    out = layer(Tensor(single), causal=False).data
    assert out.shape == (1, 8)


def test_spatial_layer_permutation_equivariance(rng):
    layer = SpatialLayer(CFG, rng)
    x = rng.normal(size=(5, 8))
    perm = rng.permutation(5)
    out = layer(Tensor(x)).data
    out_perm = layer(Tensor(x[perm])).data
    assert np.abs(out_perm - out[perm]).max() < 1e-6


def test_spatial_layer_identical_dancers_identical_outputs(rng):
    layer = SpatialLayer(CFG, rng)
    x = np.tile(rng.normal(size=(1, 8)), (4, 1))
    out = layer(Tensor(x)).data
    assert np.abs(out - out[0]).max() < 1e-12


def test_spatial_layer_single_dancer(rng):
    layer = SpatialLayer(CFG, rng)
    out = layer(Tensor(rng.normal(size=(1, 8))))
    assert out.shape == (1, 8)


def test_cross_layer_single_kv_token_reads_same_value(rng):
    layer = CrossAttentionLayer(CFG, rng)
    q = rng.normal(size=(4, 8))
    kv = rng.normal(size=(1, 8))
    delta = layer(Tensor(q), Tensor(kv)).data - q
    # softmax over one key is 1 regardless of the query, so every row reads
    # the same transformed value token
    assert np.abs(delta - delta[0]).max() < 1e-12


def test_cross_layer_causal_mask_blocks_future(rng):
    layer = CrossAttentionLayer(CFG, rng)
    q = rng.normal(size=(6, 8))
    kv = rng.normal(size=(6, 8))
    mask = causal_mask(6)
    base = layer(Tensor(q), Tensor(kv), mask).data
    for t in (0, 2, 4):
        bumped = kv.copy()
        bumped[t + 1:] += rng.normal(size=bumped[t + 1:].shape)
        out = layer(Tensor(q), Tensor(bumped), mask).data
        assert np.abs(out[: t + 1] - base[: t + 1]).max() < 1e-5


def test_cross_layer_zero_mask_matches_unmasked(rng):
    layer = CrossAttentionLayer(CFG, rng)
    q = rng.normal(size=(3, 8))
    kv = rng.normal(size=(5, 8))
    masked = layer(Tensor(q), Tensor(kv), np.zeros((3, 5))).data
    unmasked = layer(Tensor(q), Tensor(kv)).data
    np.testing.assert_array_equal(masked, unmasked)


def test_positional_encoding_first_row_and_determinism():
    pe = positional_encoding(10, 8)
    np.testing.assert_allclose(pe[0], [0, 1, 0, 1, 0, 1, 0, 1], atol=1e-12)
    np.testing.assert_array_equal(pe, positional_encoding(10, 8))
    assert np.linalg.norm(pe[1] - pe[2]) > 0
    # all rows pairwise distinct
    d = np.linalg.norm(pe[:, None, :] - pe[None, :, :], axis=-1)
    assert (d + np.eye(10)).min() > 0
