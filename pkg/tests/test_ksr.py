import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from csgkit.eagcn import DimensionMismatch
from csgkit.ksr import (KernelScaledRepresentation, KsrConfig, MaskedBatchNorm, batch_norm_channel,
                        classify, kernel_scaled_output, lengths_to_mask)

from helpers import fixture, ksr_classify_oracle, ksr_feature_oracle


def make_ksr(d=4, large=3, small=1, seed=0, scale=0.4, **kw):
    ksr = KernelScaledRepresentation(KsrConfig(d, d, large, small, d, **kw)).double()
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in ksr.parameters():
            p.copy_(torch.randn(p.shape, generator=gen, dtype=torch.float64) * scale)
    ksr.eval()
    return ksr


def set_running_stats(ksr, seed):
    gen = torch.Generator().manual_seed(seed)
    for bn in (ksr.bn_large, ksr.bn_small):
        c = bn.running_mean.numel()
        bn.running_mean.copy_(torch.randn(c, generator=gen, dtype=torch.float64) * 0.3)
        bn.running_var.copy_(torch.rand(c, generator=gen, dtype=torch.float64) + 0.5)


# batch norm ------------------------------------------------------------------

def test_bn_eval_identity():
    out, stats = batch_norm_channel([1.5, -2.0, 0.25], 1.0, 0.0, 0.0, 1.0, eps=0.0, mode="eval")
    assert out == [1.5, -2.0, 0.25] and stats == (0.0, 1.0)


def test_bn_train_closed_form():
    out, _ = batch_norm_channel([1, 2, 3], eps=0.0)
    r = math.sqrt(1.5)
    assert out[1] == 0.0
    assert out[0] == pytest.approx(-r, abs=1e-15) and out[2] == pytest.approx(r, abs=1e-15)
    assert out[2] == pytest.approx(1.2247, abs=1e-4)


def test_bn_constant_input_collapses():
    out, _ = batch_norm_channel([4.0] * 5, gamma=3.0)
    assert out == [0.0] * 5


def test_bn_running_stats_update():
    _, (m, v) = batch_norm_channel([1, 2, 3], running_mean=0.0, running_var=1.0, momentum=0.1)
    assert m == pytest.approx(0.2, abs=1e-15)
    assert v == pytest.approx(0.9 + 0.1 * 1.0, abs=1e-15)  # unbiased batch variance is 1
    with pytest.raises(ValueError):
        batch_norm_channel([1.0], mode="test")


def test_masked_bn_matches_channel_reference():
    bn = MaskedBatchNorm(3).double()
    with torch.no_grad():
        bn.weight.copy_(torch.tensor([1.0, 2.0, -0.5]))
        bn.bias.copy_(torch.tensor([0.0, 0.1, 0.2]))
    x = torch.from_numpy(np.random.default_rng(0).standard_normal((2, 3, 5)))
    lengths = [5, 3]
    mask = lengths_to_mask(lengths, 5)
    bn.train()
    y = bn(x, mask)
    for c in range(3):
        vals = [x[b, c, t].item() for b in range(2) for t in range(lengths[b])]
        ref, (rm, rv) = batch_norm_channel(vals, bn.weight[c].item(), bn.bias[c].item())
        got = [y[b, c, t].item() for b in range(2) for t in range(lengths[b])]
        np.testing.assert_allclose(got, ref, rtol=0, atol=1e-12)
        assert bn.running_mean[c].item() == pytest.approx(rm, abs=1e-14)
        assert bn.running_var[c].item() == pytest.approx(rv, abs=1e-14)
    assert (y[1, :, 3:] == 0).all()


# feature map -----------------------------------------------------------------

def test_zero_input_gives_zero_output():
    ksr = make_ksr()
    for bn in (ksr.bn_large, ksr.bn_small):
        with torch.no_grad():
            bn.weight.fill_(1.0)
            bn.bias.zero_()
    K = kernel_scaled_output(torch.zeros(5, 4, dtype=torch.float64), ksr)
    assert K.shape == (4, 5) and not K.any()


def test_identical_branches_double():
    ksr = make_ksr(large=3, small=3)
    with torch.no_grad():
        ksr.conv_small.weight.copy_(ksr.conv_large.weight)
        ksr.bn_small.load_state_dict(ksr.bn_large.state_dict())
    H = torch.from_numpy(np.random.default_rng(1).standard_normal((6, 4)))
    mask = lengths_to_mask([6], 6)
    single = ksr.bn_large(ksr.conv_large(H.T.unsqueeze(0)), mask)[0]
    assert torch.equal(kernel_scaled_output(H, ksr), 2 * single)


def test_hand_kernels_against_sliding_window():
    ksr = make_ksr(d=2, large=3, small=1)
    with torch.no_grad():
        ksr.conv_large.weight.copy_(torch.tensor([[[1.0, 0.0, -1.0], [0.5, 0.5, 0.5]],
                                                  [[0.0, 2.0, 0.0], [-1.0, 0.0, 1.0]]]))
        ksr.conv_small.weight.copy_(torch.tensor([[[3.0], [0.0]], [[0.25], [-2.0]]]))
    set_running_stats(ksr, 4)
    H = torch.tensor([[1.0, 2.0], [0.0, -1.0], [3.0, 0.5], [-2.0, 1.0], [0.5, 0.5]], dtype=torch.float64)
    K = kernel_scaled_output(H, ksr)
    expected = ksr_feature_oracle(H.tolist(), ksr)
    assert np.max(np.abs(K.detach().numpy() - np.array(expected))) <= 1e-12


def test_train_mode_against_oracle():
    g = fixture("six_node.json")
    ksr = make_ksr(d=5, large=11, small=3, seed=2)
    ksr.train()
    H = torch.from_numpy(np.random.default_rng(2).standard_normal((g.num_nodes, 5)))
    K = kernel_scaled_output(H, ksr)
    expected = ksr_feature_oracle(H.tolist(), ksr, training=True)
    assert np.max(np.abs(K.detach().numpy() - np.array(expected))) <= 1e-10


@pytest.mark.parametrize("k", [1, 3, 5, 7, 9, 11, 13])
@pytest.mark.parametrize("length", [1, 2, 7, 20])
def test_same_padding_shape(k, length):
    ksr = make_ksr(d=3, large=k, small=1)
    K = kernel_scaled_output(torch.ones(length, 3, dtype=torch.float64), ksr)
    assert K.shape == (3, length)


def test_shape_errors():
    ksr = make_ksr(d=4)
    with pytest.raises(DimensionMismatch):
        kernel_scaled_output(torch.zeros(5, 3, dtype=torch.float64), ksr)
    with pytest.raises(DimensionMismatch):
        kernel_scaled_output(torch.zeros(0, 4, dtype=torch.float64), ksr)
    with pytest.raises(ValueError):
        KsrConfig(large_kernel=4)
    with pytest.raises(ValueError):
        KsrConfig(large_kernel=3, small_kernel=5)
    with pytest.raises(ValueError):
        KsrConfig(pooling="sum")


# classifier ------------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_probabilities_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    ksr = make_ksr(d=4, large=5, small=3, seed=seed % 997, scale=2.0)
    K = torch.from_numpy(rng.standard_normal((4, int(rng.integers(1, 12)))) * 10)
    p = classify(K, ksr)
    assert abs(p.sum().item() - 1.0) <= 1e-9
    assert (p >= 0).all()


def test_zero_fc2_is_uniform():
    ksr = make_ksr()
    with torch.no_grad():
        ksr.fc2.weight.zero_()
        ksr.fc2.bias.zero_()
    p = classify(torch.randn(4, 6, dtype=torch.float64), ksr)
    assert p.tolist() == [0.5, 0.5]


def test_six_node_probability_against_oracle():
    g = fixture("six_node.json")
    ksr = make_ksr(d=6, large=11, small=3, seed=7)
    set_running_stats(ksr, 8)
    H = torch.from_numpy(np.random.default_rng(3).standard_normal((g.num_nodes, 6)))
    p = classify(kernel_scaled_output(H, ksr), ksr)
    expected = ksr_classify_oracle(ksr_feature_oracle(H.tolist(), ksr), ksr)
    assert max(abs(a - b) for a, b in zip(p.tolist(), expected)) <= 1e-10


def test_mean_pooling():
    ksr = make_ksr(pooling="mean")
    K = torch.tensor([[[1.0, 3.0, 100.0], [2.0, 2.0, -5.0], [0.0, 1.0, 7.0], [4.0, 0.0, 0.0]]],
                     dtype=torch.float64)
    pooled = ksr.pool(K, lengths_to_mask([2], 3))
    assert pooled.tolist() == [[2.0, 2.0, 0.5, 2.0]]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 30), st.integers(1, 25))
def test_padding_invariance(seed, length, extra):
    rng = np.random.default_rng(seed)
    ksr = make_ksr(d=5, large=11, small=3, seed=seed % 991)
    set_running_stats(ksr, seed % 89)
    H = torch.from_numpy(rng.standard_normal((length, 5)))
    padded = torch.cat([H, torch.zeros(extra, 5, dtype=torch.float64)])
    exact = classify(kernel_scaled_output(H, ksr), ksr)
    K = kernel_scaled_output(padded.unsqueeze(0), ksr, [length])
    assert torch.equal(classify(K, ksr, [length])[0], exact)
