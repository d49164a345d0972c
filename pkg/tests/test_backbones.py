import math

import numpy as np
import pytest
import torch

from s4cvnet.backbones import (
    AttentionConfig,
    CNNConfig,
    ConvBlock,
    ModelConfig,
    PatchEmbed,
    PatchExpand,
    PatchMerging,
    SwinBlockPair,
    SwinUNet,
    UNet,
    WindowAttention,
    attention,
    build_network,
    load_params,
    full_model_config,
    read_params,
    save_params,
    window_partition,
    window_reverse,
)
from s4cvnet.errors import ConfigurationError, DimensionError, StructureError

from helpers import finite_difference_check, weighted_sum_loss, zero_residual_branches


@pytest.fixture(scope="module")
def full_vit():
    torch.manual_seed(0)
    return SwinUNet(AttentionConfig(), num_classes=4).eval()


# ---------------------------------------------------------------- patch embedding

def test_patch_embed_full_size():
    x = torch.randn(2, 1, 224, 224)
    assert PatchEmbed(4, 1, 96)(x).shape == (2, 3136, 96)


def test_patch_embed_small_input():
    assert PatchEmbed(4, 1, 96)(torch.randn(3, 1, 8, 8)).shape == (3, 4, 96)


def test_patch_embed_zero_case():
    pe = PatchEmbed(4, 1, 96)
    with torch.no_grad():
        pe.proj.weight.zero_()
        pe.proj.bias.zero_()
    assert torch.count_nonzero(pe(torch.zeros(1, 1, 8, 8))) == 0


@pytest.mark.parametrize("shape,axis", [((1, 1, 10, 8), "height"), ((1, 1, 8, 10), "width")])
def test_patch_embed_indivisible(shape, axis):
    with pytest.raises(DimensionError, match=axis):
        PatchEmbed(4)(torch.zeros(shape))


def test_replicate_to_3_accepts_grayscale():
    pe = PatchEmbed(4, 1, 8, replicate_to_3=True)
    assert pe.proj.in_channels == 3
    assert pe(torch.randn(1, 1, 8, 8)).shape == (1, 4, 8)


# ---------------------------------------------------------------- windows

def test_window_partition_counts():
    x = torch.randn(1, 56, 56, 8)
    assert window_partition(x, 7).shape == (64, 49, 8)
    assert window_partition(torch.randn(1, 7, 7, 3), 7).shape == (1, 49, 3)


def test_window_round_trip_exact():
    x = torch.randn(2, 14, 28, 5)
    assert torch.equal(window_reverse(window_partition(x, 7), 7, 14, 28), x)


def test_window_partition_indivisible():
    with pytest.raises(DimensionError):
        window_partition(torch.randn(1, 10, 10, 2), 7)


# ---------------------------------------------------------------- attention

def _attention_loop(q, k, v):
    """Straightforward per-row softmax(q k^T / sqrt(d)) v."""
    n, d = q.shape
    out = np.zeros_like(v)
    for i in range(n):
        scores = [sum(q[i, a] * k[j, a] for a in range(d)) / math.sqrt(d) for j in range(n)]
        m = max(scores)
        w = [math.exp(s - m) for s in scores]
        z = sum(w)
        for j in range(n):
            out[i] += w[j] / z * v[j]
    return out


def test_attention_matches_loop_oracle():
    rng = np.random.default_rng(3)
    q, k, v = (rng.normal(size=(3, 5)) for _ in range(3))
    out, _ = attention(*(torch.tensor(a)[None, None] for a in (q, k, v)))
    assert np.max(np.abs(out[0, 0].numpy() - _attention_loop(q, k, v))) < 1e-12


def test_single_token_window_returns_value_projection():
    torch.manual_seed(0)
    wa = WindowAttention(6, 1, 2)
    x = torch.randn(4, 1, 6)
    v = wa.qkv(x)[..., 12:]
    assert torch.allclose(wa(x), wa.proj(v), atol=1e-6)


def test_identical_tokens_give_uniform_attention():
    torch.manual_seed(0)
    wa = WindowAttention(8, 3, 2, relative_position_bias=False)
    x = torch.randn(1, 1, 8).expand(2, 9, 8).contiguous()
    out, attn = wa(x, return_attention=True)
    assert torch.allclose(attn, torch.full_like(attn, 1 / 9), atol=1e-6)
    v = wa.qkv(x[:, :1])[..., 16:]
    assert torch.allclose(out, wa.proj(v).expand_as(out), atol=1e-6)


def test_attention_rows_sum_to_one():
    torch.manual_seed(0)
    wa = WindowAttention(12, 4, 3)
    _, attn = wa(torch.randn(5, 16, 12) * 3, return_attention=True)
    assert torch.allclose(attn.sum(-1), torch.ones(attn.shape[:-1]), atol=1e-6)


def test_head_dim_mismatch():
    with pytest.raises(ConfigurationError):
        WindowAttention(10, 2, 3)


# ---------------------------------------------------------------- block pair

def test_block_pair_shape():
    pair = SwinBlockPair(96, 7, 3, 7)
    assert pair(torch.randn(2, 49, 96)).shape == (2, 49, 96)


def test_block_pair_zero_branches_is_identity():
    torch.manual_seed(1)
    pair = zero_residual_branches(SwinBlockPair(16, 8, 2, 4))
    x = torch.randn(2, 64, 16)
    assert torch.equal(pair(x), x)


def test_block_pair_shift_uses_mask():
    pair = SwinBlockPair(16, 8, 2, 4)
    assert pair.wmsa.shift == 0 and pair.swmsa.shift == 2
    assert pair.swmsa.attn_mask.shape == (4, 16, 16)


def test_block_pair_grid_mismatch():
    with pytest.raises(DimensionError):
        SwinBlockPair(16, 6, 2, 4)


def test_block_pair_gradients():
    torch.manual_seed(2)
    pair = SwinBlockPair(8, 4, 2, 4).double()
    x = torch.randn(2, 16, 8, dtype=torch.float64)
    params = list(pair.parameters())
    errs = finite_difference_check(lambda: weighted_sum_loss(pair(x)), params, n_samples=20)
    assert max(errs) < 1e-4


# ---------------------------------------------------------------- merging / expanding

def test_patch_merge_full_stage():
    assert PatchMerging(96, 56)(torch.randn(1, 56 * 56, 96)).shape == (1, 28 * 28, 192)


def test_patch_merge_smallest_input():
    torch.manual_seed(0)
    pm = PatchMerging(3, 2)
    x = torch.full((1, 4, 3), 0.5)
    out = pm(x)
    assert out.shape == (1, 1, 6)
    expected = pm.reduction(pm.norm(torch.full((1, 1, 12), 0.5)))
    assert torch.allclose(out, expected)


def test_patch_merge_odd_grid():
    with pytest.raises(DimensionError):
        PatchMerging(4, 3)(torch.randn(1, 9, 4))


def test_patch_merge_gradients():
    torch.manual_seed(3)
    pm = PatchMerging(8, 4).double()
    x = torch.randn(1, 16, 8, dtype=torch.float64, requires_grad=True)
    errs = finite_difference_check(lambda: weighted_sum_loss(pm(x)), [x, *pm.parameters()])
    assert max(errs) < 1e-4


def test_patch_expand_bottleneck():
    assert PatchExpand(768, 7)(torch.randn(1, 49, 768)).shape == (1, 196, 384)


def test_expand_after_merge_restores_shape():
    x = torch.randn(2, 16, 8)
    assert PatchExpand(16, 2)(PatchMerging(8, 4)(x)).shape == x.shape


def test_final_expand_reaches_input_resolution():
    out = PatchExpand(96, 56, scale=4)(torch.randn(1, 56 * 56, 96))
    assert out.shape == (1, 224 * 224, 96)


def test_patch_expand_odd_channels():
    with pytest.raises(DimensionError):
        PatchExpand(7, 2)


def test_patch_expand_gradients():
    torch.manual_seed(4)
    pe = PatchExpand(8, 4).double()
    x = torch.randn(1, 16, 8, dtype=torch.float64, requires_grad=True)
    errs = finite_difference_check(lambda: weighted_sum_loss(pe(x)), [x, *pe.parameters()])
    assert max(errs) < 1e-4


# ---------------------------------------------------------------- full networks

def test_vit_forward_full_config(full_vit):
    trace = []
    with torch.no_grad():
        out = full_vit(torch.randn(1, 1, 224, 224), trace=trace)
    assert out.shape == (1, 4, 224, 224)
    assert torch.isfinite(out).all()
    assert [g for _, g, _ in trace] == [56, 28, 14, 7, 7, 14, 28, 56, 224]


def test_vit_forward_deterministic_and_normalised(full_vit):
    x = torch.randn(1, 1, 224, 224)
    with torch.no_grad():
        a, b = full_vit(x), full_vit(x)
    assert torch.equal(a, b)
    assert torch.allclose(a.softmax(1).sum(1), torch.ones(1, 224, 224), atol=1e-6)


def test_vit_rejects_wrong_size(full_vit):
    with pytest.raises(DimensionError, match="divisible by 32"):
        full_vit(torch.randn(1, 1, 200, 200))


def test_attention_config_checks():
    with pytest.raises(DimensionError):
        AttentionConfig(img_size=100).check()
    with pytest.raises(DimensionError):
        AttentionConfig(img_size=96, window_size=7).check()
    with pytest.raises(ConfigurationError):
        AttentionConfig(num_heads=(3, 6, 12)).check()


def test_cnn_forward_full_config():
    torch.manual_seed(0)
    net = UNet(CNNConfig(), 4).eval()
    trace = []
    with torch.no_grad():
        out = net(torch.randn(1, 1, 224, 224), trace=trace)
    assert out.shape == (1, 4, 224, 224)
    assert [g for _, g, _ in trace] == [112, 56, 28, 14, 28, 56, 112, 224]


def test_cnn_gradients_tiny():
    torch.manual_seed(5)
    net = UNet(CNNConfig(img_size=16, widths=(2, 3, 4)), 3).double()
    x = torch.randn(2, 1, 16, 16, dtype=torch.float64)
    errs = finite_difference_check(lambda: weighted_sum_loss(net(x)), list(net.parameters()))
    assert max(errs) < 1e-4


def test_cnn_eval_mode_is_per_sample():
    torch.manual_seed(6)
    net = UNet(CNNConfig(img_size=16, widths=(2, 4, 8)), 2)
    net(torch.randn(4, 1, 16, 16))  # populate running statistics
    net.eval()
    x = torch.randn(3, 1, 16, 16)
    with torch.no_grad():
        together = net(x)
        alone = net(x[:1])
    assert torch.allclose(together[:1], alone, atol=1e-6)


def test_cnn_rejects_indivisible():
    with pytest.raises(DimensionError):
        UNet(CNNConfig(img_size=16, widths=(2, 3, 4)), 2)(torch.randn(1, 1, 18, 18))


def test_build_network_unknown_arch():
    with pytest.raises(ConfigurationError):
        build_network("RNN", full_model_config())


# ---------------------------------------------------------------- parameter archives

def test_checkpoint_round_trip(tmp_path):
    cfg = ModelConfig(3, AttentionConfig(img_size=32, embed_dim=8, num_heads=(1, 1, 2, 2), window_size=4),
                      CNNConfig(img_size=32, widths=(2, 2, 4, 4, 8)))
    for arch in ("ViT", "CNN"):
        torch.manual_seed(0)
        a = build_network(arch, cfg)
        torch.manual_seed(1)
        b = build_network(arch, cfg)
        path = tmp_path / f"{arch}.npz"
        save_params(a, path)
        arrays = read_params(path)
        assert set(arrays) == set(a.state_dict())
        load_params(b, path)
        for k, v in a.state_dict().items():
            assert torch.equal(v, b.state_dict()[k])


def test_checkpoint_shape_mismatch(tmp_path):
    a = ConvBlock(1, 2)
    b = ConvBlock(1, 3)
    save_params(a, tmp_path / "a.npz")
    with pytest.raises(StructureError, match="conv1.weight"):
        load_params(b, tmp_path / "a.npz")
