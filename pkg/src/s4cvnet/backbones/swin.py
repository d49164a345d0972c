"""U-shaped shifted-window transformer (Swin-UNet style) for 2D segmentation.

Token maps travel between layers as ``[B, H*W, C]`` with the grid resolution
carried alongside, the same convention the reference Swin code uses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigurationError, DimensionError


@dataclass(frozen=True)
class AttentionConfig:
    img_size: int = 224
    patch_size: int = 4
    in_chans: int = 1
    embed_dim: int = 96
    depths: tuple = (2, 2, 2, 2)
    num_heads: tuple = (3, 6, 12, 24)
    window_size: int = 7
    mlp_ratio: float = 4.0
    relative_position_bias: bool = True
    # accept 1-channel input but carry a 3-channel projection, for external weights
    replicate_to_3: bool = False

    @property
    def num_stages(self):
        return len(self.depths)

    def stage_grid(self, stage):
        return self.img_size // self.patch_size // (2 ** stage)

    def stage_dim(self, stage):
        return self.embed_dim * 2 ** stage

    def stage_window(self, stage):
        return effective_window(self.stage_grid(stage), self.window_size)

    def check(self):
        if len(self.num_heads) != len(self.depths):
            raise ConfigurationError("num_heads and depths must have one entry per stage")
        if self.img_size % self.patch_size:
            raise DimensionError(
                f"img_size {self.img_size} is not divisible by patch_size {self.patch_size}"
            )
        need = self.patch_size * 2 ** (self.num_stages - 1)
        if self.img_size % need:
            raise DimensionError(
                f"img_size {self.img_size} must be divisible by patch_size*2^(stages-1) = {need}"
            )
        for i in range(self.num_stages):
            dim, heads = self.stage_dim(i), self.num_heads[i]
            if dim % heads:
                raise ConfigurationError(f"stage {i}: dim {dim} not divisible by {heads} heads")
            grid, m = self.stage_grid(i), self.stage_window(i)
            if grid % m:
                raise DimensionError(
                    f"stage {i}: token grid {grid} is not divisible by window size {m}"
                )
        return self


def effective_window(grid, window_size):
    # a window larger than the grid collapses to the whole grid, without shifting
    return min(grid, window_size)


def window_partition(x, window_size):
    """Split ``[B, H, W, C]`` into non-overlapping windows ``[B*nW, M*M, C]``."""
    B, H, W, C = x.shape
    M = window_size
    if H % M or W % M:
        axis = "height" if H % M else "width"
        raise DimensionError(f"grid {H}x{W}: {axis} is not divisible by window size {M}")
    x = x.view(B, H // M, M, W // M, M, C)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, M * M, C)


def window_reverse(windows, window_size, H, W):
    """Inverse of :func:`window_partition`."""
    M = window_size
    C = windows.shape[-1]
    B = windows.shape[0] // ((H // M) * (W // M))
    x = windows.view(B, H // M, W // M, M, M, C)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(B, H, W, C)


def attention(q, k, v, bias=None, mask=None):
    """Scaled dot-product attention over the last two axes.

    q, k, v: ``[B', heads, N, d]``. ``bias`` broadcasts to ``[B', heads, N, N]``.
    ``mask`` is additive with shape ``[nW, N, N]`` and ``B'`` a multiple of nW.
    Returns the attended values and the attention weights.
    """
    if not (q.shape == k.shape == v.shape):
        raise ConfigurationError(f"q/k/v shapes differ: {q.shape}, {k.shape}, {v.shape}")
    d = q.shape[-1]
    scores = (q @ k.transpose(-2, -1)) / math.sqrt(d)
    if bias is not None:
        scores = scores + bias
    if mask is not None:
        nw = mask.shape[0]
        Bp, h, N, _ = scores.shape
        scores = scores.view(Bp // nw, nw, h, N, N) + mask[None, :, None]
        scores = scores.view(Bp, h, N, N)
    attn = scores.softmax(dim=-1)
    return attn @ v, attn


def relative_position_index(window_size):
    coords = torch.stack(
        torch.meshgrid(torch.arange(window_size), torch.arange(window_size), indexing="ij")
    ).flatten(1)
    rel = (coords[:, :, None] - coords[:, None, :]).permute(1, 2, 0)
    rel = rel + (window_size - 1)
    return rel[..., 0] * (2 * window_size - 1) + rel[..., 1]


class WindowAttention(nn.Module):
    """Multi-head self-attention inside one window, with optional relative position bias."""

    def __init__(self, dim, window_size, num_heads, relative_position_bias=True):
        super().__init__()
        if dim % num_heads:
            raise ConfigurationError(f"dim {dim} is not divisible by {num_heads} heads")
        self.dim = dim
        self.window_size = window_size
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        if relative_position_bias:
            self.relative_position_bias_table = nn.Parameter(
                torch.zeros((2 * window_size - 1) ** 2, num_heads)
            )
            nn.init.trunc_normal_(self.relative_position_bias_table, std=0.02)
            self.register_buffer(
                "relative_position_index", relative_position_index(window_size), persistent=False
            )
        else:
            self.relative_position_bias_table = None

    def position_bias(self):
        if self.relative_position_bias_table is None:
            return None
        n = self.window_size * self.window_size
        bias = self.relative_position_bias_table[self.relative_position_index.reshape(-1)]
        return bias.view(n, n, -1).permute(2, 0, 1)[None]

    def forward(self, x, mask=None, return_attention=False):
        Bp, N, C = x.shape
        if C != self.dim:
            raise ConfigurationError(f"expected token dim {self.dim}, got {C}")
        if N != self.window_size ** 2:
            raise DimensionError(f"expected {self.window_size ** 2} tokens per window, got {N}")
        qkv = self.qkv(x).reshape(Bp, N, 3, self.num_heads, self.head_dim).permute(2, 0, 3, 1, 4)
        out, attn = attention(qkv[0], qkv[1], qkv[2], self.position_bias(), mask)
        out = self.proj(out.transpose(1, 2).reshape(Bp, N, C))
        return (out, attn) if return_attention else out


class Mlp(nn.Module):
    def __init__(self, dim, hidden):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


def shifted_window_mask(grid, window_size, shift):
    """Additive mask that stops tokens wrapped by the cyclic shift attending across seams."""
    img = torch.zeros(1, grid, grid, 1)
    cuts = (slice(0, -window_size), slice(-window_size, -shift), slice(-shift, None))
    label = 0
    for hs in cuts:
        for ws in cuts:
            img[:, hs, ws, :] = label
            label += 1
    win = window_partition(img, window_size).squeeze(-1)
    diff = win[:, None, :] - win[:, :, None]
    return torch.where(diff != 0, torch.tensor(-100.0), torch.tensor(0.0))


class SwinBlock(nn.Module):
    """Pre-norm attention + MLP residual block; ``shift > 0`` makes it the shifted variant."""

    def __init__(self, dim, grid, num_heads, window_size, shift=0, mlp_ratio=4.0,
                 relative_position_bias=True):
        super().__init__()
        self.dim = dim
        self.grid = grid
        self.window_size = effective_window(grid, window_size)
        self.shift = 0 if self.window_size >= grid else shift
        if grid % self.window_size:
            raise DimensionError(f"token grid {grid} is not divisible by window size {self.window_size}")
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, self.window_size, num_heads, relative_position_bias)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))
        if self.shift:
            self.register_buffer(
                "attn_mask", shifted_window_mask(grid, self.window_size, self.shift), persistent=False
            )
        else:
            self.attn_mask = None

    def forward(self, x):
        B, L, C = x.shape
        H = W = self.grid
        if L != H * W:
            raise DimensionError(f"block expects {H}x{W}={H * W} tokens, got {L}")
        shortcut = x
        h = self.norm1(x).view(B, H, W, C)
        if self.shift:
            h = torch.roll(h, shifts=(-self.shift, -self.shift), dims=(1, 2))
        win = window_partition(h, self.window_size)
        mask = None if self.attn_mask is None else self.attn_mask.to(win.dtype)
        win = self.attn(win, mask)
        h = window_reverse(win, self.window_size, H, W)
        if self.shift:
            h = torch.roll(h, shifts=(self.shift, self.shift), dims=(1, 2))
        x = shortcut + h.reshape(B, L, C)
        return x + self.mlp(self.norm2(x))


class SwinBlockPair(nn.Module):
    """Regular-window block followed by a shifted-window block (shift = M // 2)."""

    def __init__(self, dim, grid, num_heads, window_size, mlp_ratio=4.0, relative_position_bias=True):
        super().__init__()
        self.wmsa = SwinBlock(dim, grid, num_heads, window_size, 0, mlp_ratio, relative_position_bias)
        self.swmsa = SwinBlock(dim, grid, num_heads, window_size, window_size // 2, mlp_ratio,
                               relative_position_bias)

    def forward(self, x):
        return self.swmsa(self.wmsa(x))


def _tokens_to_grid(x, grid):
    B, L, C = x.shape
    if L != grid * grid:
        raise DimensionError(f"expected {grid}x{grid} tokens, got {L}")
    return x.view(B, grid, grid, C)


class PatchEmbed(nn.Module):
    """Non-overlapping ``patch_size`` convolution followed by LayerNorm."""

    def __init__(self, patch_size=4, in_chans=1, embed_dim=96, replicate_to_3=False):
        super().__init__()
        self.patch_size = patch_size
        self.replicate_to_3 = replicate_to_3
        self.proj = nn.Conv2d(3 if replicate_to_3 else in_chans, embed_dim, patch_size, patch_size)
        self.norm = nn.LayerNorm(embed_dim)

    def forward(self, x):
        _, _, H, W = x.shape
        p = self.patch_size
        if H % p:
            raise DimensionError(f"image height {H} is not divisible by patch_size {p}")
        if W % p:
            raise DimensionError(f"image width {W} is not divisible by patch_size {p}")
        if self.replicate_to_3 and x.shape[1] == 1:
            x = x.expand(-1, 3, -1, -1)
        x = self.proj(x).flatten(2).transpose(1, 2)
        return self.norm(x)


class PatchMerging(nn.Module):
    """2x2 neighbourhood concatenation (4C) reduced to 2C by a linear layer."""

    def __init__(self, dim, grid):
        super().__init__()
        self.grid = grid
        self.norm = nn.LayerNorm(4 * dim)
        self.reduction = nn.Linear(4 * dim, 2 * dim, bias=False)

    def forward(self, x):
        if self.grid % 2:
            raise DimensionError(f"patch merging needs an even grid, got {self.grid}x{self.grid}")
        g = _tokens_to_grid(x, self.grid)
        B, _, _, C = g.shape
        x0 = g[:, 0::2, 0::2]
        x1 = g[:, 1::2, 0::2]
        x2 = g[:, 0::2, 1::2]
        x3 = g[:, 1::2, 1::2]
        merged = torch.cat([x0, x1, x2, x3], dim=-1).view(B, -1, 4 * C)
        return self.reduction(self.norm(merged))


class PatchExpand(nn.Module):
    """Linear expansion then pixel rearrangement: grid x``scale``, channels / (scale^2 / expand)."""

    def __init__(self, dim, grid, scale=2):
        super().__init__()
        self.grid = grid
        self.scale = scale
        if scale == 2:
            if dim % 2:
                raise DimensionError(f"patch expanding needs an even channel count, got {dim}")
            self.out_dim = dim // 2
            self.expand = nn.Linear(dim, 2 * dim, bias=False)
        else:
            self.out_dim = dim
            self.expand = nn.Linear(dim, scale * scale * dim, bias=False)
        self.norm = nn.LayerNorm(self.out_dim)

    def forward(self, x):
        x = self.expand(x)
        B, L, _ = x.shape
        s, c, g = self.scale, self.out_dim, self.grid
        if L != g * g:
            raise DimensionError(f"expected {g}x{g} tokens, got {L}")
        x = x.view(B, g, g, s, s, c).permute(0, 1, 3, 2, 4, 5).reshape(B, g * s * g * s, c)
        return self.norm(x)


class SwinStage(nn.Module):
    def __init__(self, dim, grid, depth, num_heads, window_size, mlp_ratio, relative_position_bias):
        super().__init__()
        blocks = []
        for i in range(depth):
            shift = 0 if i % 2 == 0 else window_size // 2
            blocks.append(SwinBlock(dim, grid, num_heads, window_size, shift, mlp_ratio,
                                    relative_position_bias))
        self.blocks = nn.ModuleList(blocks)

    def forward(self, x):
        for blk in self.blocks:
            x = blk(x)
        return x


class SwinUNet(nn.Module):
    """Four encoder stages with merging, four decoder stages with expanding, concat skips."""

    arch = "ViT"

    def __init__(self, cfg: AttentionConfig = AttentionConfig(), num_classes=4):
        super().__init__()
        cfg.check()
        self.cfg = cfg
        self.num_classes = num_classes
        n = cfg.num_stages
        kw = dict(mlp_ratio=cfg.mlp_ratio, relative_position_bias=cfg.relative_position_bias)

        self.patch_embed = PatchEmbed(cfg.patch_size, cfg.in_chans, cfg.embed_dim, cfg.replicate_to_3)
        self.encoders = nn.ModuleList()
        self.merges = nn.ModuleList()
        for i in range(n):
            dim, grid = cfg.stage_dim(i), cfg.stage_grid(i)
            self.encoders.append(SwinStage(dim, grid, cfg.depths[i], cfg.num_heads[i], cfg.window_size, **kw))
            if i < n - 1:
                self.merges.append(PatchMerging(dim, grid))
        self.norm = nn.LayerNorm(cfg.stage_dim(n - 1))

        # decoder stage j works at encoder resolution n-1-j
        self.expands = nn.ModuleList()
        self.skip_fuse = nn.ModuleList()
        self.decoders = nn.ModuleList()
        for j in range(n):
            i = n - 1 - j
            dim, grid = cfg.stage_dim(i), cfg.stage_grid(i)
            if j == 0:
                self.skip_fuse.append(nn.Identity())
                self.decoders.append(nn.Identity())
            else:
                self.skip_fuse.append(nn.Linear(2 * dim, dim))
                self.decoders.append(SwinStage(dim, grid, cfg.depths[i], cfg.num_heads[i], cfg.window_size, **kw))
            if j < n - 1:
                self.expands.append(PatchExpand(dim, grid, scale=2))
        self.norm_up = nn.LayerNorm(cfg.embed_dim)
        self.final_expand = PatchExpand(cfg.embed_dim, cfg.stage_grid(0), scale=cfg.patch_size)
        self.head = nn.Conv2d(cfg.embed_dim, num_classes, kernel_size=1, bias=False)
        self.apply(_init_weights)

    def forward(self, x, trace=None):
        cfg = self.cfg
        _, _, H, W = x.shape
        if H != cfg.img_size or W != cfg.img_size:
            raise DimensionError(
                f"input {H}x{W} does not match configured size {cfg.img_size}; sides must be "
                f"divisible by {cfg.patch_size * 2 ** (cfg.num_stages - 1)} and window-compatible"
            )
        n = cfg.num_stages
        x = self.patch_embed(x)
        skips = []
        for i in range(n):
            _note(trace, f"encoder{i}", cfg.stage_grid(i), x)
            skips.append(x)
            x = self.encoders[i](x)
            if i < n - 1:
                x = self.merges[i](x)
        x = self.norm(x)
        for j in range(n):
            i = n - 1 - j
            if j > 0:
                x = self.skip_fuse[j](torch.cat([x, skips[i]], dim=-1))
                x = self.decoders[j](x)
            _note(trace, f"decoder{j}", cfg.stage_grid(i), x)
            if j < n - 1:
                x = self.expands[j](x)
        x = self.norm_up(x)
        x = self.final_expand(x)
        side = cfg.stage_grid(0) * cfg.patch_size
        _note(trace, "output", side, x)
        x = x.view(x.shape[0], side, side, -1).permute(0, 3, 1, 2)
        return self.head(x)


def _note(trace, name, grid, x):
    if trace is not None:
        trace.append((name, grid, x.shape[-1]))


def _init_weights(m):
    if isinstance(m, nn.Linear):
        nn.init.trunc_normal_(m.weight, std=0.02)
        if m.bias is not None:
            nn.init.zeros_(m.bias)
    elif isinstance(m, nn.LayerNorm):
        nn.init.ones_(m.weight)
        nn.init.zeros_(m.bias)
    elif isinstance(m, nn.Conv2d):
        nn.init.trunc_normal_(m.weight, std=0.02)
        if m.bias is not None:
            nn.init.zeros_(m.bias)
