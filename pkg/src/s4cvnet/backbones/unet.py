"""Convolutional U-Net with the same four-encoder / four-decoder macro shape as the Swin U-Net."""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import DimensionError


@dataclass(frozen=True)
class CNNConfig:
    img_size: int = 224
    in_chans: int = 1
    # stem width, then one width per encoder stage
    widths: tuple = (32, 64, 128, 256, 512)

    @property
    def num_stages(self):
        return len(self.widths) - 1

    def check(self):
        need = 2 ** self.num_stages
        if self.img_size % need:
            raise DimensionError(f"img_size {self.img_size} must be divisible by {need}")
        return self


class ConvBlock(nn.Module):
    """Two 3x3 conv + batch-norm + ReLU layers."""

    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(out_ch)

    def forward(self, x):
        x = F.relu(self.bn1(self.conv1(x)))
        return F.relu(self.bn2(self.conv2(x)))


class Down(nn.Module):
    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.block = ConvBlock(in_ch, out_ch)

    def forward(self, x):
        return self.block(F.max_pool2d(x, 2))


class Up(nn.Module):
    """Bilinear x2 upsample, 1x1 channel reduction, concat skip, conv block."""

    def __init__(self, in_ch, skip_ch, out_ch):
        super().__init__()
        self.reduce = nn.Conv2d(in_ch, skip_ch, kernel_size=1)
        self.block = ConvBlock(2 * skip_ch, out_ch)

    def forward(self, x, skip):
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=True)
        x = self.reduce(x)
        return self.block(torch.cat([skip, x], dim=1))


class UNet(nn.Module):
    arch = "CNN"

    def __init__(self, cfg: CNNConfig = CNNConfig(), num_classes=4):
        super().__init__()
        cfg.check()
        self.cfg = cfg
        self.num_classes = num_classes
        w = cfg.widths
        self.stem = ConvBlock(cfg.in_chans, w[0])
        self.encoders = nn.ModuleList(Down(w[i], w[i + 1]) for i in range(cfg.num_stages))
        self.decoders = nn.ModuleList(
            Up(w[i + 1], w[i], w[i]) for i in reversed(range(cfg.num_stages))
        )
        self.head = nn.Conv2d(w[0], num_classes, kernel_size=1)
        self.apply(_init_weights)

    def forward(self, x, trace=None):
        cfg = self.cfg
        _, _, H, W = x.shape
        need = 2 ** cfg.num_stages
        if H % need or W % need:
            raise DimensionError(f"input {H}x{W}: both sides must be divisible by {need}")
        x = self.stem(x)
        feats = [x]
        for i, enc in enumerate(self.encoders):
            x = enc(x)
            _note(trace, f"encoder{i}", x)
            feats.append(x)
        for j, dec in enumerate(self.decoders):
            x = dec(x, feats[-2 - j])
            _note(trace, f"decoder{j}", x)
        return self.head(x)


def _note(trace, name, x):
    if trace is not None:
        trace.append((name, x.shape[-1], x.shape[1]))


def _init_weights(m):
    if isinstance(m, nn.Conv2d):
        fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
        nn.init.normal_(m.weight, std=math.sqrt(2.0 / fan_in))
        if m.bias is not None:
            nn.init.zeros_(m.bias)
    elif isinstance(m, nn.BatchNorm2d):
        nn.init.ones_(m.weight)
        nn.init.zeros_(m.bias)
