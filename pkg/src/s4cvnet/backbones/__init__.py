"""Segmentation backbones and their parameter archives."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..errors import ConfigurationError, StructureError
from .swin import (
    AttentionConfig,
    PatchEmbed,
    PatchExpand,
    PatchMerging,
    SwinBlock,
    SwinBlockPair,
    SwinUNet,
    WindowAttention,
    attention,
    window_partition,
    window_reverse,
)
from .unet import CNNConfig, ConvBlock, UNet

ARCHS = ("CNN", "ViT")


@dataclass(frozen=True)
class ModelConfig:
    num_classes: int = 4
    vit: AttentionConfig = field(default_factory=AttentionConfig)
    cnn: CNNConfig = field(default_factory=CNNConfig)

    @property
    def img_size(self):
        return self.vit.img_size


def full_model_config(num_classes=4):
    """Tiny Swin-UNet (patch 4, embed 96, heads 3/6/12/24, window 7) and a U-Net at 224x224."""
    return ModelConfig(num_classes, AttentionConfig(), CNNConfig())


def desk_model_config(num_classes=4, img_size=64):
    """Scaled-down pair used for CPU-sized experiments on synthetic data."""
    vit = AttentionConfig(img_size=img_size, embed_dim=16, num_heads=(1, 2, 4, 8), window_size=4,
                          mlp_ratio=2.0)
    cnn = CNNConfig(img_size=img_size, widths=(8, 16, 32, 64, 128))
    return ModelConfig(num_classes, vit, cnn)


def build_network(arch, cfg: ModelConfig):
    if arch == "ViT":
        return SwinUNet(cfg.vit, cfg.num_classes)
    if arch == "CNN":
        return UNet(cfg.cnn, cfg.num_classes)
    raise ConfigurationError(f"unknown architecture {arch!r}; expected one of {ARCHS}")


def state_arrays(module):
    return {name: t.detach().cpu().numpy().copy() for name, t in module.state_dict().items()}


def save_params(module_or_arrays, path):
    """Write parameters as an ``.npz`` archive keyed by ``state_dict`` names."""
    arrays = module_or_arrays
    if isinstance(module_or_arrays, torch.nn.Module):
        arrays = state_arrays(module_or_arrays)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def read_params(path):
    with np.load(path) as data:
        return {k: data[k] for k in data.files}


def load_params(module, source):
    """Copy arrays (a dict or an archive path) into ``module``, checking names and shapes."""
    arrays = read_params(source) if not isinstance(source, dict) else source
    state = module.state_dict()
    missing = sorted(set(state) - set(arrays))
    extra = sorted(set(arrays) - set(state))
    if missing or extra:
        raise StructureError(f"parameter names differ: missing={missing[:5]} unexpected={extra[:5]}")
    for name, tensor in state.items():
        if tuple(arrays[name].shape) != tuple(tensor.shape):
            raise StructureError(
                f"parameter {name!r}: archive shape {arrays[name].shape} != model shape {tuple(tensor.shape)}"
            )
    module.load_state_dict({k: torch.as_tensor(v) for k, v in arrays.items()})
    return module


__all__ = [
    "ARCHS", "AttentionConfig", "CNNConfig", "ConvBlock", "ModelConfig", "PatchEmbed",
    "PatchExpand", "PatchMerging", "SwinBlock", "SwinBlockPair", "SwinUNet", "UNet",
    "WindowAttention", "attention", "build_network", "desk_model_config", "load_params",
    "full_model_config", "read_params", "save_params", "state_arrays",
    "window_partition", "window_reverse",
]
