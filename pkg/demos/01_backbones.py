"""
Two backbones, one output contract
==================================

The framework pairs a convolutional U-Net with a Swin-style attention U-Net.
Both map a one-channel slice to per-class logits at the input resolution.
"""

import torch

from s4cvnet import AttentionConfig, CNNConfig, SwinUNet, UNet

# The attention network at full size: 4-pixel patches, 96-dim embedding,
# heads 3/6/12/24 and 7x7 windows on a 224x224 slice.
torch.manual_seed(0)
vit = SwinUNet(AttentionConfig(), num_classes=4).eval()
cnn = UNet(CNNConfig(), num_classes=4).eval()

x = torch.randn(1, 1, 224, 224)

# Both forward passes accept a trace list recording every resolution change.
vit_trace, cnn_trace = [], []
with torch.no_grad():
    y_vit = vit(x, trace=vit_trace)
    y_cnn = cnn(x, trace=cnn_trace)

print("attention network: token grid and width per stage")
for name, grid, dim in vit_trace:
    print(f"  {name:9s} {grid:4d}x{grid:<4d} C={dim}")

print("convolutional network: feature map side and channels")
for name, side, ch in cnn_trace:
    print(f"  {name:9s} {side:4d}x{side:<4d} C={ch}")

count = lambda m: sum(p.numel() for p in m.parameters())
print(f"parameters: ViT {count(vit) / 1e6:.1f}M, CNN {count(cnn) / 1e6:.1f}M")
print("outputs:", tuple(y_vit.shape), tuple(y_cnn.shape))

# Shapes that cannot be windowed are rejected with a message naming the axis.
try:
    vit(torch.randn(1, 1, 200, 224))
except ValueError as exc:
    print("rejected:", exc)
