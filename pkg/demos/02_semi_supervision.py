"""
Pseudo labels, a moving-average teacher and the ramp weight
===========================================================

Unlabeled slices are supervised by other networks' argmax predictions.
The teacher is never trained directly; it trails the ViT learner as an
exponential moving average, and the unsupervised terms fade in over training.
"""

import copy
import os

import numpy as np
import torch

from _common import output_dir
from s4cvnet import EmaState, RampSchedule, SwinUNet, desk_model_config, ema_update, make_pseudo_label, ramp_weight
from s4cvnet.semi_supervision import LEARNER, TEACHER, NetworkHandle, ema_alpha

out = output_dir("semi_supervision")

# Ramp weight over a 30k-iteration schedule, refreshed every 150 iterations.
sched = RampSchedule(30000)
ts = np.arange(0, 30001, 50)
lam = [ramp_weight(int(t), sched) for t in ts]
print(f"lambda(0) = {lam[0]:.6f}, lambda(15000) = {ramp_weight(15000, sched):.4f}, lambda(30000) = {lam[-1]}")

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

fig, ax = plt.subplots(figsize=(5, 3))
ax.plot(ts, lam)
ax.set_xlabel("iteration")
ax.set_ylabel("unsupervised weight")
fig.tight_layout()
fig.savefig(os.path.join(out, "ramp.png"), dpi=100)

# The EMA coefficient grows as 1 - 1/(t+1) until it reaches its cap.
print("alpha:", [round(ema_alpha(t), 3) for t in (0, 1, 2, 9, 99, 1000)])

# A teacher initialised elsewhere converges to a frozen learner.
cfg = desk_model_config()
torch.manual_seed(0)
learner = NetworkHandle("B", "ViT", LEARNER, SwinUNet(cfg.vit, 4))
torch.manual_seed(1)
teacher = NetworkHandle("C", "ViT", TEACHER, SwinUNet(cfg.vit, 4), ema_source="B")
state = EmaState(step=1)
for step in range(1, 2001):
    state = ema_update(teacher, learner, state)
    if step in (1, 10, 100, 1000, 2000):
        gap = max((a - b).abs().max().item() for a, b in zip(teacher.module.parameters(), learner.module.parameters()))
        print(f"after {step:4d} updates: max |teacher - learner| = {gap:.2e}")

# Pseudo labels are the per-pixel argmax and carry no gradient.
logits = torch.randn(1, 4, 3, 3, requires_grad=True)
print(make_pseudo_label(logits)[0])
print("shifted logits give the same labels:",
      torch.equal(make_pseudo_label(logits), make_pseudo_label(logits + torch.randn(1, 1, 3, 3))))
