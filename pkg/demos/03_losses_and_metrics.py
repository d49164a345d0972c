"""
Losses and evaluation metrics
=============================

Supervised training uses the mean of cross-entropy and soft Dice; evaluation
reports the eight columns mDice, mIOU, Acc, Pre, Sen, Spe, HD and ASD.
"""

import math

import numpy as np
import torch

from s4cvnet import COLUMNS, ce_loss, dice_loss, evaluate, sup_loss, total_loss
from s4cvnet.metrics import asd, hausdorff

labels = torch.randint(0, 4, (2, 8, 8))
uniform = torch.zeros(2, 4, 8, 8)
print(f"uniform logits: CE = {ce_loss(uniform, labels):.4f} (ln 4 = {math.log(4):.4f})")
confident = torch.nn.functional.one_hot(labels, 4).movedim(-1, 1).float() * 20
print(f"confident and correct: CE = {ce_loss(confident, labels):.2e}, Dice loss = {dice_loss(confident, labels):.2e}")
print(f"supervised loss on uniform logits = {sup_loss(uniform, labels):.4f}")

# The per-iteration total weights learner-sourced and teacher-sourced terms separately.
b = total_loss((0.5, 0.7), (0.1, 0.2), (0.3, 0.4), 0.5, 0.5)
print("breakdown:", b.fields())

# Boundary distances between two single pixels 5 apart.
a = np.zeros((5, 5), bool)
c = np.zeros((5, 5), bool)
a[0, 0] = c[3, 4] = True
print("HD =", hausdorff(a, c), "ASD =", asd(a, c))

# Evaluate a shifted prediction against its ground truth.
gt = np.zeros((32, 32), int)
gt[8:24, 8:24] = 1
gt[12:20, 12:20] = 2
pred = np.roll(gt, 2, axis=1)
report = evaluate([pred], [gt], num_classes=3)
for name, value in zip(COLUMNS, report.values()):
    print(f"  {name:5s} {value:.4f}")
