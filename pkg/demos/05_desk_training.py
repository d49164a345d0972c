"""
Semi-supervised training at desk scale
======================================

Generate a synthetic four-class dataset, keep 10% of the training cases
labeled, and compare the three-network framework W with a supervised ViT.
Set DEMO_ITERATIONS=2000 for the full-length comparison (about 10 minutes
on one CPU core); the default is a quick run.
"""

import os

import torch

from _common import output_dir
from s4cvnet import TrainConfig, desk_model_config, generate_synthetic, load_dataset, make_splits, preset
from s4cvnet.experiments import run_framework

torch.set_num_threads(1)
out = output_dir("desk_training")
iterations = int(os.environ.get("DEMO_ITERATIONS", "200"))

data_dir = os.path.join(out, "data")
if not os.path.exists(os.path.join(data_dir, "meta.txt")):
    generate_synthetic(200, 4, 64, seed=7, out=data_dir)
dataset = load_dataset(data_dir)
splits = make_splits(dataset, 0.1, seed=0)
print(f"{len(splits.train_labeled)} labeled, {len(splits.train_unlabeled)} unlabeled, "
      f"{len(splits.val)} validation, {len(splits.test)} test cases")

cfg = TrainConfig(max_iterations=iterations, batch_size=8, eval_every=max(iterations // 10, 1), seed=0)
for name in ("SUP-ViT", "W"):
    outcome = run_framework(preset(name), dataset, splits, cfg, desk_model_config(), os.path.join(out, name))
    curve = ", ".join(f"{v:.3f}" for _, v in outcome.validation)
    print(f"{name:8s} validation mIOU [{curve}]")
    print(f"{'':8s} test mIOU {outcome.report.miou:.4f}, mDice {outcome.report.mdice:.4f} "
          f"(best iteration {outcome.best_iteration})")
