"""
The command-line workflow
=========================

The same steps as the library demos, driven through the ``s4cvnet`` command
(equivalently ``python -m s4cvnet``). Each call returns 0 on success, 1 on a
runtime failure and 2 on a usage error.
"""

import os

from _common import output_dir
from s4cvnet.cli import main

out = output_dir("cli")
tiny = ["--iterations", "20", "--batch-size", "4", "--set", "eval_every=10", "--set", "n=40",
        "--set", "size=32"]

# A small dataset, then one training run of W with a third of the cases labeled.
print("synth ->", main(["synth", "--n", "40", "--classes", "4", "--size", "32", "--seed", "7",
                        "--out", os.path.join(out, "data")]))
print("train ->", main(["train", "--preset", "W", "--ratio", "0.3", "--data", os.path.join(out, "data"),
                        "--out", os.path.join(out, "train_W"), *tiny]))

# Unknown presets are usage errors and list the valid names.
print("train (bad preset) ->", main(["train", "--preset", "nope", "--out", os.path.join(out, "x")]))

# Two ratios for two methods; the table keeps the requested column order.
print("sweep-ratio ->", main(["sweep-ratio", "--ratios", "30,100", "--presets", "SUP-ViT,W",
                              "--data", os.path.join(out, "data"), "--out", os.path.join(out, "ratios"), *tiny]))

# The architecture ablation list, structurally only.
print("sweep-topology ->", main(["sweep-topology", "--specs", "ablation", "--dry-run",
                                 "--out", os.path.join(out, "topology")]))

# Cumulative per-image IOU counts from the saved test report.
print("hist ->", main(["hist", "--reports", "W=" + os.path.join(out, "train_W", "test_report.txt"),
                       "--out", os.path.join(out, "hist")]))
