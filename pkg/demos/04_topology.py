"""
Describing frameworks as supervision graphs
===========================================

A framework is a set of networks (learners and EMA teachers) joined by
pseudo-label (CPS) and moving-average (EMA) edges. The loss wiring follows
from the graph.
"""

import os

from _common import output_dir
from s4cvnet import FrameworkSpec, preset, preset_names, validate
from s4cvnet.experiments import sweep
from s4cvnet.topology import ABLATION_PRESETS, CPS, EMA, Edge, Node, grid_position, wire

out = output_dir("topology")

w = preset("W")
print("W nodes:", [(n.id, n.arch, n.role) for n in w.nodes], "test on", w.test_node)
for e in w.edges:
    print(f"  {e.src} -> {e.dst} ({e.kind})")
print("(sup, lambda1, lambda2) term counts:", wire(w).multiplicities())

# Specs round-trip through a small YAML file, so new variants need no code.
path = os.path.join(out, "w.yaml")
w.dump(path)
print(open(path).read())

# Broken graphs come back as a list of violations rather than an exception.
bad = FrameworkSpec([Node("A", "CNN"), Node("T", "ViT", "teacher")], [Edge("A", "T", EMA), Edge("T", "T", CPS)], "T")
for v in validate(bad):
    print(f"  {v.code}: {v.message}")

print("shipped presets:", ", ".join(preset_names()))

# Where each architecture-ablation preset sits in the heatmap grid.
for name in ABLATION_PRESETS:
    print(f"  {name:16s} {grid_position(preset(name))}")

# A dry-run sweep validates every spec and lays out empty heatmaps.
result = sweep([preset(n) for n in ABLATION_PRESETS], out_dir=os.path.join(out, "dry_sweep"), dry_run=True, log=None)
print(f"dry sweep: {len(result.outcomes)} rows, {result.grids['mIOU'].filled_cells()} cells per heatmap")
