"""Single framework runs, topology sweeps, ratio sweeps and the figures they emit."""
from __future__ import annotations

import csv
import os
import traceback
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import make_splits
from .metrics import COLUMNS, MetricReport, append_results_row, iou_histogram
from .topology import FrameworkSpec, grid_position, instantiate, validate, wire
from .trainer import TrainConfig, evaluate_checkpoint, train


@dataclass
class RunOutcome:
    name: str
    report: Optional[MetricReport] = None  # test-split report of the best checkpoint
    best_iteration: Optional[int] = None
    validation: list = field(default_factory=list)  # (iteration, val mIOU)
    error: Optional[str] = None
    history: list = field(default_factory=list)  # per-iteration loss rows
    best: Optional[object] = None  # CheckpointRecord

    @property
    def ok(self):
        return self.error is None


def run_framework(spec: FrameworkSpec, dataset, manifest, train_cfg: TrainConfig, model_cfg, out_dir=None,
                  progress=None):
    """Train ``spec`` and evaluate its best checkpoint on the test split. Exceptions propagate."""
    assembly = instantiate(spec, model_cfg, seed=train_cfg.seed)
    result = train(assembly, dataset, manifest, train_cfg, out_dir=out_dir, progress=progress)
    report = evaluate_checkpoint(result.best, dataset, manifest.test, batch=train_cfg.eval_batch)
    if out_dir:
        report.write(os.path.join(out_dir, "test_report.txt"))
    return RunOutcome(spec.name or "spec", report, result.best.iteration, result.validation,
                      history=result.history, best=result.best)


def _safe_dir(name):
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


# ---------------------------------------------------------------- topology sweep

@dataclass
class HeatmapGrid:
    """One metric laid out by supervision mode (rows) and CNN:ViT share (columns); NaN marks no value."""

    metric: str
    rows: list
    cols: list
    values: np.ndarray
    names: list  # spec name per cell, "" when empty

    def filled_cells(self):
        return sum(bool(n) for row in self.names for n in row)


@dataclass
class SweepResult:
    outcomes: list
    grids: dict  # metric column -> HeatmapGrid

    def table_rows(self):
        return [(o.name, o.report) for o in self.outcomes]


def _layout(specs):
    """Cell (row label, column label) per spec; colliding cells get the spec name appended to the row."""
    positions = [grid_position(s) for s in specs]
    seen = {}
    for p in positions:
        seen[p] = seen.get(p, 0) + 1
    out = []
    for s, (r, c) in zip(specs, positions):
        out.append((f"{r} [{s.name}]" if seen[(r, c)] > 1 else r, c))
    return out


def build_grids(specs, outcomes):
    layout = _layout(specs)
    rows = list(dict.fromkeys(r for r, _ in layout))
    cols = sorted(dict.fromkeys(c for _, c in layout))
    grids = {}
    for m_idx, metric in enumerate(COLUMNS):
        values = np.full((len(rows), len(cols)), np.nan)
        names = [[""] * len(cols) for _ in rows]
        for spec, (r, c), o in zip(specs, layout, outcomes):
            i, j = rows.index(r), cols.index(c)
            names[i][j] = spec.name or ""
            if o.report is not None:
                values[i, j] = o.report.values()[m_idx]
        grids[metric] = HeatmapGrid(metric, rows, cols, values, names)
    return grids


def sweep(specs, dataset=None, manifest=None, train_cfg=None, model_cfg=None, out_dir=None, dry_run=False,
          log=print):
    """Run every spec in order, recording failures instead of stopping.

    With ``dry_run`` only validation and loss wiring are exercised; reports stay empty.
    """
    if not specs:
        raise ValueError("sweep needs at least one spec")
    outcomes = []
    for idx, spec in enumerate(specs):
        name = spec.name or f"spec{idx}"
        problems = validate(spec)
        if problems:
            outcomes.append(RunOutcome(name, error="; ".join(f"{v.code}: {v.message}" for v in problems)))
        elif dry_run:
            wire(spec)
            outcomes.append(RunOutcome(name))
        else:
            run_dir = os.path.join(out_dir, "runs", f"{idx:02d}_{_safe_dir(name)}") if out_dir else None
            try:
                outcome = run_framework(spec, dataset, manifest, train_cfg, model_cfg, run_dir)
                outcome.name = name
            except Exception as exc:  # isolate the failure, keep sweeping
                outcome = RunOutcome(name, error=f"{type(exc).__name__}: {exc}")
                if run_dir:
                    os.makedirs(run_dir, exist_ok=True)
                    with open(os.path.join(run_dir, "error.txt"), "w") as fh:
                        fh.write(traceback.format_exc())
            outcomes.append(outcome)
        if log:
            o = outcomes[-1]
            status = "failed: " + o.error if o.error else ("ok" if o.report is None else f"mIOU={o.report.miou:.4f}")
            log(f"[{idx + 1}/{len(specs)}] {name} {status}")
    result = SweepResult(outcomes, build_grids(specs, outcomes))
    if out_dir:
        write_sweep(result, out_dir)
    return result


def write_sweep(result: SweepResult, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "results.csv")
    if os.path.exists(path):
        os.remove(path)
    for o in result.outcomes:
        append_results_row(path, o.name, o.report)
    failures = [o for o in result.outcomes if o.error]
    with open(os.path.join(out_dir, "failures.txt"), "w") as fh:
        fh.writelines(f"{o.name}\t{o.error}\n" for o in failures)
    for metric, grid in result.grids.items():
        write_grid(grid, os.path.join(out_dir, f"grid_{metric}.csv"))
        plot_heatmap(grid, os.path.join(out_dir, f"heatmap_{metric}.png"))


def write_grid(grid: HeatmapGrid, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", *grid.cols])
        for r, row in zip(grid.rows, grid.values):
            w.writerow([r, *("" if np.isnan(v) else repr(float(v)) for v in row)])


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_heatmap(grid: HeatmapGrid, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(2.2 + 1.6 * len(grid.cols), 1.2 + 0.45 * len(grid.rows)))
    ax.imshow(np.ma.masked_invalid(grid.values), cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(grid.cols)), grid.cols)
    ax.set_yticks(range(len(grid.rows)), grid.rows, fontsize=7)
    for i in range(len(grid.rows)):
        for j in range(len(grid.cols)):
            v = grid.values[i, j]
            if grid.names[i][j]:
                ax.text(j, i, "-" if np.isnan(v) else f"{v:.3f}", ha="center", va="center", fontsize=7,
                        color="white")
    ax.set_title(grid.metric)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


# ---------------------------------------------------------------- label-ratio sweep

DEFAULT_RATIOS_PERCENT = (1, 2, 5, 10, 20, 30, 50, 100)


@dataclass
class RatioTable:
    methods: list
    ratios: list  # fractions in (0, 1]
    miou: np.ndarray  # methods x ratios, NaN where the run failed
    errors: dict = field(default_factory=dict)  # (method, ratio) -> message

    def write(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["Method", *(f"{100 * r:g}%" for r in self.ratios)])
            for m, row in zip(self.methods, self.miou):
                w.writerow([m, *("" if np.isnan(v) else f"{v:.6f}" for v in row)])


def sweep_ratios(specs, ratios, dataset, train_cfg, model_cfg, split_seed=0, out_dir=None, log=print):
    """Test mIOU of each spec trained at each labeled fraction."""
    table = RatioTable([s.name or f"spec{i}" for i, s in enumerate(specs)], list(ratios),
                       np.full((len(specs), len(ratios)), np.nan))
    for j, ratio in enumerate(ratios):
        manifest = make_splits(dataset, ratio, seed=split_seed)
        for i, spec in enumerate(specs):
            name = table.methods[i]
            run_dir = os.path.join(out_dir, "runs", f"{_safe_dir(name)}_r{ratio:g}") if out_dir else None
            try:
                table.miou[i, j] = run_framework(spec, dataset, manifest, train_cfg, model_cfg, run_dir).report.miou
            except Exception as exc:
                table.errors[(name, ratio)] = f"{type(exc).__name__}: {exc}"
            if log:
                msg = table.errors.get((name, ratio)) or f"mIOU={table.miou[i, j]:.4f}"
                log(f"{name} @ {100 * ratio:g}%: {msg}")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        table.write(os.path.join(out_dir, "ratio_miou.csv"))
        with open(os.path.join(out_dir, "failures.txt"), "w") as fh:
            fh.writelines(f"{m}\t{r:g}\t{e}\n" for (m, r), e in table.errors.items())
        plot_ratio_lines(table, os.path.join(out_dir, "ratio_miou.png"))
    return table


def plot_ratio_lines(table: RatioTable, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    x = 100 * np.asarray(table.ratios, dtype=float)
    for m, row in zip(table.methods, table.miou):
        ax.plot(x, row, marker="o", label=m)
    ax.set_xscale("log")
    ax.set_xlabel("labeled data (%)")
    ax.set_ylabel("mIOU")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


# ---------------------------------------------------------------- IOU histogram

def plot_iou_histogram(series, path, thresholds=None):
    """Cumulative counts of images at or above each IOU threshold, one line per named series."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    out = {}
    for name, ious in series.items():
        th, _, at_least = iou_histogram(ious, thresholds)
        out[name] = (th, at_least)
        ax.step(th, at_least, where="post", label=name)
    ax.set_xlabel("IOU threshold")
    ax.set_ylabel("images with IOU >= threshold")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return out
