"""Batch command-line entry points.

Exit codes: 0 success, 1 runtime failure (including aborted training), 2 usage error.
Relative output paths are placed under ``$S4CV_OUTPUT_ROOT`` when it is set.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import warnings
from dataclasses import dataclass, fields

import numpy as np

from .backbones import desk_model_config, full_model_config
from .data import check_synthetic_args, generate_synthetic, load_dataset, make_splits, read_meta
from .errors import ConfigurationError, TrainingAborted
from .experiments import DEFAULT_RATIOS_PERCENT, RatioTable, plot_iou_histogram, plot_ratio_lines, run_framework, \
    sweep, sweep_ratios
from .metrics import MetricReport, append_results_row
from .topology import ABLATION_PRESETS, check, preset_names, resolve_spec
from .trainer import TrainConfig

OUTPUT_ROOT_ENV = "S4CV_OUTPUT_ROOT"


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything a run depends on. Written to ``run_config.txt`` in the output directory."""

    out: str = ""
    data_dir: str = ""  # generated here when it holds no dataset; defaults to <out>/data
    n: int = 200
    classes: int = 4
    size: int = 64
    data_seed: int = 7
    spec: str = "W"  # preset name or spec file
    ratio: float = 0.1
    split_seed: int = 0
    model: str = "desk"  # desk | full
    # training
    max_iterations: int = 2000
    batch_size: int = 8
    lr0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    eval_every: int = 200
    seed: int = 0
    lr_schedule: str = "poly"
    ramp_every: int = 150
    alpha_cap: float = 0.99
    perturb_strength: float = 1.0
    semi_on_labeled: bool = False
    eval_batch: int = 16

    def train_config(self):
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: v for k, v in dataclasses.asdict(self).items() if k in names})

    def model_config(self):
        if self.model == "desk":
            return desk_model_config(self.classes, self.size)
        return full_model_config(self.classes)

    def to_text(self):
        return "".join(f"{k}={v}\n" for k, v in dataclasses.asdict(self).items())


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, value):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "bool":
            if value.lower() not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(value)
            return value.lower() in ("1", "true", "yes")
        return {"int": int, "float": float, "str": str}[kind](value)
    except ValueError:
        raise UsageError(f"bad value for {key}: {value!r} (expected {kind})") from None


def parse_config_text(text, source="config"):
    """Flat ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    for num, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{source}:{num}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise UsageError(f"{source}:{num}: unknown key {key!r}; known keys: {', '.join(_FIELD_TYPES)}")
        out[key] = _coerce(key, value)
    return out


def resolve_out(path):
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def build_run_config(args, default_out):
    """Defaults, then the config file, then explicit flags."""
    values = {}
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise UsageError(f"config file not found: {args.config}")
        with open(args.config) as fh:
            values.update(parse_config_text(fh.read(), args.config))
    for key, attr in (("data_dir", "data"), ("ratio", "ratio"), ("seed", "seed"), ("out", "out"),
                      ("max_iterations", "iterations"), ("batch_size", "batch_size"), ("model", "model"),
                      ("spec", "preset")):
        v = getattr(args, attr, None)
        if v is not None:
            values[key] = v
    for item in getattr(args, "set", None) or []:
        values.update(parse_config_text(item, "--set"))
    cfg = RunConfig(**values)
    cfg.out = resolve_out(cfg.out or default_out)
    if not cfg.data_dir:
        cfg.data_dir = os.path.join(cfg.out, "data")
    if cfg.model not in ("desk", "full"):
        raise UsageError(f"model must be 'desk' or 'full', got {cfg.model!r}")
    if not 0 < cfg.ratio <= 1:
        raise UsageError(f"ratio must be in (0, 1], got {cfg.ratio}")
    try:
        cfg.train_config()
        check_synthetic_args(cfg.n, cfg.classes, cfg.size)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _spec_or_usage(ref):
    try:
        spec = resolve_spec(ref)
        check(spec)
        return spec
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    except ConfigurationError as exc:
        raise UsageError(f"invalid spec {ref!r}: {exc}") from None


def prepare_dataset(cfg: RunConfig):
    if not read_meta(cfg.data_dir):
        print(f"generating {cfg.n} synthetic cases in {cfg.data_dir}")
        generate_synthetic(cfg.n, cfg.classes, cfg.size, cfg.data_seed, cfg.data_dir)
    img = cfg.model_config().img_size
    return load_dataset(cfg.data_dir, num_classes=cfg.classes, resize=img)


def _write_run_config(cfg, directory):
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "run_config.txt"), "w") as fh:
        fh.write(cfg.to_text())


def _print_report(name, report):
    cols = report.as_row()
    print("Framework," + ",".join(cols))
    print(name + "," + ",".join(f"{v:.4f}" for v in cols.values()))


# ---------------------------------------------------------------- commands

def cmd_synth(args):
    try:
        check_synthetic_args(args.n, args.classes, args.size)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = resolve_out(args.out)
    ids = generate_synthetic(args.n, args.classes, args.size, args.seed, out)
    ds = load_dataset(out)
    present = [float(np.mean([(m == k).any() for m in ds.masks])) for k in range(args.classes)]
    print(f"wrote {len(ids)} cases ({args.size}x{args.size}, {args.classes} classes) to {out}")
    print("class presence: " + ", ".join(f"{k}:{p:.2f}" for k, p in enumerate(present)))
    return 0


def cmd_train(args):
    cfg = build_run_config(args, "runs/train")
    spec = _spec_or_usage(cfg.spec)
    _write_run_config(cfg, cfg.out)
    ds = prepare_dataset(cfg)
    manifest = make_splits(ds, cfg.ratio, seed=cfg.split_seed)
    manifest.save(os.path.join(cfg.out, "splits.txt"))
    print(f"{spec.name}: {len(manifest.train_labeled)} labeled, {len(manifest.train_unlabeled)} unlabeled, "
          f"{len(manifest.val)} val, {len(manifest.test)} test")

    def progress(t, row):
        if t % cfg.eval_every == 0 or t == cfg.max_iterations:
            print(f"iteration {t}: total loss {row['total']:.4f}", flush=True)

    outcome = run_framework(spec, ds, manifest, cfg.train_config(), cfg.model_config(), cfg.out, progress)
    results = os.path.join(cfg.out, "results.csv")
    if os.path.exists(results):
        os.remove(results)
    append_results_row(results, outcome.name, outcome.report)
    print(f"best validation at iteration {outcome.best_iteration}; test metrics:")
    _print_report(outcome.name, outcome.report)
    return 0


def _parse_list(text, conv, what):
    try:
        items = [conv(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"cannot parse {what} list {text!r}") from None
    if not items:
        raise UsageError(f"empty {what} list")
    return items


def cmd_sweep_ratio(args):
    cfg = build_run_config(args, "runs/sweep_ratio")
    percents = _parse_list(args.ratios, float, "ratio")
    if any(not 0 < p <= 100 for p in percents):
        raise UsageError("ratios are percentages in (0, 100]")
    specs = [_spec_or_usage(r) for r in _parse_list(args.presets, str, "preset")]
    seeds = _parse_list(args.seeds, int, "seed") if args.seeds else [cfg.seed]
    _write_run_config(cfg, cfg.out)
    ds = prepare_dataset(cfg)
    ratios = [p / 100 for p in percents]
    tables = []
    for s in seeds:
        tcfg = dataclasses.replace(cfg.train_config(), seed=s)
        tables.append(sweep_ratios(specs, ratios, ds, tcfg, cfg.model_config(), cfg.split_seed,
                                   os.path.join(cfg.out, f"seed_{s}")))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN cells stay NaN
        mean = np.nanmean(np.stack([t.miou for t in tables]), axis=0)
    table = RatioTable(tables[0].methods, ratios, mean)
    table.write(os.path.join(cfg.out, "ratio_miou.csv"))
    plot_ratio_lines(table, os.path.join(cfg.out, "ratio_miou.png"))
    with open(os.path.join(cfg.out, "ratio_miou.csv")) as fh:
        print(fh.read(), end="")
    return 0 if not any(t.errors for t in tables) else 1


def _expand_specs(refs):
    out = []
    for r in refs:
        out.extend(ABLATION_PRESETS if r.lower() == "ablation" else [r])
    return out


def cmd_sweep_topology(args):
    refs = _expand_specs(_parse_list(args.specs, str, "spec")) if args.specs else []
    if not refs:
        raise UsageError("no specs given")
    cfg = build_run_config(args, "runs/sweep_topology")
    specs = []
    for r in refs:
        try:
            specs.append(resolve_spec(r))
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    _write_run_config(cfg, cfg.out)
    if args.dry_run:
        result = sweep(specs, out_dir=cfg.out, dry_run=True)
    else:
        ds = prepare_dataset(cfg)
        manifest = make_splits(ds, cfg.ratio, seed=cfg.split_seed)
        manifest.save(os.path.join(cfg.out, "splits.txt"))
        result = sweep(specs, ds, manifest, cfg.train_config(), cfg.model_config(), cfg.out)
    print(f"{len(result.outcomes)} rows written to {os.path.join(cfg.out, 'results.csv')}")
    return 0 if all(o.ok for o in result.outcomes) else 1


def cmd_hist(args):
    series = {}
    for item in args.reports:
        name, sep, path = item.partition("=")
        if not sep:  # name the series after the run directory
            name, path = os.path.basename(os.path.dirname(os.path.abspath(item))), item
        if not os.path.exists(path):
            raise UsageError(f"report not found: {path}")
        report = MetricReport.read(path)
        if not report.per_image_iou:
            print(f"error: {path} has no per-image IOU values", file=sys.stderr)
            return 1
        series[name] = report.per_image_iou
    out = resolve_out(args.out)
    os.makedirs(out, exist_ok=True)
    counts = plot_iou_histogram(series, os.path.join(out, "iou_hist.png"))
    with open(os.path.join(out, "iou_hist.csv"), "w") as fh:
        fh.write("series,threshold,images_at_or_above\n")
        for name, (th, at_least) in counts.items():
            fh.writelines(f"{name},{t:g},{c}\n" for t, c in zip(th, at_least))
    print(f"histogram of {len(series)} series written to {out}")
    return 0


# ---------------------------------------------------------------- parser

def _run_options(p, with_preset=True):
    p.add_argument("--config", help="flat key=value file; flags override its values")
    p.add_argument("--data", help="dataset directory (generated when empty)")
    p.add_argument("--ratio", type=float, help="labeled fraction in (0, 1]")
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--model", choices=("desk", "full"))
    p.add_argument("--out")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    if with_preset:
        p.add_argument("--preset", help=f"preset name or spec file ({', '.join(preset_names())})")


def build_parser():
    parser = argparse.ArgumentParser(prog="s4cvnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic segmentation dataset")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one framework and report test metrics")
    _run_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep-ratio", help="test mIOU over labeled-data ratios")
    _run_options(p, with_preset=False)
    p.add_argument("--ratios", default=",".join(map(str, DEFAULT_RATIOS_PERCENT)),
                   help="comma-separated percentages")
    p.add_argument("--presets", default="W,SUP-ViT")
    p.add_argument("--seeds", help="comma-separated training seeds; the table holds their mean")
    p.set_defaults(func=cmd_sweep_ratio)

    p = sub.add_parser("sweep-topology", help="train a list of frameworks and emit metric heatmaps")
    _run_options(p, with_preset=False)
    p.add_argument("--specs", help="comma-separated preset names or spec files; 'ablation' expands to the "
                                   "architecture ablation list")
    p.add_argument("--dry-run", action="store_true", help="validate and lay out without training")
    p.set_defaults(func=cmd_sweep_topology)

    p = sub.add_parser("hist", help="cumulative per-image IOU histogram from report files")
    p.add_argument("--reports", nargs="+", required=True, metavar="[NAME=]PATH")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_hist)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingAborted as exc:
        where = f" at iteration {exc.iteration}" if exc.iteration is not None else ""
        print(f"training aborted{where}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
