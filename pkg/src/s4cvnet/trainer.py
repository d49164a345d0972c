"""SGD training of an instantiated framework with periodic validation and best-model retention."""
from __future__ import annotations

import copy
import json
import math
import os
import shutil
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import torch

from .backbones import AttentionConfig, CNNConfig, ModelConfig, build_network, load_params, save_params, state_arrays
from .data import next_batch
from .errors import TrainingAborted
from .metrics import MetricReport, evaluate
from .objectives import semi_loss, sup_loss, total_loss, weighted_total
from .semi_supervision import EmaState, Prediction, RampSchedule, ema_update, forward_all, ramp_weight
from .topology import FrameworkSpec


@dataclass(frozen=True)
class TrainConfig:
    max_iterations: int = 30000
    batch_size: int = 24
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

    def __post_init__(self):
        if self.lr_schedule not in ("poly", "constant"):
            raise ValueError(f"lr_schedule must be 'poly' or 'constant', got {self.lr_schedule!r}")
        for name in ("batch_size", "lr0", "eval_every", "ramp_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


def learning_rate(cfg: TrainConfig, step):
    """Rate for the update at 0-based ``step``: poly decay lr0 * (1 - step/T)^0.9, or constant."""
    if cfg.lr_schedule == "constant" or cfg.max_iterations == 0:
        return cfg.lr0
    return cfg.lr0 * (1.0 - step / cfg.max_iterations) ** 0.9


@torch.no_grad()
def sgd_step(params, grads, velocity, lr, momentum=0.9, weight_decay=0.0):
    """In-place momentum SGD with L2 weight decay folded into the gradient.

    ``velocity`` is a dict updated in place; a parameter's first step seeds it
    with the raw (decayed) gradient.
    """
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if not torch.isfinite(g).all():
            raise TrainingAborted(f"non-finite gradient in parameter {name!r}")
        d = g + weight_decay * p if weight_decay else g.clone()
        v = velocity.get(name)
        if v is None or momentum == 0:
            v = d
        else:
            v = v.mul_(momentum).add_(d)
        velocity[name] = v
        p.sub_(lr * v)
    return params


@dataclass
class CheckpointRecord:
    iteration: int
    params: dict  # node id -> {parameter name: ndarray}
    report: MetricReport
    spec: FrameworkSpec
    model_cfg: ModelConfig
    best: bool = False
    config: Optional[TrainConfig] = None

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        for node, arrays in self.params.items():
            save_params(arrays, os.path.join(directory, f"{node}.npz"))
        manifest = {
            "iteration": self.iteration,
            "best": self.best,
            "spec": self.spec.to_dict(),
            "model": asdict(self.model_cfg),
            "train": asdict(self.config) if self.config else None,
            "validation": self.report.as_row(),
            "validation_report": self.report.to_text(),
        }
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2)


def _model_cfg_from_dict(d):
    tup = lambda cfg: {k: tuple(v) if isinstance(v, list) else v for k, v in cfg.items()}
    return ModelConfig(d["num_classes"], AttentionConfig(**tup(d["vit"])), CNNConfig(**tup(d["cnn"])))


def load_checkpoint(directory):
    with open(os.path.join(directory, "manifest.json")) as fh:
        m = json.load(fh)
    spec = FrameworkSpec.from_dict(m["spec"])
    params = {}
    for n in spec.nodes:
        path = os.path.join(directory, f"{n.id}.npz")
        if os.path.exists(path):
            with np.load(path) as data:
                params[n.id] = {k: data[k] for k in data.files}
    train = TrainConfig(**m["train"]) if m.get("train") else None
    return CheckpointRecord(m["iteration"], params, MetricReport.from_text(m["validation_report"]), spec,
                            _model_cfg_from_dict(m["model"]), m["best"], train)


@torch.no_grad()
def predict(module, images, batch=16):
    """Argmax label maps for ``images`` ([N,1,H,W] array) in inference mode."""
    module.eval()
    dtype = next(module.parameters()).dtype
    out = []
    for i in range(0, len(images), batch):
        x = torch.as_tensor(np.ascontiguousarray(images[i:i + batch])).to(dtype)
        out.append(module(x).argmax(dim=1).numpy())
    return np.concatenate(out)


def evaluate_network(module, dataset, ids, batch=16):
    if not ids:
        raise ValueError("cannot evaluate on an empty split")
    idx = dataset.index(ids)
    pred = predict(module, dataset.images[idx], batch)
    return evaluate(list(pred), list(dataset.masks[idx]), dataset.num_classes)


def evaluate_checkpoint(record: CheckpointRecord, dataset, ids, node=None, batch=16):
    """Rebuild the (test) network from the record and evaluate it on ``ids``."""
    if not ids:
        raise ValueError("cannot evaluate on an empty split")
    node = node or record.spec.test_node
    if node not in record.params:
        raise KeyError(f"checkpoint has no parameters for node {node!r}")
    net = build_network(record.spec.node(node).arch, record.model_cfg)
    load_params(net, record.params[node])
    return evaluate_network(net, dataset, ids, batch)


@dataclass
class TrainResult:
    best: CheckpointRecord
    history: list = field(default_factory=list)  # one LossBreakdown-derived dict per iteration
    validation: list = field(default_factory=list)  # (iteration, val mIOU)


def _snapshot(assembly):
    return {h.id: state_arrays(h.module) for h in assembly.ordered()}


def _validate(assembly, dataset, manifest, cfg):
    net = copy.deepcopy(assembly.test_handle.module)
    return evaluate_network(net, dataset, manifest.val, cfg.eval_batch)


def _log_header(assembly):
    w = assembly.wiring
    cols = ["iteration"] + [f"sup{i + 1}" for i in range(len(w.sup))]
    cols += [f"semi{i + 1}" for i in range(len(w.semi))]
    return cols + ["lambda1", "lambda2", "total", "lr"]


def train(assembly, dataset, manifest, cfg: TrainConfig, out_dir=None, progress=None):
    """Joint optimisation of every learner; EMA teachers follow their sources.

    Returns the checkpoint whose test node had the best validation mIOU.
    """
    T = cfg.max_iterations
    sched = RampSchedule(T, cfg.ramp_every)
    wiring = assembly.wiring
    handles = assembly.ordered()
    learners = assembly.learners
    velocity = {h.id: {} for h in learners}
    ema_states = {dst: EmaState(0, cfg.alpha_cap) for _, dst in wiring.ema}
    result = TrainResult(best=None)
    log = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        log = open(os.path.join(out_dir, "metrics.log"), "w")
        log.write("\t".join(_log_header(assembly)) + "\n")

    def checkpoint(t):
        report = _validate(assembly, dataset, manifest, cfg)
        result.validation.append((t, report.miou))
        if result.best is None or report.miou > result.best.report.miou:
            prev = result.best
            result.best = CheckpointRecord(t, _snapshot(assembly), report, assembly.spec,
                                           assembly.model_cfg, True, cfg)
            if out_dir:
                if prev is not None:
                    shutil.rmtree(os.path.join(out_dir, f"ckpt_{prev.iteration}"), ignore_errors=True)
                result.best.save(os.path.join(out_dir, f"ckpt_{t}"))
        if out_dir:
            with open(os.path.join(out_dir, "validation.log"), "a") as fh:
                fh.write(f"{t}\t{report.miou!r}\n")

    try:
        if T == 0:
            checkpoint(0)
            return result
        for t in range(1, T + 1):
            batch = next_batch(manifest, dataset, cfg.batch_size, cfg.seed, t)
            for h in handles:
                h.module.train()
            preds = {p.source: p for p in forward_all(batch, handles, cfg.perturb_strength,
                                                      seed=cfg.seed * 1_000_003 + t)}
            L, B = batch.labeled_count, batch.size
            sup = [sup_loss(preds[i].logits[:L], batch.masks) for i in wiring.sup]
            sl = slice(0, B) if cfg.semi_on_labeled else slice(L, B)
            semi = []
            for term in wiring.semi:
                if sl.stop - sl.start == 0:
                    semi.append(torch.zeros((), dtype=preds[term.target].logits.dtype))
                    continue
                tgt = Prediction(preds[term.target].logits[sl], term.target)
                src = Prediction(preds[term.source].logits[sl], term.source)
                semi.append(semi_loss(tgt, src))
            n_cps = len(wiring.cps_terms)
            cps, guide = semi[:n_cps], semi[n_cps:]
            lam = ramp_weight(t, sched)
            total = weighted_total(sup, cps, guide, lam, lam)
            breakdown = total_loss(sup, cps, guide, lam, lam)
            if not math.isfinite(breakdown.total):
                raise TrainingAborted(f"non-finite loss at iteration {t}: {breakdown}", t, breakdown)
            for h in learners:
                h.module.zero_grad(set_to_none=True)
            total.backward()
            lr = learning_rate(cfg, t - 1)
            for h in learners:
                params = dict(h.module.named_parameters())
                grads = {n: p.grad for n, p in params.items()}
                try:
                    sgd_step(params, grads, velocity[h.id], lr, cfg.momentum, cfg.weight_decay)
                except TrainingAborted as exc:
                    raise TrainingAborted(f"iteration {t}, network {h.id}: {exc}", t, breakdown) from None
            for src, dst in wiring.ema:
                ema_states[dst] = ema_update(assembly.handles[dst], assembly.handles[src], ema_states[dst])
            row = {"iteration": t, **breakdown.fields(), "lr": lr}
            result.history.append(row)
            if log:
                log.write("\t".join(repr(row[c]) for c in _log_header(assembly)) + "\n")
            if t % cfg.eval_every == 0 or t == T:
                checkpoint(t)
            if progress:
                progress(t, row)
        return result
    finally:
        if log:
            log.close()
