"""Learner/teacher handles, pseudo labels, EMA guidance, the ramp weight and input perturbation."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import torch
import torch.nn as nn

from .errors import ConfigurationError, StructureError

LEARNER, TEACHER = "learner", "teacher"


@dataclass
class NetworkHandle:
    id: str
    arch: str
    role: str
    module: nn.Module
    ema_source: Optional[str] = None

    def __post_init__(self):
        if self.role not in (LEARNER, TEACHER):
            raise ConfigurationError(f"unknown role {self.role!r}")
        if self.role == TEACHER:
            for p in self.module.parameters():
                p.requires_grad_(False)

    @property
    def is_teacher(self):
        return self.role == TEACHER


@dataclass
class Prediction:
    logits: torch.Tensor
    source: str
    no_grad: bool = False


@dataclass
class EmaState:
    step: int = 0
    alpha_cap: float = 0.99

    @property
    def alpha(self):
        return ema_alpha(self.step, self.alpha_cap)


def ema_alpha(t, alpha_cap=0.99):
    return min(1.0 - 1.0 / (t + 1), alpha_cap)


@dataclass(frozen=True)
class RampSchedule:
    max_iteration: int
    update_every: int = 150


def ramp_weight(t, sched: RampSchedule):
    """exp(-5 (1 - t/t_max)^2), held constant over ``update_every``-iteration windows.

    ``t == t_max`` always evaluates the endpoint, so the final weight is exactly 1.
    """
    t_max = sched.max_iteration
    if not 0 <= t <= t_max:
        raise ValueError(f"iteration {t} outside [0, {t_max}]")
    if t_max == 0:
        return 1.0
    if t == t_max:
        return 1.0
    step = (t // sched.update_every) * sched.update_every
    return math.exp(-5.0 * (1.0 - step / t_max) ** 2)


def make_pseudo_label(p):
    """Per-pixel argmax of the logits; carries no gradient."""
    logits = p.logits if isinstance(p, Prediction) else p
    return logits.detach().argmax(dim=1)


@torch.no_grad()
def ema_update(teacher: NetworkHandle, student, state: EmaState):
    """theta_bar <- alpha * theta_bar + (1 - alpha) * theta_student; returns the advanced state.

    Floating buffers (batch-norm statistics) are averaged the same way, integer
    buffers are copied.
    """
    if isinstance(student, NetworkHandle):
        if student.arch != teacher.arch:
            raise StructureError(f"EMA source {student.id} is {student.arch}, teacher {teacher.id} is {teacher.arch}")
        student = student.module
    src = dict(student.named_parameters()) if isinstance(student, nn.Module) else dict(student)
    src_buf = dict(student.named_buffers()) if isinstance(student, nn.Module) else {}
    alpha = state.alpha
    dst = dict(teacher.module.named_parameters())
    if set(dst) != set(src):
        diff = sorted(set(dst) ^ set(src))
        raise StructureError(f"teacher/student parameter names differ: {diff[:5]}")
    for name, t in dst.items():
        s = src[name]
        if t.shape != s.shape:
            raise StructureError(f"parameter {name!r}: teacher {tuple(t.shape)} vs student {tuple(s.shape)}")
        t.mul_(alpha).add_(s.detach(), alpha=1.0 - alpha)
    for name, b in teacher.module.named_buffers():
        s = src_buf.get(name)
        if s is None:
            continue
        if b.is_floating_point():
            b.mul_(alpha).add_(s, alpha=1.0 - alpha)
        else:
            b.copy_(s)
    return replace(state, step=state.step + 1)


def perturb(batch, strength=1.0, seed=0, clip=0.2):
    """Add clipped uniform noise (std 0.1 * strength) to the unlabeled images of ``batch``."""
    if strength == 0:
        return batch
    images = batch.images
    gen = torch.Generator().manual_seed(int(seed))
    half_width = 0.1 * strength * math.sqrt(3.0)
    noise = (torch.rand(images.shape, generator=gen, dtype=torch.float64) * 2 - 1) * half_width
    noise = noise.clamp(-clip, clip).to(images.dtype)
    keep = torch.zeros(images.shape[0], dtype=torch.bool)
    keep[batch.labeled_count:] = True
    noise[~keep] = 0
    return replace(batch, images=images + noise)


def forward_all(batch, handles, perturb_strength=0.0, seed=0):
    """Run every handle on the batch; the EMA-source learners see perturbed unlabeled inputs."""
    ema_sources = {h.ema_source for h in handles if h.is_teacher}
    noisy = perturb(batch, perturb_strength, seed) if perturb_strength and ema_sources else batch
    preds = []
    for h in handles:
        x = noisy.images if h.id in ema_sources else batch.images
        if h.is_teacher:
            with torch.no_grad():
                preds.append(Prediction(h.module(x), h.id, no_grad=True))
        else:
            preds.append(Prediction(h.module(x), h.id))
    return preds
