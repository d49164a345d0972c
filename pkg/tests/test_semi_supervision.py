import copy
import math

import numpy as np
import pytest
import torch
import torch.nn as nn
from hypothesis import given, settings, strategies as st

from s4cvnet.backbones import SwinUNet, UNet
from s4cvnet.data import SegBatch
from s4cvnet.errors import ConfigurationError, StructureError
from s4cvnet.semi_supervision import (
    LEARNER,
    TEACHER,
    EmaState,
    NetworkHandle,
    Prediction,
    RampSchedule,
    ema_alpha,
    ema_update,
    forward_all,
    make_pseudo_label,
    perturb,
    ramp_weight,
)


# ---------------------------------------------------------------- pseudo labels

def test_pseudo_label_forced_argmax():
    logits = torch.zeros(2, 4, 3, 3)
    logits[:, 2] = 1.0
    assert torch.equal(make_pseudo_label(Prediction(logits, "a")), torch.full((2, 3, 3), 2))


def test_pseudo_label_matches_scan():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(1, 3, 2, 2))
    expected = np.zeros((1, 2, 2), dtype=int)
    for i in range(2):
        for j in range(2):
            best = 0
            for k in range(1, 3):
                if logits[0, k, i, j] > logits[0, best, i, j]:
                    best = k
            expected[0, i, j] = best
    assert np.array_equal(make_pseudo_label(torch.tensor(logits)).numpy(), expected)


def test_pseudo_label_detached():
    logits = torch.randn(1, 3, 2, 2, requires_grad=True)
    assert not make_pseudo_label(logits).requires_grad


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(-50, 50), st.floats(0.1, 5))
def test_pseudo_label_invariant_to_shift_and_monotone_map(seed, shift, scale):
    gen = torch.Generator().manual_seed(seed)
    logits = torch.randn(2, 4, 3, 3, generator=gen, dtype=torch.float64)
    base = make_pseudo_label(logits)
    offset = torch.randn(2, 1, 3, 3, generator=gen, dtype=torch.float64) * 10 + shift
    assert torch.equal(make_pseudo_label(logits + offset), base)
    assert torch.equal(make_pseudo_label(torch.tanh(scale * logits) * 3 + shift), base)


# ---------------------------------------------------------------- EMA

def test_alpha_values():
    assert ema_alpha(0) == 0.0
    assert ema_alpha(1) == 0.5
    assert ema_alpha(10_000) == 0.99
    assert ema_alpha(10_000, alpha_cap=1.0) == 1 - 1 / 10_001


@given(st.integers(0, 10**6), st.floats(0.0, 1.0))
def test_alpha_nondecreasing_and_capped(t, cap):
    assert ema_alpha(t, cap) <= ema_alpha(t + 1, cap) <= cap


def _linear_handles(seed=0):
    torch.manual_seed(seed)
    s = nn.Linear(3, 2)
    t = nn.Linear(3, 2)
    return NetworkHandle("s", "CNN", LEARNER, s), NetworkHandle("t", "CNN", TEACHER, t, ema_source="s")


def test_ema_first_step_copies_student():
    s, t = _linear_handles()
    state = ema_update(t, s, EmaState())
    assert state.step == 1
    for a, b in zip(s.module.parameters(), t.module.parameters()):
        assert torch.equal(a, b)


def test_ema_second_step_is_midpoint():
    s, t = _linear_handles()
    before = [p.clone() for p in t.module.parameters()]
    ema_update(t, s, EmaState(step=1))
    for prev, a, b in zip(before, s.module.parameters(), t.module.parameters()):
        assert torch.allclose(b, 0.5 * prev + 0.5 * a, atol=1e-7, rtol=0)


def test_ema_uncapped_is_running_mean():
    s, t = _linear_handles()
    t.module = t.module.double()
    s.module = s.module.double()
    inputs = [torch.randn(2, 3, dtype=torch.float64) for _ in range(100)]
    state = EmaState(alpha_cap=1.0)
    for k, w in enumerate(inputs):
        with torch.no_grad():
            s.module.weight.copy_(w)
        state = ema_update(t, s, state)
        mean = sum(inputs[: k + 1]) / (k + 1)
        assert torch.allclose(t.module.weight, mean, atol=1e-12, rtol=0)


def test_ema_constant_student_distance_shrinks():
    s, t = _linear_handles(1)
    state = EmaState()
    state = EmaState(step=5)  # start from a partly warmed teacher so the gap is nonzero
    gaps = []
    for _ in range(100):
        state = ema_update(t, s, state)
        gaps.append(max((a - b).abs().max().item() for a, b in zip(s.module.parameters(), t.module.parameters())))
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < gaps[0]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000), st.integers(0, 10_000))
def test_ema_stays_between_teacher_and_student(step, seed):
    s, t = _linear_handles(seed)
    prev = [p.clone() for p in t.module.parameters()]
    ema_update(t, s, EmaState(step=step))
    for p0, ps, pt in zip(prev, s.module.parameters(), t.module.parameters()):
        lo, hi = torch.minimum(p0, ps), torch.maximum(p0, ps)
        assert bool(((pt >= lo - 1e-7) & (pt <= hi + 1e-7)).all())


def test_ema_rejects_structure_mismatch(toy_cfg):
    vit = NetworkHandle("s", "ViT", LEARNER, SwinUNet(toy_cfg.vit, 3))
    cnn_teacher = NetworkHandle("t", "CNN", TEACHER, UNet(toy_cfg.cnn, 3))
    with pytest.raises(StructureError):
        ema_update(cnn_teacher, vit, EmaState())
    other = NetworkHandle("t", "CNN", TEACHER, nn.Linear(3, 3))
    with pytest.raises(StructureError):
        ema_update(other, nn.Linear(3, 2), EmaState())


def test_ema_copies_integer_buffers(toy_cfg):
    student = UNet(toy_cfg.cnn, 3)
    teacher = NetworkHandle("t", "CNN", TEACHER, copy.deepcopy(student))
    student(torch.randn(2, 1, 32, 32))
    ema_update(teacher, student, EmaState(step=3))
    for (name, b), (_, sb) in zip(teacher.module.named_buffers(), student.named_buffers()):
        if not b.is_floating_point():
            assert torch.equal(b, sb), name


def test_teacher_parameters_frozen():
    _, t = _linear_handles()
    assert not any(p.requires_grad for p in t.module.parameters())


def test_unknown_role():
    with pytest.raises(ConfigurationError):
        NetworkHandle("x", "CNN", "oracle", nn.Linear(1, 1))


# ---------------------------------------------------------------- ramp

def test_ramp_closed_form_values():
    sched = RampSchedule(30000)
    assert ramp_weight(0, sched) == pytest.approx(math.exp(-5), abs=1e-12)
    assert ramp_weight(15000, sched) == pytest.approx(math.exp(-1.25), abs=1e-12)
    assert ramp_weight(15000, sched) == pytest.approx(0.2865, abs=1e-4)
    assert ramp_weight(30000, sched) == 1.0


def test_ramp_endpoint_exact_off_grid():
    assert ramp_weight(2000, RampSchedule(2000)) == 1.0  # 2000 is not a multiple of 150


def test_ramp_stepwise_constant():
    sched = RampSchedule(3000)
    assert len({ramp_weight(t, sched) for t in range(150, 300)}) == 1


@given(st.integers(1, 50_000), st.data())
def test_ramp_nondecreasing_bounded(t_max, data):
    sched = RampSchedule(t_max)
    t = data.draw(st.integers(0, t_max - 1))
    a, b = ramp_weight(t, sched), ramp_weight(t + 1, sched)
    assert math.exp(-5) - 1e-15 <= a <= b <= 1.0


def test_ramp_out_of_range():
    with pytest.raises(ValueError):
        ramp_weight(11, RampSchedule(10))


# ---------------------------------------------------------------- perturbation / forward

def _batch(n=4, labeled=2):
    return SegBatch(torch.rand(n, 1, 32, 32), torch.zeros(labeled, 32, 32, dtype=torch.long), labeled)


def test_perturb_zero_strength_identity():
    b = _batch()
    assert torch.equal(perturb(b, 0.0).images, b.images)


def test_perturb_bounded_unlabeled_only_and_deterministic():
    b = _batch()
    p1, p2 = perturb(b, 5.0, seed=3), perturb(b, 5.0, seed=3)
    diff = p1.images - b.images
    assert diff.abs().max() <= 0.2 + 1e-6
    assert torch.count_nonzero(diff[:2]) == 0
    assert torch.count_nonzero(diff[2:]) > 0
    assert torch.equal(p1.images, p2.images)


def test_perturb_std_near_target():
    b = SegBatch(torch.zeros(2, 1, 64, 64), None, 0)
    assert perturb(b, 1.0, seed=0).images.std().item() == pytest.approx(0.1, rel=0.05)


def _three_handles(cfg):
    cnn = NetworkHandle("A", "CNN", LEARNER, UNet(cfg.cnn, 3))
    vit = NetworkHandle("B", "ViT", LEARNER, SwinUNet(cfg.vit, 3))
    teacher = NetworkHandle("C", "ViT", TEACHER, copy.deepcopy(vit.module), ema_source="B")
    return cnn, vit, teacher


def test_forward_all_three_networks(toy_cfg):
    handles = _three_handles(toy_cfg)
    preds = forward_all(_batch(), handles, perturb_strength=1.0)
    assert [p.source for p in preds] == ["A", "B", "C"]
    assert [p.no_grad for p in preds] == [False, False, True]
    assert not preds[2].logits.requires_grad and preds[1].logits.requires_grad


def test_forward_all_two_learners(toy_cfg):
    a, b, _ = _three_handles(toy_cfg)
    assert len(forward_all(_batch(), [a, b])) == 2


def test_forward_all_perturbs_only_ema_source(toy_cfg):
    a, b, c = _three_handles(toy_cfg)
    for h in (a, b, c):
        h.module.eval()
    batch = _batch()
    with torch.no_grad():
        clean = {p.source: p.logits for p in forward_all(batch, [a, b, c], 0.0)}
        noisy = {p.source: p.logits for p in forward_all(batch, [a, b, c], 1.0, seed=1)}
    assert torch.equal(clean["A"], noisy["A"]) and torch.equal(clean["C"], noisy["C"])
    assert torch.equal(clean["B"][:2], noisy["B"][:2])
    assert not torch.equal(clean["B"][2:], noisy["B"][2:])
