import numpy as np
import torch


ZERO_GRADIENT = 1e-8  # below this magnitude a gradient counts as structurally zero


def relative_error(a, n):
    """Relative difference; for two near-zero values the absolute difference is scaled by ZERO_GRADIENT."""
    return abs(a - n) / max(abs(a), abs(n), ZERO_GRADIENT)


def finite_difference_check(loss_fn, tensors, n_samples=20, h=1e-5, seed=0, max_draws=2000):
    """Compare autograd gradients with central differences at randomly drawn entries.

    ``tensors`` are double-precision leaf tensors (parameters or inputs) that
    ``loss_fn()`` depends on. Entries are drawn until ``n_samples`` of them
    have a gradient of magnitude at least ZERO_GRADIENT; near-zero entries met
    along the way (e.g. a bias feeding batch norm) are checked too. Returns the
    relative error of every checked entry.
    """
    for t in tensors:
        assert t.dtype == torch.float64
        t.grad = None
    loss = loss_fn()
    grads = torch.autograd.grad(loss, tensors, allow_unused=True)
    sizes = np.array([t.numel() for t in tensors])
    rng = np.random.default_rng(seed)
    errors = []
    informative = 0
    with torch.no_grad():
        for _ in range(max_draws):
            if informative >= n_samples:
                break
            ti = rng.choice(len(tensors), p=sizes / sizes.sum())
            t, g = tensors[ti], grads[ti]
            j = int(rng.integers(t.numel()))
            flat = t.view(-1)
            orig = flat[j].item()
            flat[j] = orig + h
            up = loss_fn().item()
            flat[j] = orig - h
            down = loss_fn().item()
            flat[j] = orig
            numeric = (up - down) / (2 * h)
            analytic = 0.0 if g is None else g.view(-1)[j].item()
            informative += max(abs(analytic), abs(numeric)) >= ZERO_GRADIENT
            errors.append(relative_error(analytic, numeric))
    assert informative >= n_samples, f"only {informative} entries with non-zero gradient"
    return errors


def weighted_sum_loss(out, seed=1):
    gen = torch.Generator().manual_seed(seed)
    w = torch.randn(out.shape, generator=gen, dtype=out.dtype)
    return (out * w).sum()


def zero_residual_branches(module):
    """Zero the attention output projections and second MLP layers of every swin block."""
    with torch.no_grad():
        for name, m in module.named_modules():
            if name.endswith("attn.proj") or name.endswith("mlp.fc2"):
                m.weight.zero_()
                m.bias.zero_()
    return module
