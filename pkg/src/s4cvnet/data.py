"""Synthetic data, dataset loading, labeled/unlabeled splits and mixed batches."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch
from PIL import Image
from scipy import ndimage


@dataclass
class SegBatch:
    images: torch.Tensor
    masks: Optional[torch.Tensor]
    labeled_count: int
    ids: list = field(default_factory=list)

    @property
    def size(self):
        return self.images.shape[0]

    @property
    def unlabeled_count(self):
        return self.size - self.labeled_count


@dataclass
class SegDataset:
    ids: list
    images: np.ndarray  # [N, 1, H, W] float32 in [0, 1]
    masks: np.ndarray  # [N, H, W] int64
    num_classes: int

    def __len__(self):
        return len(self.ids)

    def index(self, ids):
        lookup = {k: i for i, k in enumerate(self.ids)}
        return [lookup[k] for k in ids]


# ---------------------------------------------------------------- synthetic data

def _ellipse(yy, xx, cy, cx, ry, rx, theta):
    c, s = math.cos(theta), math.sin(theta)
    dy, dx = yy - cy, xx - cx
    u = (c * dx + s * dy) / rx
    v = (-s * dx + c * dy) / ry
    return u * u + v * v <= 1.0


def _render_case(rng, K, size):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    mask = np.zeros((size, size), np.uint8)
    cy, cx = size / 2 + rng.uniform(-size / 10, size / 10, 2)
    r = rng.uniform(0.17, 0.24) * size
    aspect = rng.uniform(0.8, 1.25)
    theta = rng.uniform(0, math.pi)
    nested = list(range(2, K)) if K >= 3 else [1]
    if K >= 3:
        # crescent-like side structure, drawn first and partly covered by the nested ones
        phi = rng.uniform(0, 2 * math.pi)
        oy, ox = cy + 0.9 * r * math.sin(phi), cx + 0.9 * r * math.cos(phi)
        mask[_ellipse(yy, xx, oy, ox, 0.85 * r, 0.85 * r * aspect, theta + 0.5)] = 1
    for depth, cls in enumerate(nested):
        scale = 1.0 - depth * (0.6 / max(len(nested), 1))
        mask[_ellipse(yy, xx, cy, cx, r * scale, r * scale * aspect, theta)] = cls

    levels = np.roll(np.linspace(0.45, 0.9, K - 1), 1) if K > 2 else np.array([0.75])
    img = np.full((size, size), 0.15)
    # background clutter with foreground-like intensities
    for _ in range(rng.integers(2, 5)):
        by, bx = rng.uniform(0, size, 2)
        br = rng.uniform(0.05, 0.12) * size
        blob = _ellipse(yy, xx, by, bx, br, br * rng.uniform(0.6, 1.6), rng.uniform(0, math.pi))
        img[blob & (mask == 0)] = rng.choice(levels)
    for cls in range(1, K):
        img[mask == cls] = levels[cls - 1] + rng.normal(0, 0.03)
    gain = rng.uniform(0.8, 1.2)
    bias = np.outer(np.linspace(-1, 1, size), np.ones(size)) * rng.uniform(-0.1, 0.1)
    img = ndimage.gaussian_filter(img * gain + bias, sigma=0.8)
    img = img + rng.normal(0, 0.07, img.shape)
    return np.clip(img, 0, 1), mask


def check_synthetic_args(n, K, size):
    if n < 4:
        raise ValueError(f"need at least 4 cases, got {n}")
    if K < 2:
        raise ValueError(f"need at least 2 classes, got {K}")
    if size < 16:
        raise ValueError(f"image size {size} too small")


def generate_synthetic(n, K=4, size=64, seed=0, out=None):
    """Write ``n`` image/mask PNG pairs of nested-ellipse structures into ``out``.

    Returns the list of case ids.
    """
    check_synthetic_args(n, K, size)
    rng = np.random.default_rng(seed)
    os.makedirs(os.path.join(out, "images"), exist_ok=True)
    os.makedirs(os.path.join(out, "masks"), exist_ok=True)
    ids = []
    for i in range(n):
        img, mask = _render_case(rng, K, size)
        cid = f"case_{i:04d}"
        Image.fromarray(np.round(img * 255).astype(np.uint8)).save(os.path.join(out, "images", f"{cid}.png"))
        Image.fromarray(mask).save(os.path.join(out, "masks", f"{cid}.png"))
        ids.append(cid)
    with open(os.path.join(out, "meta.txt"), "w") as fh:
        fh.write(f"num_classes={K}\nsize={size}\nn={n}\nseed={seed}\n")
    return ids


# ---------------------------------------------------------------- loading

def read_meta(directory):
    path = os.path.join(directory, "meta.txt")
    if not os.path.exists(path):
        return {}
    with open(path) as fh:
        return dict(line.strip().split("=", 1) for line in fh if "=" in line)


def load_dataset(directory, num_classes=None, resize=None):
    """Read ``images/<id>.png`` and ``masks/<id>.png`` pairs.

    Images are scaled to [0, 1]; with ``resize`` images are resampled bilinearly
    and masks by nearest neighbour.
    """
    if num_classes is None:
        meta = read_meta(directory)
        if "num_classes" not in meta:
            raise ValueError(f"{directory}: num_classes not given and no meta.txt")
        num_classes = int(meta["num_classes"])
    img_dir = os.path.join(directory, "images")
    mask_dir = os.path.join(directory, "masks")
    ids = sorted(os.path.splitext(f)[0] for f in os.listdir(img_dir) if f.endswith(".png"))
    images, masks = [], []
    for cid in ids:
        mpath = os.path.join(mask_dir, f"{cid}.png")
        if not os.path.exists(mpath):
            raise FileNotFoundError(f"missing mask for {cid}: {mpath}")
        img = Image.open(os.path.join(img_dir, f"{cid}.png")).convert("L")
        mask = Image.open(mpath)
        if resize:
            img = img.resize((resize, resize), Image.BILINEAR)
            mask = mask.resize((resize, resize), Image.NEAREST)
        m = np.asarray(mask, dtype=np.int64)
        if m.max() >= num_classes:
            raise ValueError(f"{mpath}: mask value {m.max()} >= num_classes {num_classes}")
        images.append(np.asarray(img, dtype=np.float32)[None] / 255.0)
        masks.append(m)
    if not ids:
        raise ValueError(f"{img_dir}: no images found")
    return SegDataset(ids, np.stack(images), np.stack(masks), num_classes)


# ---------------------------------------------------------------- splits

SECTIONS = ("test", "val", "train_labeled", "train_unlabeled")


@dataclass
class SplitManifest:
    train_labeled: list
    train_unlabeled: list
    val: list
    test: list
    labeled_ratio: float
    seed: int = 0

    def section(self, name):
        return getattr(self, name)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(f"# labeled_ratio={self.labeled_ratio!r}\n# seed={self.seed}\n")
            for name in SECTIONS:
                fh.write(f"[{name}]\n")
                fh.writelines(f"{cid}\n" for cid in self.section(name))

    @classmethod
    def load(cls, path):
        sections = {name: [] for name in SECTIONS}
        meta = {}
        current = None
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    if "=" in line:
                        k, v = line[1:].strip().split("=", 1)
                        meta[k] = v
                elif line.startswith("[") and line.endswith("]"):
                    current = line[1:-1]
                    if current not in sections:
                        raise ValueError(f"{path}: unknown section [{current}]")
                else:
                    if current is None:
                        raise ValueError(f"{path}: id {line!r} outside any section")
                    sections[current].append(line)
        return cls(sections["train_labeled"], sections["train_unlabeled"], sections["val"],
                   sections["test"], float(meta.get("labeled_ratio", "nan")), int(meta.get("seed", 0)))


def make_splits(ids, labeled_ratio, seed=0, test_fraction=0.2, val_fraction=0.1):
    """Shuffle once and carve test, labeled (incl. validation) and unlabeled pools.

    The labeled pool holds ``floor(ratio * n_train)`` cases (at least one); a
    ``val_fraction`` of it (at least one case) is held out for validation. When
    the pool is a single case, validation is taken from the unlabeled pool.
    """
    if not 0 < labeled_ratio <= 1:
        raise ValueError(f"labeled_ratio must be in (0, 1], got {labeled_ratio}")
    ids = list(ids.ids if isinstance(ids, SegDataset) else ids)
    order = [ids[i] for i in np.random.default_rng(seed).permutation(len(ids))]
    n_test = int(round(test_fraction * len(ids)))
    test, train = order[:n_test], order[n_test:]
    n_labeled = max(1, int(math.floor(labeled_ratio * len(train) + 1e-9)))
    labeled, unlabeled = train[:n_labeled], train[n_labeled:]
    if n_labeled >= 2:
        n_val = max(1, int(math.floor(val_fraction * n_labeled)))
        val, labeled = labeled[:n_val], labeled[n_val:]
    elif unlabeled:
        val, unlabeled = unlabeled[:1], unlabeled[1:]
    else:
        raise ValueError(f"dataset of {len(ids)} cases is too small for a labeled and a validation case")
    return SplitManifest(labeled, unlabeled, val, test, labeled_ratio, seed)


# ---------------------------------------------------------------- batches

def _augment(img, mask, flip, k):
    if flip:
        img, mask = img[..., ::-1], mask[..., ::-1]
    return np.rot90(img, k, axes=(-2, -1)), np.rot90(mask, k, axes=(-2, -1))


def next_batch(manifest, dataset, batch_size, seed=0, iteration=0, augment=True):
    """Deterministic mixed batch: labeled items first, then unlabeled (half each when available)."""
    if not manifest.train_labeled:
        raise ValueError("labeled pool is empty")
    rng = np.random.default_rng([int(seed), int(iteration)])
    if manifest.train_unlabeled:
        if batch_size % 2:
            raise ValueError(f"batch_size must be even with unlabeled data, got {batch_size}")
        n_lab = batch_size // 2
    else:
        n_lab = batch_size

    def pick(pool, n):
        return [pool[i] for i in rng.choice(len(pool), n, replace=len(pool) < n)]

    ids = pick(manifest.train_labeled, n_lab)
    if n_lab < batch_size:
        ids += pick(manifest.train_unlabeled, batch_size - n_lab)
    idx = dataset.index(ids)
    flips = rng.integers(0, 2, batch_size)
    rots = rng.integers(0, 4, batch_size)
    images, masks = [], []
    for j, i in enumerate(idx):
        img, mask = dataset.images[i], dataset.masks[i]
        if augment:
            img, mask = _augment(img, mask, flips[j], rots[j])
        images.append(np.ascontiguousarray(img))
        masks.append(np.ascontiguousarray(mask))
    images = torch.from_numpy(np.stack(images))
    lab_masks = torch.from_numpy(np.stack(masks[:n_lab]))
    return SegBatch(images, lab_masks, n_lab, ids)
