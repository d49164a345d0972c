import os
import sys

import numpy as np
import pytest
import torch

sys.path.insert(0, os.path.dirname(__file__))

from s4cvnet.backbones import AttentionConfig, CNNConfig, ModelConfig  # noqa: E402
from s4cvnet.data import SegDataset, generate_synthetic, load_dataset  # noqa: E402


def toy_model_config(num_classes=3):
    vit = AttentionConfig(img_size=32, embed_dim=8, num_heads=(1, 1, 2, 2), window_size=4, mlp_ratio=2.0)
    return ModelConfig(num_classes, vit, CNNConfig(img_size=32, widths=(2, 4, 4, 8, 8)))


@pytest.fixture
def toy_cfg():
    return toy_model_config()


@pytest.fixture(scope="session")
def toy_data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    generate_synthetic(24, 3, 32, 5, str(d))
    return str(d)


@pytest.fixture(scope="session")
def toy_dataset(toy_data_dir):
    return load_dataset(toy_data_dir)


def random_dataset(n, size=8, K=3, seed=0):
    rng = np.random.default_rng(seed)
    images = rng.random((n, 1, size, size)).astype(np.float32)
    masks = rng.integers(0, K, (n, size, size)).astype(np.int64)
    return SegDataset([f"c{i:03d}" for i in range(n)], images, masks, K)


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)


# one line per acceptance criterion, printed in the terminal summary
CRITERIA_LINES = []


def record_criterion(number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} ({detail})"
    CRITERIA_LINES.append(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)
