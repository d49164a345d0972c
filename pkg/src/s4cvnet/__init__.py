"""Semi-supervised segmentation with a CNN learner, a ViT learner and an EMA ViT teacher."""
from .backbones import (
    AttentionConfig,
    CNNConfig,
    ModelConfig,
    SwinUNet,
    UNet,
    build_network,
    desk_model_config,
    full_model_config,
)
from .data import SegBatch, SegDataset, SplitManifest, generate_synthetic, load_dataset, make_splits, next_batch
from .errors import ConfigurationError, DimensionError, StructureError, TrainingAborted
from .experiments import run_framework, sweep, sweep_ratios
from .metrics import COLUMNS, MetricReport, evaluate
from .objectives import ce_loss, dice_loss, semi_loss, sup_loss, total_loss
from .semi_supervision import EmaState, RampSchedule, ema_update, make_pseudo_label, ramp_weight
from .topology import FrameworkSpec, instantiate, preset, preset_names, validate
from .trainer import TrainConfig, evaluate_checkpoint, load_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "AttentionConfig", "CNNConfig", "ModelConfig", "SwinUNet", "UNet", "build_network", "desk_model_config",
    "full_model_config", "SegBatch", "SegDataset", "SplitManifest", "generate_synthetic", "load_dataset",
    "make_splits", "next_batch", "ConfigurationError", "DimensionError", "StructureError", "TrainingAborted",
    "run_framework", "sweep", "sweep_ratios", "COLUMNS", "MetricReport", "evaluate", "ce_loss", "dice_loss",
    "semi_loss", "sup_loss", "total_loss", "EmaState", "RampSchedule", "ema_update", "make_pseudo_label",
    "ramp_weight", "FrameworkSpec", "instantiate", "preset", "preset_names", "validate", "TrainConfig",
    "evaluate_checkpoint", "load_checkpoint", "train",
]
