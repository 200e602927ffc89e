"""Desk-scale unpaired image-to-image translation.

Two generator/critic pairs trained against each other with round-trip L1
reconstruction, on a self-contained numpy autodiff engine. See README.md
for the CLI and the file formats.
"""

from .engine import Tensor, backward
from .rng import RngStream
from .gradcheck import check_gradients
from .layers import ParamStore, init_weights
from .optim import RmsProp, clip_weights, rmsprop_step
from .networks import PatchCritic, UNetGenerator, receptive_field
from .model import TrainConfig, TwinGanModel, train
from .data import (
    ImageRecord,
    UnpairedDataset,
    load_domain,
    make_synthetic_pairtask,
    preprocess,
    deprocess,
    save_image_grid,
)
from .checkpoint import Checkpoint, load_checkpoint, restore_model, save_checkpoint
from .metrics import (
    LabelMap,
    SegScores,
    cycle_reconstruction_error,
    quantize_to_labels,
    segmentation_scores,
)
from .config import PRESETS, RunConfig

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "backward",
    "RngStream",
    "check_gradients",
    "ParamStore",
    "init_weights",
    "RmsProp",
    "rmsprop_step",
    "clip_weights",
    "UNetGenerator",
    "PatchCritic",
    "receptive_field",
    "TrainConfig",
    "TwinGanModel",
    "train",
    "ImageRecord",
    "UnpairedDataset",
    "load_domain",
    "make_synthetic_pairtask",
    "preprocess",
    "deprocess",
    "save_image_grid",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "restore_model",
    "LabelMap",
    "SegScores",
    "quantize_to_labels",
    "segmentation_scores",
    "cycle_reconstruction_error",
    "RunConfig",
    "PRESETS",
]
