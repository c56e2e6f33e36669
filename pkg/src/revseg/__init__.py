"""revseg: desk-scale semantic segmentation with a frozen multi-scale
encoder and a reverse-HRNet decoder, built on a from-scratch numpy autograd
engine."""

__version__ = "0.1.0"

from . import ops
from .analyzer import CostReport, analyze, compare
from .arch import ArchitectureSpec, BackboneSpec, DecoderSpec, default_spec, variant_spec
from .backbone import Backbone, FeaturePyramid, build_backbone, load_pretrained
from .checkpoint import Checkpoint, load_model, read_checkpoint, save_model, write_checkpoint
from .dataio import (DatasetManifest, Sample, generate_synthetic, iterate_batches,
                     load_manifest, load_sample)
from .engine import Tape, Tensor, backward, set_frozen
from .errors import (ArtifactError, NumericError, RevsegError, ShapeError,
                     TapeError, ValidationError)
from .metrics import ConfusionMatrix
from .network import SegmentationModel, build_model, predict_labels
from .trainer import TrainConfig, evaluate, sgd_step, train

__all__ = [
    "ArchitectureSpec", "Backbone", "BackboneSpec", "Checkpoint", "ConfusionMatrix",
    "CostReport", "DatasetManifest", "DecoderSpec", "FeaturePyramid", "Sample",
    "SegmentationModel", "Tape", "Tensor", "TrainConfig", "analyze", "backward",
    "build_backbone", "build_model", "compare", "default_spec", "evaluate",
    "generate_synthetic", "iterate_batches", "load_manifest", "load_model",
    "load_pretrained", "load_sample", "ops", "predict_labels", "read_checkpoint",
    "save_model", "set_frozen", "sgd_step", "train", "variant_spec",
    "write_checkpoint", "ArtifactError", "NumericError", "RevsegError",
    "ShapeError", "TapeError", "ValidationError",
]
