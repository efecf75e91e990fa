"""Steel surface defect segmentation and classification toolkit."""

from .data import (
    DatasetSplit,
    ImageRecord,
    MaskSet,
    NormStats,
    augment_pair,
    build_splits,
    compute_norm_stats,
    parse_annotations,
    subsample_training,
)
from .experiment import (
    Comparison,
    ExperimentConfig,
    compare,
    load_config,
    run_experiment,
)
from .losses import LossConfig, bce, joint_loss, threshold
from .metrics import MetricReport, aggregate, auc, dice, iou, mla
from .model import (
    FeaturePyramid,
    ModelConfig,
    Prediction,
    build_model,
    count_parameters,
    forward,
)
from .optim import AdamConfig, AdamState, adam_step
from .rle import rle_decode, rle_encode
from .training import TrainConfig, TrainingHistory, evaluate, predict, train
from .weights import load_checkpoint, load_pretrained, save_checkpoint, save_encoder_archive

__version__ = "0.1.0"
