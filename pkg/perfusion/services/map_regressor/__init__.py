"""
🕸️ MAP REGRESSOR

Encoder-decoder network that predicts normalized CBV/CBF/TTP maps straight
from the registered time series.
"""

from .layers import (
    AvgPool2,
    Conv2d,
    ReLU,
    Sigmoid,
    TensorGrad,
    UpsampleNearest2,
    avg_pool2,
    avg_pool2_backward,
    conv2d,
    conv2d_backward,
    sigmoid,
    upsample_nearest2,
    upsample_nearest2_backward,
)
from .loss import mse_loss
from .model import OUTPUT_KINDS, UNet, UNetConfig, channels_for
from .dataset import InputNormalization, TrainingSample, samples_from_case, stack_samples, target_stack
from .training import MapRegressorTrainer, TrainConfig, TrainingHistory, evaluate, train, write_history
from .persistence import load_model, save_model
from .inference import infer
from .gradcheck import grad_check, relative_error

__all__ = [
    "AvgPool2",
    "Conv2d",
    "ReLU",
    "Sigmoid",
    "TensorGrad",
    "UpsampleNearest2",
    "avg_pool2",
    "avg_pool2_backward",
    "conv2d",
    "conv2d_backward",
    "sigmoid",
    "upsample_nearest2",
    "upsample_nearest2_backward",
    "mse_loss",
    "OUTPUT_KINDS",
    "UNet",
    "UNetConfig",
    "channels_for",
    "InputNormalization",
    "TrainingSample",
    "samples_from_case",
    "stack_samples",
    "target_stack",
    "MapRegressorTrainer",
    "TrainConfig",
    "TrainingHistory",
    "evaluate",
    "train",
    "write_history",
    "load_model",
    "save_model",
    "infer",
    "grad_check",
    "relative_error",
]
