from renderwait.nn.checkpoint import load_checkpoint, save_checkpoint
from renderwait.nn.layers import (
    BatchNorm2d,
    Conv3x3,
    DepthwiseConv3x3,
    GlobalAvgPool,
    InvertedResidual,
    Linear,
    Module,
    Parameter,
    PointwiseConv1x1,
    ReLU6,
    Sequential,
)
from renderwait.nn.loss import bce_loss, sigmoid
from renderwait.nn.model import Classifier, ModelConfig
from renderwait.nn.optim import Adam, LrSchedule, adam_step
