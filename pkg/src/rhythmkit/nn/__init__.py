"""Minimal numpy neural-network engine with hand-written backward passes."""
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, grad_check
from .gru import GRU, GruCellParams, gru_step, gru_step_backward, gru_step_cached
from .layers import (
    Conv2d,
    Dense,
    GlobalAvgPool,
    Layer,
    LayerNorm,
    MaxPool2d,
    Parameter,
    ReLU,
    ResidualBlock,
    Sequential,
    conv2d_backward,
    conv2d_forward,
    l1_loss,
)
from .optim import Adam, AdamState, adam_update

__all__ = [
    "Adam", "AdamState", "Conv2d", "Dense", "GRU", "GlobalAvgPool", "GradCheckReport",
    "GruCellParams", "Layer", "LayerNorm", "MaxPool2d", "Parameter", "ReLU", "ResidualBlock", "Sequential",
    "adam_update", "conv2d_backward", "conv2d_forward", "grad_check", "gru_step",
    "gru_step_backward", "gru_step_cached", "l1_loss", "load_checkpoint", "save_checkpoint",
]
