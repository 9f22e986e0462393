"""Differentiable tensors and the layers of the (dilated) CRNN."""

from .conv import DilatedConvSpec, conv2d, dilated_conv2d, zero_upsample_kernel
from .layers import BatchNormState, batch_norm, dense_sigmoid, dropout, max_pool_freq, relu
from .losses import bce_loss
from .optim import AdamState, adam_step
from .recurrent import BlstmState, LstmCellParams, blstm_forward
from .tensor import Tensor, as_tensor

__all__ = [
    "AdamState",
    "BatchNormState",
    "BlstmState",
    "DilatedConvSpec",
    "LstmCellParams",
    "Tensor",
    "adam_step",
    "as_tensor",
    "batch_norm",
    "bce_loss",
    "blstm_forward",
    "conv2d",
    "dense_sigmoid",
    "dilated_conv2d",
    "dropout",
    "max_pool_freq",
    "relu",
    "zero_upsample_kernel",
]
