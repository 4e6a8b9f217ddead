"""Minimal float64 autodiff substrate: tensors, layers, optimisers, grad oracle."""
from . import functional, kernels
from .functional import conv3x3, gap, linear, multi_head_attention, softmax
from .gradcheck import GradCheckResult, grad_check, grad_check_detail
from .layers import Conv1x1, Conv3x3, FeedForward, LayerNorm, Linear, Module, MultiHeadAttention
from .optim import SGD, AdamW, clip_grad_norm, make_optimizer
from .tensor import Parameter, Tensor, as_tensor, no_grad

__all__ = [
    "functional", "kernels",
    "Tensor", "Parameter", "as_tensor", "no_grad",
    "softmax", "gap", "linear", "conv3x3", "multi_head_attention",
    "grad_check", "grad_check_detail", "GradCheckResult",
    "Module", "Linear", "Conv3x3", "Conv1x1", "LayerNorm", "MultiHeadAttention", "FeedForward",
    "SGD", "AdamW", "clip_grad_norm", "make_optimizer",
]
