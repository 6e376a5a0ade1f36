"""Minimal dense/convolutional network kernel with hand-written backward passes.

Float64 throughout; layers are explicit forward/backward pairs composed in a
fixed chain (no graph engine).  Every differentiable op is verifiable by
central finite differences, and the 3D transposed convolutions are exact
adjoints of the matching convolutions.
"""

from .layers import (
    CHECK_FINITE,
    Conv3d,
    Crop2d,
    Deconv2d,
    Deconv3d,
    Dense,
    Flatten,
    Layer,
    Param,
    ReLU,
    Reshape,
    Softplus,
    SqueezeTime,
    TakeLastDay,
    conv_out_dim,
    deconv_out_dim,
    finite_checks,
    relu,
    softplus,
)
from .truncgauss import SIGMA_FLOOR, gauss_nll, log_trunc_mass, trunc_gauss_logpdf, trunc_gauss_nll
from .optim import ParamSet, adam_step
from .gradcheck import grad_check
from .checkpoint import load_tensors, save_tensors

__all__ = [
    "CHECK_FINITE",
    "Conv3d",
    "Crop2d",
    "Deconv2d",
    "Deconv3d",
    "Dense",
    "Flatten",
    "Layer",
    "Param",
    "ParamSet",
    "ReLU",
    "Reshape",
    "SIGMA_FLOOR",
    "Softplus",
    "SqueezeTime",
    "TakeLastDay",
    "adam_step",
    "conv_out_dim",
    "deconv_out_dim",
    "finite_checks",
    "gauss_nll",
    "grad_check",
    "load_tensors",
    "log_trunc_mass",
    "relu",
    "save_tensors",
    "softplus",
    "trunc_gauss_logpdf",
    "trunc_gauss_nll",
]
