"""Predictor assembly and training.

Three predictors are supported: the profile-feature 3D encoder-decoder
(``full``), the same network on raw 16-channel features (``raw_features``),
and a two-layer fully connected baseline (``baseline_fc``) that sees only
the most recent input day.  The convolutional network downsamples space
twice (stride 2), bottlenecks through a 128-wide dense layer, then mirrors
the encoder with two 3D transposed convolutions (the second collapses the
time axis) and a final 2D transposed convolution producing a location and
scale value per pixel.  Scales go through softplus plus a 1e-4 floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .gridding import WindowSample, patch_corners
from .net.layers import (
    Conv3d,
    Crop2d,
    Deconv2d,
    Deconv3d,
    Dense,
    Flatten,
    Param,
    ReLU,
    Reshape,
    SqueezeTime,
    TakeLastDay,
    _sigmoid,
    deconv_out_dim,
    softplus,
)
from .net.optim import ParamSet, adam_step
from .net.truncgauss import SIGMA_FLOOR, trunc_gauss_mean, trunc_gauss_nll

__all__ = [
    "ModelConfig",
    "PredictionGrid",
    "Network",
    "NumericError",
    "build_network",
    "forward",
    "train",
    "predict_full_map",
]

MODES = ("full", "raw_features", "baseline_fc")


class NumericError(RuntimeError):
    """Non-finite loss or gradients during training."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and training hyperparameters."""

    mode: str = "full"
    input_channels: int = 64
    input_days: int = 3
    grid: tuple[int, int] = (20, 20)
    patch: tuple[int, int, int] | None = None  # (rows, cols, stride), None = whole image
    enc_channels: tuple[int, int] = (16, 32)
    latent: int = 128
    baseline_hidden: int = 256
    lr: float = 1e-4
    epochs: int = 40
    batch_size: int = 16
    seed: int = 0

    def validate(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.input_channels < 1:
            raise ValueError("input_channels must be >= 1")
        if self.input_days < 1 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("input_days and batch_size must be >= 1, epochs >= 0")
        h, w = self.grid
        if h < 1 or w < 1:
            raise ValueError(f"bad grid {self.grid!r}")
        if self.patch is not None:
            ph, pw, st = self.patch
            if ph > h or pw > w or ph < 1 or pw < 1 or st < 1:
                raise ValueError(f"patch {self.patch!r} does not fit grid {self.grid!r}")

    @property
    def net_grid(self) -> tuple[int, int]:
        """Spatial size the network is built for (patch size in patch mode)."""
        return (self.patch[0], self.patch[1]) if self.patch else self.grid


@dataclass(frozen=True)
class PredictionGrid:
    """Per-pixel truncated-Gaussian location and scale."""

    mu: np.ndarray
    sigma: np.ndarray

    def point_estimate(self) -> np.ndarray:
        """Expected severity under the truncated distribution, inside [0, 1]."""
        return trunc_gauss_mean(self.mu, self.sigma)


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


class Network:
    """A fixed chain of layers plus the (mu, sigma) output head."""

    def __init__(self, layers, config: ModelConfig, head_bias=None):
        self.layers = layers
        self.config = config
        self._head_bias = head_bias  # (Param, mu_slice, sigma_slice)
        named = {}
        for i, layer in enumerate(layers):
            for pname, p in layer.params().items():
                named[f"layer{i}.{type(layer).__name__.lower()}.{pname}"] = p
        self.param_set = ParamSet(named)
        self._sigma_raw = None

    def init_output_head(self, mu0: float, sigma0: float):
        """Warm-start the head bias so initial predictions sit near the labels.

        With the spec'd small learning rate, starting mu at 0 would spend
        most of the step budget drifting to the label mean; seeding the
        output bias removes that.  Scale bias inverts the softplus head.
        """
        if self._head_bias is None:
            return
        param, mu_sl, sig_sl = self._head_bias
        raw = math.log(math.expm1(max(sigma0 - SIGMA_FLOOR, 1e-3)))
        param.value[mu_sl] = mu0
        param.value[sig_sl] = raw

    def forward_batch(self, x: np.ndarray, remember: bool = True):
        """(N, C, T, H, W) -> (mu, sigma), each (N, H, W)."""
        h = np.ascontiguousarray(x, dtype=np.float64)
        for layer in self.layers:
            h = layer.forward(h, remember=remember)
        mu = h[:, 0]
        sigma_raw = h[:, 1]
        if remember:
            self._sigma_raw = sigma_raw
        return mu, softplus(sigma_raw) + SIGMA_FLOOR

    def backward_batch(self, dmu: np.ndarray, dsigma: np.ndarray):
        grad = np.stack([dmu, dsigma * _sigmoid(self._sigma_raw)], axis=1)
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad


def _build_conv_net(config: ModelConfig, rng: np.random.Generator) -> Network:
    c = config.input_channels
    t = config.input_days
    h, w = config.net_grid
    c1, c2 = config.enc_channels

    h1, w1 = _ceil_div(h, 2), _ceil_div(w, 2)
    h2, w2 = _ceil_div(h1, 2), _ceil_div(w1, 2)
    flat = c2 * t * h2 * w2

    # output_padding recovers the exact pre-stride sizes (odd dims crop cleanly)
    op1 = (h1 - (2 * h2 - 1), w1 - (2 * w2 - 1))
    op0 = (h - (2 * h1 - 1), w - (2 * w1 - 1))
    # time-collapsing transposed conv: stride T with a kernel wide enough
    # that the single output step receives every input day
    kt = t * t - t + 1
    pt = t * t - t

    layers = [
        Conv3d(c, c1, kernel=(3, 3, 3), stride=(1, 2, 2), padding=(1, 1, 1), rng=rng),
        ReLU(),
        Conv3d(c1, c2, kernel=(3, 3, 3), stride=(1, 2, 2), padding=(1, 1, 1), rng=rng),
        ReLU(),
        Flatten(),
        Dense(flat, config.latent, rng=rng),
        ReLU(),
        Dense(config.latent, flat, rng=rng),
        Reshape((c2, t, h2, w2)),
        Deconv3d(
            c2, c1, kernel=(3, 3, 3), stride=(1, 2, 2), padding=(1, 1, 1),
            output_padding=(0,) + op1, rng=rng,
        ),
        ReLU(),
        Deconv3d(
            c1, 8, kernel=(kt, 3, 3), stride=(t, 2, 2), padding=(pt, 1, 1),
            output_padding=(0,) + op0, rng=rng,
        ),
        ReLU(),
        SqueezeTime(),
        Deconv2d(8, 2, kernel=(3, 3), stride=(1, 1), padding=(0, 0), rng=rng),
        Crop2d((h, w), offset=(1, 1)),
    ]
    head = (layers[-2].b, np.s_[0], np.s_[1])
    return Network(layers, config, head_bias=head)


def _build_baseline(config: ModelConfig, rng: np.random.Generator) -> Network:
    h, w = config.net_grid
    flat = config.input_channels * h * w
    layers = [
        TakeLastDay(),
        Flatten(),
        Dense(flat, config.baseline_hidden, rng=rng),
        ReLU(),
        Dense(config.baseline_hidden, 2 * h * w, rng=rng),
        Reshape((2, h, w)),
    ]
    head = (layers[-2].b, np.s_[: h * w], np.s_[h * w :])
    return Network(layers, config, head_bias=head)


def build_network(config: ModelConfig) -> Network:
    """Build the predictor for a config; deterministic under ``config.seed``."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    if config.mode == "baseline_fc":
        net = _build_baseline(config, rng)
    else:
        net = _build_conv_net(config, rng)
    # fail fast on any shape accounting error, with the offending layer visible
    h, w = config.net_grid
    probe = np.zeros((1, config.input_channels, config.input_days, h, w))
    mu, _ = net.forward_batch(probe, remember=False)
    if mu.shape != (1, h, w):
        raise AssertionError(f"network produced {mu.shape[1:]}, expected {(h, w)}")
    return net


def forward(network: Network, sample: WindowSample) -> PredictionGrid:
    """Run one sample through the network."""
    mu, sigma = network.forward_batch(sample.input[None], remember=False)
    return PredictionGrid(mu=mu[0], sigma=sigma[0])


def _batched(n: int, size: int):
    for start in range(0, n, size):
        yield np.arange(start, min(start + size, n))


def train(network: Network, samples, config: ModelConfig | None = None, log_every: int = 0):
    """Mini-batch training with the truncated-Gaussian NLL and Adam.

    Returns the per-epoch loss history (mean NLL per masked pixel).
    Deterministic under the config seed in single-threaded mode.
    """
    config = config or network.config
    usable = [s for s in samples if s.label_mask.any()]
    if not usable:
        raise ValueError("train needs at least one sample with a non-empty mask")
    inputs = np.stack([s.input for s in usable])
    labels = np.stack([s.label for s in usable])
    masks = np.stack([s.label_mask for s in usable])

    ps = network.param_set
    ps.zero_grads()
    rng = np.random.default_rng(config.seed + 0x5EED)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(usable))
        nll_sum = 0.0
        px_sum = 0
        for b, idx in enumerate(_batched(len(usable), config.batch_size)):
            sel = order[idx]
            mu, sigma = network.forward_batch(inputs[sel])
            loss, dmu, dsigma = trunc_gauss_nll(mu, sigma, labels[sel], masks[sel])
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch} batch {b}")
            network.backward_batch(dmu, dsigma)
            adam_step(ps, lr=config.lr)
            npx = int(masks[sel].sum())
            nll_sum += loss * npx
            px_sum += npx
        history.append(nll_sum / px_sum)
        if log_every and (epoch + 1) % log_every == 0:
            print(f"epoch {epoch + 1}/{config.epochs}  nll {history[-1]:.4f}")
    return history


def predict_full_map(network: Network, sample: WindowSample) -> PredictionGrid:
    """Tile a full-grid sample with the network's patches and stitch outputs.

    Overlaps average the locations and combine scales by root mean square;
    the result does not depend on patch enumeration order.
    """
    config = network.config
    if config.patch is None:
        return forward(network, sample)
    ph, pw, stride = config.patch
    big_h, big_w = sample.label.shape
    mu_sum = np.zeros((big_h, big_w))
    var_sum = np.zeros((big_h, big_w))
    count = np.zeros((big_h, big_w))
    for r in patch_corners(big_h, ph, stride):
        for c in patch_corners(big_w, pw, stride):
            piece = sample.input[:, :, r : r + ph, c : c + pw]
            mu, sigma = network.forward_batch(piece[None], remember=False)
            mu_sum[r : r + ph, c : c + pw] += mu[0]
            var_sum[r : r + ph, c : c + pw] += sigma[0] ** 2
            count[r : r + ph, c : c + pw] += 1.0
    assert count.min() >= 1.0
    return PredictionGrid(mu=mu_sum / count, sigma=np.sqrt(var_sum / count))
