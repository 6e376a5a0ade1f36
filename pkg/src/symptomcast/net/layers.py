"""Layer primitives: 3D convolution, 3D/2D transposed convolution, dense,
activations, and shape plumbing, each with an exact hand-written backward.

All tensors are float64 ndarrays with a leading batch axis.  Convolutions
use the cross-correlation convention (no kernel flip).  The transposed
convolutions are built from the same gather/scatter pair as the forward
convolution, which makes them exact adjoints: for shared kernels,
<conv(x), y> == <x, deconv(y)> up to float rounding.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

CHECK_FINITE = False


@contextlib.contextmanager
def finite_checks():
    """Enable NaN/Inf checks after every layer op (test mode)."""
    global CHECK_FINITE
    CHECK_FINITE = True
    try:
        yield
    finally:
        CHECK_FINITE = False


def _check(a: np.ndarray) -> np.ndarray:
    if CHECK_FINITE and not np.all(np.isfinite(a)):
        raise FloatingPointError("non-finite values in layer output")
    return a


def conv_out_dim(n: int, k: int, s: int, p: int) -> int:
    return (n + 2 * p - k) // s + 1


def deconv_out_dim(n: int, k: int, s: int, p: int, op: int) -> int:
    return (n - 1) * s - 2 * p + k + op


class Param:
    """A learnable tensor with its gradient accumulator."""

    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)


class Layer:
    """Forward/backward pair; ``remember=True`` caches what backward needs."""

    def params(self) -> dict[str, Param]:
        return {}

    def forward(self, x: np.ndarray, remember: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _init_weight(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = math.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------------------
# gather/scatter core shared by conv and transposed conv


def _gather(xp: np.ndarray, kernel, stride):
    """Columns of sliding blocks: (N, C*kt*kh*kw, L) from padded (N, C, D, H, W)."""
    kt, kh, kw = kernel
    st, sh, sw = stride
    v = sliding_window_view(xp, (kt, kh, kw), axis=(2, 3, 4))[:, :, ::st, ::sh, ::sw]
    n, c, to, ho, wo = v.shape[:5]
    cols = np.ascontiguousarray(v.transpose(0, 1, 5, 6, 7, 2, 3, 4))
    return cols.reshape(n, c * kt * kh * kw, to * ho * wo), (to, ho, wo)


def _scatter(cols: np.ndarray, c: int, full_dims, kernel, stride, pos_dims) -> np.ndarray:
    """Adjoint of :func:`_gather`: accumulate columns back into a full volume."""
    kt, kh, kw = kernel
    st, sh, sw = stride
    to, ho, wo = pos_dims
    n = cols.shape[0]
    v = cols.reshape(n, c, kt, kh, kw, to, ho, wo)
    out = np.zeros((n, c) + tuple(full_dims))
    for i in range(kt):
        for j in range(kh):
            for m in range(kw):
                out[:, :, i : i + st * to : st, j : j + sh * ho : sh, m : m + sw * wo : sw] += v[
                    :, :, i, j, m
                ]
    return out


def _pad5(x: np.ndarray, padding) -> np.ndarray:
    pt, ph, pw = padding
    if pt == ph == pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))


class Conv3d(Layer):
    """Strided 3D cross-correlation with per-output-channel bias.

    Input (N, C_in, T, H, W); kernels (C_out, C_in, kt, kh, kw); output dim
    per axis is floor((in + 2p - k) / s) + 1.
    """

    def __init__(self, c_in, c_out, kernel=(3, 3, 3), stride=(1, 1, 1), padding=(0, 0, 0), rng=None):
        self.c_in, self.c_out = c_in, c_out
        self.kernel, self.stride, self.padding = tuple(kernel), tuple(stride), tuple(padding)
        rng = rng or np.random.default_rng(0)
        fan_in = c_in * math.prod(kernel)
        self.w = Param(_init_weight(rng, (c_out, c_in) + self.kernel, fan_in))
        self.b = Param(np.zeros(c_out))
        self._cache = None

    def params(self):
        return {"weight": self.w, "bias": self.b}

    def forward(self, x, remember=True):
        if x.ndim != 5 or x.shape[1] != self.c_in:
            raise ValueError(f"conv3d expects (N, {self.c_in}, T, H, W), got {x.shape}")
        xp = _pad5(x, self.padding)
        if any(k > d for k, d in zip(self.kernel, xp.shape[2:])):
            raise ValueError(f"kernel {self.kernel} exceeds padded input {xp.shape[2:]}")
        cols, pos = _gather(xp, self.kernel, self.stride)
        w2 = self.w.value.reshape(self.c_out, -1)
        out = np.matmul(w2, cols) + self.b.value[None, :, None]
        if remember:
            self._cache = (cols, x.shape, xp.shape, pos)
        return _check(out.reshape(x.shape[0], self.c_out, *pos))

    def backward(self, grad):
        cols, x_shape, xp_shape, pos = self._cache
        n = grad.shape[0]
        g2 = grad.reshape(n, self.c_out, -1)
        self.w.grad += np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(self.w.value.shape)
        self.b.grad += g2.sum(axis=(0, 2))
        w2 = self.w.value.reshape(self.c_out, -1)
        dxp = _scatter(np.matmul(w2.T, g2), self.c_in, xp_shape[2:], self.kernel, self.stride, pos)
        pt, ph, pw = self.padding
        t, h, w = x_shape[2:]
        return _check(dxp[:, :, pt : pt + t, ph : ph + h, pw : pw + w])


class Deconv3d(Layer):
    """3D transposed convolution (upsampling adjoint of :class:`Conv3d`).

    Kernels are (C_in, C_out, kt, kh, kw); output dim per axis is
    (in - 1) * s - 2p + k + output_padding, with output_padding < stride.
    """

    def __init__(
        self,
        c_in,
        c_out,
        kernel=(3, 3, 3),
        stride=(1, 1, 1),
        padding=(0, 0, 0),
        output_padding=(0, 0, 0),
        rng=None,
    ):
        self.c_in, self.c_out = c_in, c_out
        self.kernel, self.stride = tuple(kernel), tuple(stride)
        self.padding, self.output_padding = tuple(padding), tuple(output_padding)
        for op, s in zip(self.output_padding, self.stride):
            if op < 0 or op >= max(s, 1):
                raise ValueError(f"output_padding {output_padding} must be < stride {stride}")
        rng = rng or np.random.default_rng(0)
        fan_in = c_in * math.prod(kernel)
        self.w = Param(_init_weight(rng, (c_in, c_out) + self.kernel, fan_in))
        self.b = Param(np.zeros(c_out))
        self._cache = None

    def params(self):
        return {"weight": self.w, "bias": self.b}

    def _geometry(self, in_dims):
        full = [
            (n - 1) * s + k + op
            for n, s, k, op in zip(in_dims, self.stride, self.kernel, self.output_padding)
        ]
        out = [
            deconv_out_dim(n, k, s, p, op)
            for n, k, s, p, op in zip(in_dims, self.kernel, self.stride, self.padding, self.output_padding)
        ]
        if any(o < 1 for o in out):
            raise ValueError(f"deconv output {out} collapsed; input {in_dims}, kernel {self.kernel}")
        return tuple(full), tuple(out)

    def forward(self, x, remember=True):
        if x.ndim != 5 or x.shape[1] != self.c_in:
            raise ValueError(f"deconv3d expects (N, {self.c_in}, T, H, W), got {x.shape}")
        n = x.shape[0]
        in_dims = x.shape[2:]
        full, out = self._geometry(in_dims)
        x2 = x.reshape(n, self.c_in, -1)
        w2 = self.w.value.reshape(self.c_in, -1)  # (C_in, C_out*k^3)
        cols = np.matmul(w2.T, x2)  # (N, C_out*k^3, L)
        buf = _scatter(cols, self.c_out, full, self.kernel, self.stride, in_dims)
        pt, ph, pw = self.padding
        ot, oh, ow = out
        y = buf[:, :, pt : pt + ot, ph : ph + oh, pw : pw + ow] + self.b.value[None, :, None, None, None]
        if remember:
            self._cache = (x2, in_dims, full, out)
        return _check(y)

    def backward(self, grad):
        x2, in_dims, full, out = self._cache
        n = grad.shape[0]
        pt, ph, pw = self.padding
        g_full = np.zeros((n, self.c_out) + full)
        g_full[:, :, pt : pt + out[0], ph : ph + out[1], pw : pw + out[2]] = grad
        gcols, pos = _gather(g_full, self.kernel, self.stride)
        assert pos == tuple(in_dims)
        w2 = self.w.value.reshape(self.c_in, -1)
        dx = np.matmul(w2, gcols).reshape(n, self.c_in, *in_dims)
        self.w.grad += np.matmul(x2, gcols.transpose(0, 2, 1)).sum(axis=0).reshape(self.w.value.shape)
        self.b.grad += grad.sum(axis=(0, 2, 3, 4))
        return _check(dx)


class Deconv2d(Layer):
    """2D transposed convolution, implemented on the 3D core with a unit time axis."""

    def __init__(self, c_in, c_out, kernel=(3, 3), stride=(1, 1), padding=(0, 0), output_padding=(0, 0), rng=None):
        self._core = Deconv3d(
            c_in,
            c_out,
            kernel=(1,) + tuple(kernel),
            stride=(1,) + tuple(stride),
            padding=(0,) + tuple(padding),
            output_padding=(0,) + tuple(output_padding),
            rng=rng,
        )

    @property
    def w(self):
        return self._core.w

    @property
    def b(self):
        return self._core.b

    def params(self):
        return self._core.params()

    def forward(self, x, remember=True):
        if x.ndim != 4:
            raise ValueError(f"deconv2d expects (N, C, H, W), got {x.shape}")
        return self._core.forward(x[:, :, None], remember=remember)[:, :, 0]

    def backward(self, grad):
        return self._core.backward(grad[:, :, None])[:, :, 0]


class Dense(Layer):
    """Affine map on flat features: y = x @ W.T + b."""

    def __init__(self, n_in, n_out, rng=None):
        self.n_in, self.n_out = n_in, n_out
        rng = rng or np.random.default_rng(0)
        self.w = Param(_init_weight(rng, (n_out, n_in), n_in))
        self.b = Param(np.zeros(n_out))
        self._x = None

    def params(self):
        return {"weight": self.w, "bias": self.b}

    def forward(self, x, remember=True):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"dense expects (N, {self.n_in}), got {x.shape}")
        if remember:
            self._x = x
        return _check(x @ self.w.value.T + self.b.value)

    def backward(self, grad):
        self.w.grad += grad.T @ self._x
        self.b.grad += grad.sum(axis=0)
        return _check(grad @ self.w.value)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x), overflow-safe: for large x returns x + log1p(e^-x)."""
    out = np.where(x > 30.0, x + np.log1p(np.exp(-np.clip(x, 30.0, None))), np.log1p(np.exp(np.clip(x, None, 30.0))))
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x, remember=True):
        if remember:
            self._mask = x > 0
        return _check(relu(x))

    def backward(self, grad):
        return grad * self._mask


class Softplus(Layer):
    def __init__(self):
        self._x = None

    def forward(self, x, remember=True):
        if remember:
            self._x = x
        return _check(softplus(x))

    def backward(self, grad):
        return grad * _sigmoid(self._x)


class Flatten(Layer):
    def __init__(self):
        self._shape = None

    def forward(self, x, remember=True):
        if remember:
            self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Reshape(Layer):
    """Reshape the per-sample tail to a fixed shape."""

    def __init__(self, shape):
        self.shape = tuple(shape)
        self._in = None

    def forward(self, x, remember=True):
        if remember:
            self._in = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, grad):
        return grad.reshape(self._in)


class SqueezeTime(Layer):
    """(N, C, 1, H, W) -> (N, C, H, W)."""

    def forward(self, x, remember=True):
        if x.shape[2] != 1:
            raise ValueError(f"cannot squeeze time axis of length {x.shape[2]}")
        return x[:, :, 0]

    def backward(self, grad):
        return grad[:, :, None]


class TakeLastDay(Layer):
    """(N, C, T, H, W) -> (N, C, H, W) keeping only the most recent day."""

    def __init__(self):
        self._t = None

    def forward(self, x, remember=True):
        if remember:
            self._t = x.shape[2]
        return x[:, :, -1]

    def backward(self, grad):
        out = np.zeros(grad.shape[:2] + (self._t,) + grad.shape[2:])
        out[:, :, -1] = grad
        return out


class Crop2d(Layer):
    """Center-style crop of (N, C, H, W) to a target (H, W) from a fixed offset."""

    def __init__(self, target, offset=(0, 0)):
        self.target = tuple(target)
        self.offset = tuple(offset)
        self._in = None

    def forward(self, x, remember=True):
        r, c = self.offset
        h, w = self.target
        if r + h > x.shape[2] or c + w > x.shape[3]:
            raise ValueError(f"crop {self.target}@{self.offset} exceeds input {x.shape}")
        if remember:
            self._in = x.shape
        return x[:, :, r : r + h, c : c + w]

    def backward(self, grad):
        out = np.zeros(self._in)
        r, c = self.offset
        h, w = self.target
        out[:, :, r : r + h, c : c + w] = grad
        return out
