"""
Dense feature-map kernels.

A tensor here is a float32 ``numpy.ndarray`` of shape ``(height, width,
channels)``: row-major with channels innermost, so a pixel's channel vector
is contiguous. Every kernel is a pure function of its inputs and returns a
fresh float32 array.

Convolution weights are stored as ``(kh, kw, in_channels, out_channels)``
for dense and transposed kernels and ``(kh, kw, channels)`` for depthwise
kernels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

DTYPE = np.float32


def as_tensor(x, name="input") -> np.ndarray:
    """Validate ``x`` as an HWC tensor and return it as float32."""
    arr = np.asarray(x, dtype=DTYPE)
    if arr.ndim != 3:
        raise ContractError(f"{name}: expected rank-3 (H, W, C) tensor, got shape {arr.shape}")
    if min(arr.shape) == 0:
        raise ContractError(f"{name}: zero-size tensor {arr.shape}")
    return arr


def zeros(height, width, channels) -> np.ndarray:
    return np.zeros((height, width, channels), dtype=DTYPE)


@dataclass(frozen=True, eq=False)
class ConvWeights:
    """Kernel values plus per-output-channel bias.

    Args:
        values: ``(kh, kw, cin, cout)`` for dense kernels, ``(kh, kw, c)``
            when ``depthwise`` is set.
        bias: ``(cout,)``.
        depthwise: whether each channel is filtered independently.
    """

    values: np.ndarray
    bias: np.ndarray
    depthwise: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=DTYPE)
        bias = np.asarray(self.bias, dtype=DTYPE)
        want_rank = 3 if self.depthwise else 4
        if values.ndim != want_rank:
            raise ContractError(
                f"{'depthwise' if self.depthwise else 'dense'} kernel must be rank {want_rank}, "
                f"got shape {values.shape}"
            )
        if min(values.shape) == 0:
            raise ContractError(f"zero-size kernel {values.shape}")
        if bias.shape != (values.shape[-1],):
            raise ContractError(f"bias shape {bias.shape} does not match {values.shape[-1]} output channels")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "bias", bias)

    @classmethod
    def dense(cls, values, bias=None):
        values = np.asarray(values, dtype=DTYPE)
        if bias is None:
            bias = np.zeros(values.shape[-1], dtype=DTYPE)
        return cls(values, bias)

    @classmethod
    def depthwise_kernel(cls, values, bias=None):
        values = np.asarray(values, dtype=DTYPE)
        if bias is None:
            bias = np.zeros(values.shape[-1], dtype=DTYPE)
        return cls(values, bias, depthwise=True)

    @property
    def kernel_h(self) -> int:
        return self.values.shape[0]

    @property
    def kernel_w(self) -> int:
        return self.values.shape[1]

    @property
    def in_channels(self) -> int:
        return self.values.shape[2]

    @property
    def out_channels(self) -> int:
        return self.values.shape[-1]

    @property
    def size(self) -> int:
        return self.values.size + self.bias.size


def _check_stride(stride):
    if stride not in (1, 2):
        raise ContractError(f"stride must be 1 or 2, got {stride}")


def _check_channels(x, w: ConvWeights, op):
    if x.shape[2] != w.in_channels:
        raise ContractError(f"{op}: input has {x.shape[2]} channels, kernel expects {w.in_channels}")


def output_size(size, kernel, stride, padding="same") -> int:
    """Spatial output length of a strided convolution along one axis."""
    if padding == "same":
        return -(-size // stride)
    if padding == "valid":
        return (size - kernel) // stride + 1
    raise ContractError(f"padding must be 'same' or 'valid', got {padding!r}")


def same_padding(size, kernel, stride):
    """(before, after) zero padding for 'same' mode; the odd pixel goes after."""
    out = output_size(size, kernel, stride, "same")
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def _pad_input(x, kh, kw, stride, padding):
    h, w, _ = x.shape
    if padding == "valid":
        if h < kh or w < kw:
            raise ContractError(f"valid convolution: input {h}x{w} smaller than kernel {kh}x{kw}")
        return x, output_size(h, kh, stride, "valid"), output_size(w, kw, stride, "valid")
    if padding != "same":
        raise ContractError(f"padding must be 'same' or 'valid', got {padding!r}")
    pt, pb = same_padding(h, kh, stride)
    pl, pr = same_padding(w, kw, stride)
    if pt or pb or pl or pr:
        x = np.pad(x, ((pt, pb), (pl, pr), (0, 0)))
    return x, output_size(h, kh, stride), output_size(w, kw, stride)


def conv2d(x, w: ConvWeights, stride=1, padding="same") -> np.ndarray:
    """Dense 2-D convolution (cross-correlation) plus bias."""
    x = as_tensor(x)
    if w.depthwise:
        raise ContractError("conv2d requires a dense kernel; use depthwise_conv2d")
    _check_stride(stride)
    _check_channels(x, w, "conv2d")
    kh, kw = w.kernel_h, w.kernel_w
    if kh == kw == 1 and stride == 1:
        return pointwise_conv(x, w)
    xp, oh, ow = _pad_input(x, kh, kw, stride, padding)
    out = np.zeros((oh * ow, w.out_channels), dtype=DTYPE)
    cin = x.shape[2]
    # implicit GEMM: one (pixels x cin) @ (cin x cout) product per kernel tap
    for ky in range(kh):
        for kx in range(kw):
            patch = xp[ky : ky + stride * (oh - 1) + 1 : stride, kx : kx + stride * (ow - 1) + 1 : stride]
            out += patch.reshape(oh * ow, cin) @ w.values[ky, kx]
    out += w.bias
    return out.reshape(oh, ow, w.out_channels)


def depthwise_conv2d(x, w: ConvWeights, stride=1, padding="same") -> np.ndarray:
    """Per-channel spatial filtering; channel count is preserved."""
    x = as_tensor(x)
    if not w.depthwise:
        raise ContractError("depthwise_conv2d requires a depthwise kernel")
    _check_stride(stride)
    _check_channels(x, w, "depthwise_conv2d")
    kh, kw = w.kernel_h, w.kernel_w
    xp, oh, ow = _pad_input(x, kh, kw, stride, padding)
    out = np.zeros((oh, ow, x.shape[2]), dtype=DTYPE)
    for ky in range(kh):
        for kx in range(kw):
            out += xp[ky : ky + stride * (oh - 1) + 1 : stride, kx : kx + stride * (ow - 1) + 1 : stride] * w.values[ky, kx]
    out += w.bias
    return out


def pointwise_conv(x, w: ConvWeights) -> np.ndarray:
    """1x1 convolution: a per-pixel linear map across channels."""
    x = as_tensor(x)
    if w.depthwise or w.kernel_h != 1 or w.kernel_w != 1:
        raise ContractError(f"pointwise_conv requires a dense 1x1 kernel, got {w.values.shape}")
    _check_channels(x, w, "pointwise_conv")
    h, wd, c = x.shape
    out = x.reshape(h * wd, c) @ w.values[0, 0]
    out += w.bias
    return out.reshape(h, wd, w.out_channels)


def depthwise_separable_conv(x, dw: ConvWeights, pw: ConvWeights, stride=1) -> np.ndarray:
    """Depthwise filtering followed by 1x1 pointwise mixing, no activation in between."""
    if not dw.depthwise:
        raise ContractError("first kernel of a separable conv must be depthwise")
    if pw.in_channels != dw.in_channels:
        raise ContractError(f"pointwise expects {pw.in_channels} channels, depthwise yields {dw.in_channels}")
    return pointwise_conv(depthwise_conv2d(x, dw, stride), pw)


def transposed_padding(kernel, stride):
    """Padding that makes a transposed conv scale spatial size by exactly ``stride``."""
    if kernel < stride or (kernel - stride) % 2:
        raise ContractError(f"kernel {kernel} cannot upsample exactly x{stride}")
    return (kernel - stride) // 2


def transposed_conv2d(x, w: ConvWeights, stride=2) -> np.ndarray:
    """Learnable upsampling by scatter-accumulation.

    Every input pixel adds ``x[i, j] @ w[ky, kx]`` into the output at
    ``(i*stride + ky, j*stride + kx)``; the full result is then cropped by
    ``(k - stride) / 2`` on each side so that the output is exactly
    ``stride`` times the input (4x4 kernel: crop 1, 2x2 kernel: crop 0).
    """
    x = as_tensor(x)
    if w.depthwise:
        raise ContractError("transposed_conv2d requires a dense kernel")
    _check_channels(x, w, "transposed_conv2d")
    if stride < 1:
        raise ContractError(f"stride must be positive, got {stride}")
    kh, kw = w.kernel_h, w.kernel_w
    ph, pw_ = transposed_padding(kh, stride), transposed_padding(kw, stride)
    h, wd, cin = x.shape
    full = np.zeros(((h - 1) * stride + kh, (wd - 1) * stride + kw, w.out_channels), dtype=DTYPE)
    flat = x.reshape(h * wd, cin)
    for ky in range(kh):
        for kx in range(kw):
            contrib = (flat @ w.values[ky, kx]).reshape(h, wd, -1)
            full[ky : ky + stride * (h - 1) + 1 : stride, kx : kx + stride * (wd - 1) + 1 : stride] += contrib
    out = full[ph : ph + h * stride, pw_ : pw_ + wd * stride]
    return out + w.bias


def _axis_taps(coords, size):
    """Clamp sample coordinates to ``[0, size-1]`` and return (i0, i1, frac)."""
    c = np.clip(np.asarray(coords, dtype=np.float64), 0.0, size - 1)
    i0 = np.floor(c).astype(np.intp)
    i1 = np.minimum(i0 + 1, size - 1)
    return i0, i1, (c - i0).astype(DTYPE)


def sample_separable(x, ys, xs) -> np.ndarray:
    """Bilinear sampling on an axis-aligned grid with edge clamping.

    Output pixel ``(r, c)`` takes the value of ``x`` at continuous position
    ``(ys[r], xs[c])``, where integer coordinates are pixel centres.
    Coordinates outside the image repeat the border pixel.
    """
    x = as_tensor(x)
    h, w, _ = x.shape
    y0, y1, fy = _axis_taps(ys, h)
    x0, x1, fx = _axis_taps(xs, w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top, bottom = x[y0], x[y1]
    rows = top + (bottom - top) * fy
    left, right = rows[:, x0], rows[:, x1]
    return (left + (right - left) * fx).astype(DTYPE, copy=False)


def resize_bilinear(x, out_h, out_w) -> np.ndarray:
    """Bilinear resize with half-pixel-centre sampling.

    Output pixel ``j`` samples source position ``(j + 0.5) * in / out - 0.5``,
    clamped to the image.
    """
    x = as_tensor(x)
    if out_h < 1 or out_w < 1:
        raise ContractError(f"output size must be positive, got {out_h}x{out_w}")
    h, w, _ = x.shape
    if (h, w) == (out_h, out_w):
        return x.copy()
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    return sample_separable(x, ys, xs)


def relu(x) -> np.ndarray:
    return np.maximum(as_tensor(x), DTYPE(0))


def add(a, b) -> np.ndarray:
    """Elementwise sum; shapes must match exactly (no broadcasting)."""
    a, b = as_tensor(a, "a"), as_tensor(b, "b")
    if a.shape != b.shape:
        raise ContractError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return a + b


def fold_batchnorm(w: ConvWeights, gamma, beta, mean, var, eps=1e-3) -> ConvWeights:
    """Fold an inference-mode batch-norm that follows ``w`` into its weights."""
    scale = np.asarray(gamma, np.float64) / np.sqrt(np.asarray(var, np.float64) + eps)
    values = w.values.astype(np.float64) * scale
    bias = (w.bias.astype(np.float64) - mean) * scale + beta
    return ConvWeights(values.astype(DTYPE), bias.astype(DTYPE), depthwise=w.depthwise)

