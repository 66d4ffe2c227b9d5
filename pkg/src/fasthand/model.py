"""
Encoder-decoder landmark network.

Layout (default channel schedule, 256x256x3 input)::

    stem      3x3/2 conv 3->32                                  256 -> 128
    low       4 residual blocks @32, strided reduction 32->64   128 -> 64
    middle    hourglass @64: down 64->32->16, up 16->32->64 with skips
    high      downsample 64->96, 96->192, 192->192              64 -> 8
    decoder   3 transposed convs 192->96->48->48                8 -> 64
    head      1x1 conv 48->21                                   64x64x21

Residual blocks use a two-layer depthwise-separable branch and an identity
shortcut, or a 1x1 projection shortcut when the block changes channels or
stride. Batch-norm parameters, when present in a weight store, are folded
into the preceding convolution at load time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, WeightFormatError
from .tensor import ConvWeights

INPUT_SIZE = 256
ENCODER_SIZE = 8
HEATMAP_SIZE = 64
NUM_KEYPOINTS = 21
DECODER_STAGES = 3


@dataclass(frozen=True)
class ModelConfig:
    """Channel and depth schedule for the network.

    ``repeats`` gives the residual-block count per stage as
    ``(low, middle, high)``; middle repeats apply to both the hourglass
    down and up blocks.
    """

    stem_channels: int = 32
    low_channels: int = 64
    middle_depth: int = 2
    high_channels: tuple = (96, 192, 192)
    decoder_channels: tuple = (96, 48, 48)
    repeats: tuple = (4, 4, 4)
    kernel_size: int = 3
    deconv_kernel: int = 4
    num_keypoints: int = NUM_KEYPOINTS

    def __post_init__(self):
        object.__setattr__(self, "high_channels", tuple(int(c) for c in self.high_channels))
        object.__setattr__(self, "decoder_channels", tuple(int(c) for c in self.decoder_channels))
        object.__setattr__(self, "repeats", tuple(int(r) for r in self.repeats))
        self.validate()

    def validate(self):
        channels = [self.stem_channels, self.low_channels, *self.high_channels, *self.decoder_channels]
        if any(c < 1 for c in channels):
            raise ConfigError(f"channel counts must be positive: {channels}")
        if len(self.repeats) != 3 or any(r < 0 for r in self.repeats):
            raise ConfigError(f"repeats must be three non-negative counts (low, middle, high), got {self.repeats}")
        if len(self.decoder_channels) != DECODER_STAGES:
            raise ConfigError(f"decoder needs exactly {DECODER_STAGES} transposed-conv stages, got {len(self.decoder_channels)}")
        if self.num_keypoints != NUM_KEYPOINTS:
            raise ConfigError(f"output channels are fixed at {NUM_KEYPOINTS}, got {self.num_keypoints}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        try:
            T.transposed_padding(self.deconv_kernel, 2)
        except ContractError as exc:
            raise ConfigError(str(exc)) from None
        middle_in = INPUT_SIZE // 4
        if self.middle_depth < 0 or middle_in % (2 ** self.middle_depth):
            raise ConfigError(f"hourglass depth {self.middle_depth} does not divide {middle_in}x{middle_in}")
        if self.encoder_size != ENCODER_SIZE:
            raise ConfigError(
                f"{len(self.high_channels)} high stages give a {self.encoder_size}x{self.encoder_size} "
                f"encoder output; need {ENCODER_SIZE}x{ENCODER_SIZE}"
            )
        if self.heatmap_size != HEATMAP_SIZE:
            raise ConfigError(f"decoder output {self.heatmap_size} != {HEATMAP_SIZE}")

    @property
    def encoder_size(self) -> int:
        size = INPUT_SIZE // 4
        for _ in self.high_channels:
            size = -(-size // 2)
        return size

    @property
    def heatmap_size(self) -> int:
        return self.encoder_size * 2 ** len(self.decoder_channels)

    @property
    def encoder_channels(self) -> int:
        return self.high_channels[-1] if self.high_channels else self.low_channels

    @property
    def downsample_count(self) -> int:
        """Net number of resolution halvings between the input and the encoder output."""
        return 2 + len(self.high_channels)


@dataclass(frozen=True)
class ResidualWeights:
    dw1: ConvWeights
    pw1: ConvWeights
    dw2: ConvWeights
    pw2: ConvWeights
    stride: int = 1
    shortcut: ConvWeights | None = None

    @property
    def in_channels(self):
        return self.dw1.in_channels

    @property
    def out_channels(self):
        return self.pw2.out_channels


@dataclass(frozen=True)
class DownsampleWeights:
    blocks: tuple
    reduce: ResidualWeights


@dataclass(frozen=True)
class UpsampleWeights:
    blocks: tuple
    conv: ConvWeights


def residual_block(x, weights: ResidualWeights) -> np.ndarray:
    """relu(shortcut(x) + branch(x)); branch is two separable convs with a relu between."""
    x = T.as_tensor(x)
    if x.shape[2] != weights.in_channels:
        raise ContractError(f"residual block expects {weights.in_channels} channels, got {x.shape[2]}")
    branch = T.depthwise_separable_conv(x, weights.dw1, weights.pw1, weights.stride)
    branch = T.depthwise_separable_conv(T.relu(branch), weights.dw2, weights.pw2)
    if weights.shortcut is not None:
        shortcut = T.conv2d(x, weights.shortcut, stride=weights.stride)
    elif weights.stride != 1 or weights.in_channels != weights.out_channels:
        raise ContractError("identity shortcut cannot change stride or channel count")
    else:
        shortcut = x
    return T.relu(T.add(shortcut, branch))


def downsample_block(x, weights: DownsampleWeights) -> np.ndarray:
    x = T.as_tensor(x)
    h, w, _ = x.shape
    if h % 2 or w % 2:
        raise ContractError(f"downsample block needs even spatial size, got {h}x{w}")
    for block in weights.blocks:
        x = residual_block(x, block)
    return residual_block(x, weights.reduce)


def upsample_block(x, skip, weights: UpsampleWeights) -> np.ndarray:
    """Residual blocks, a convolution, a x2 bilinear resize, then the skip added on."""
    x, skip = T.as_tensor(x), T.as_tensor(skip, "skip")
    h, w, _ = x.shape
    if skip.shape[:2] != (2 * h, 2 * w):
        raise ContractError(f"skip must be {2 * h}x{2 * w}, got {skip.shape[0]}x{skip.shape[1]}")
    if skip.shape[2] != weights.conv.out_channels:
        raise ContractError(f"skip has {skip.shape[2]} channels, block produces {weights.conv.out_channels}")
    for block in weights.blocks:
        x = residual_block(x, block)
    x = T.conv2d(x, weights.conv)
    return T.add(T.resize_bilinear(x, 2 * h, 2 * w), skip)


class _ParamSource:
    """Hands out named ConvWeights, either freshly initialised or bound from a store."""

    def __init__(self, store: Mapping[str, np.ndarray] | None, seed):
        self.store = store
        self.rng = np.random.default_rng(seed) if store is None else None
        self.params: dict[str, np.ndarray] = {}
        self.used: set[str] = set()

    def _fetch(self, key, shape):
        if key not in self.store:
            raise WeightFormatError(f"missing tensor {key!r}")
        arr = np.asarray(self.store[key], dtype=T.DTYPE)
        if arr.shape != tuple(shape):
            raise ConfigError(f"tensor {key!r} has shape {arr.shape}, expected {tuple(shape)}")
        self.used.add(key)
        return arr

    def conv(self, name, kh, kw, cin, cout, depthwise=False) -> ConvWeights:
        shape = (kh, kw, cin) if depthwise else (kh, kw, cin, cout)
        nbias = cin if depthwise else cout
        if self.store is None:
            fan_in = kh * kw * (1 if depthwise else cin)
            bound = 1.0 / math.sqrt(fan_in)
            values = self.rng.uniform(-bound, bound, size=shape).astype(T.DTYPE)
            bias = np.zeros(nbias, dtype=T.DTYPE)
            w = ConvWeights(values, bias, depthwise)
        else:
            w = ConvWeights(self._fetch(f"{name}.weight", shape), self._fetch(f"{name}.bias", (nbias,)), depthwise)
            bn = [f"{name}.bn.{p}" for p in ("gamma", "beta", "mean", "var")]
            if all(k in self.store for k in bn):
                w = T.fold_batchnorm(w, *(np.asarray(self.store[k], np.float64) for k in bn))
                self.used.update(bn)
        for arr in (w.values, w.bias):
            arr.setflags(write=False)
        self.params[f"{name}.weight"] = w.values
        self.params[f"{name}.bias"] = w.bias
        return w

    def residual(self, name, cin, cout, k, stride=1) -> ResidualWeights:
        return ResidualWeights(
            dw1=self.conv(f"{name}.dw1", k, k, cin, cin, depthwise=True),
            pw1=self.conv(f"{name}.pw1", 1, 1, cin, cout),
            dw2=self.conv(f"{name}.dw2", k, k, cout, cout, depthwise=True),
            pw2=self.conv(f"{name}.pw2", 1, 1, cout, cout),
            stride=stride,
            shortcut=self.conv(f"{name}.proj", 1, 1, cin, cout) if (stride != 1 or cin != cout) else None,
        )

    def downsample(self, name, cin, cout, repeats, k) -> DownsampleWeights:
        blocks = tuple(self.residual(f"{name}.res{i}", cin, cin, k) for i in range(repeats))
        return DownsampleWeights(blocks, self.residual(f"{name}.reduce", cin, cout, k, stride=2))

    def upsample(self, name, cin, cout, repeats, k) -> UpsampleWeights:
        blocks = tuple(self.residual(f"{name}.res{i}", cin, cin, k) for i in range(repeats))
        return UpsampleWeights(blocks, self.conv(f"{name}.conv", k, k, cin, cout))


@dataclass(frozen=True, eq=False)
class Model:
    """A bound network: the block structure plus a flat, ordered parameter table."""

    config: ModelConfig
    stem: ConvWeights
    low: DownsampleWeights
    middle_down: tuple
    middle_up: tuple
    high: tuple
    deconvs: tuple
    head: ConvWeights
    params: dict = field(repr=False)

    def param_count(self) -> int:
        return param_count(self)

    def __call__(self, x):
        return forward(self, x)


def build_fasthand(config: ModelConfig | None = None, weights=None, *, seed=0) -> Model:
    """Construct the network from ``config``.

    Args:
        config: channel/depth schedule; defaults to ``ModelConfig()``.
        weights: a mapping of tensor name to array (as returned by
            ``load_weights``) or an integer seed. ``None`` means random
            initialisation from ``seed``.
        seed: RNG seed for fan-in-scaled uniform initialisation.

    Raises:
        ConfigError: the schedule is invalid or a stored tensor has the
            wrong shape for it.
        WeightFormatError: a required tensor is missing from ``weights``.
    """
    config = config or ModelConfig()
    config.validate()
    if isinstance(weights, (int, np.integer)):
        seed, weights = int(weights), None
    src = _ParamSource(weights, seed)
    k = config.kernel_size
    c_low = config.low_channels
    r_low, r_mid, r_high = config.repeats

    stem = src.conv("stem", k, k, 3, config.stem_channels)
    low = src.downsample("low", config.stem_channels, c_low, r_low, k)
    middle_down = tuple(src.downsample(f"middle.down{d}", c_low, c_low, r_mid, k) for d in range(config.middle_depth))
    middle_up = tuple(src.upsample(f"middle.up{d}", c_low, c_low, r_mid, k) for d in range(config.middle_depth))
    high, cin = [], c_low
    for s, cout in enumerate(config.high_channels):
        high.append(src.downsample(f"high{s}", cin, cout, r_high, k))
        cin = cout
    deconvs = []
    for j, cout in enumerate(config.decoder_channels):
        deconvs.append(src.conv(f"decoder.deconv{j}", config.deconv_kernel, config.deconv_kernel, cin, cout))
        cin = cout
    head = src.conv("head", 1, 1, cin, config.num_keypoints)

    if weights is not None:
        unused = sorted(set(weights) - src.used)
        if unused:
            raise ConfigError(f"weight store has tensors the config does not use: {unused[:5]}")
    return Model(config, stem, low, middle_down, middle_up, tuple(high), tuple(deconvs), head, src.params)


def forward(model: Model, x, taps=False):
    """Run the network on one 256x256x3 ROI.

    Returns the 64x64x21 heatmap stack, or with ``taps=True`` a dict of
    intermediate feature maps (``stem``, ``low``, ``middle``, ``encoder``,
    ``heatmaps``).
    """
    x = T.as_tensor(x)
    if x.shape != (INPUT_SIZE, INPUT_SIZE, 3):
        raise ContractError(f"input must be {INPUT_SIZE}x{INPUT_SIZE}x3, got {x.shape}")
    out = {}
    x = T.relu(T.conv2d(x, model.stem, stride=2))
    out["stem"] = x
    x = downsample_block(x, model.low)
    out["low"] = x
    skips = []
    for block in model.middle_down:
        skips.append(x)
        x = downsample_block(x, block)
    for block in model.middle_up:
        x = upsample_block(x, skips.pop(), block)
    out["middle"] = x
    for block in model.high:
        x = downsample_block(x, block)
    out["encoder"] = x
    for deconv in model.deconvs:
        x = T.relu(T.transposed_conv2d(x, deconv, stride=2))
    x = T.pointwise_conv(x, model.head)
    out["heatmaps"] = x
    return out if taps else x


def param_count(model: Model) -> int:
    return int(sum(v.size for v in model.params.values()))


def config_from_weights(store: Mapping[str, np.ndarray]) -> ModelConfig:
    """Recover the schedule that produced a weight store from its tensor names and shapes."""

    def shape(key):
        if key not in store:
            raise WeightFormatError(f"missing tensor {key!r}")
        return np.shape(store[key])

    def count(prefix):
        n = 0
        while f"{prefix}{n}.dw1.weight" in store:
            n += 1
        return n

    def count_stages(prefix):
        n = 0
        while f"{prefix}{n}.reduce.pw2.weight" in store:
            n += 1
        return n

    stem = shape("stem.weight")
    depth = count_stages("middle.down")
    n_high = count_stages("high")
    n_dec = 0
    while f"decoder.deconv{n_dec}.weight" in store:
        n_dec += 1
    return ModelConfig(
        stem_channels=stem[3],
        low_channels=shape("low.reduce.pw2.weight")[3],
        middle_depth=depth,
        high_channels=tuple(shape(f"high{s}.reduce.pw2.weight")[3] for s in range(n_high)),
        decoder_channels=tuple(shape(f"decoder.deconv{j}.weight")[3] for j in range(n_dec)),
        repeats=(
            count("low.res"),
            count("middle.down0.res") if depth else 0,
            count("high0.res") if n_high else 0,
        ),
        kernel_size=stem[0],
        deconv_kernel=shape("decoder.deconv0.weight")[0] if n_dec else 4,
        num_keypoints=shape("head.weight")[3],
    )


PRESETS = {
    "default": ModelConfig(),
    # narrower channels, shallower hourglass
    "slim": ModelConfig(stem_channels=16, low_channels=32, middle_depth=1,
                        high_channels=(48, 96, 96), decoder_channels=(48, 32, 32), repeats=(2, 2, 2)),
    # deeper hourglass, wider decoder
    "deep": ModelConfig(stem_channels=24, low_channels=48, middle_depth=3,
                        high_channels=(64, 128, 256), decoder_channels=(128, 64, 32), repeats=(3, 2, 4)),
}
