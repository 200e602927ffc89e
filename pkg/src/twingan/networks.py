"""Generator and critic architectures.

Both networks are stacks of 4x4, pad-1 convolutions. The generator is a
U-shaped encoder/decoder with mirrored skip connections; noise enters
purely as dropout inside the decoder (no explicit noise input), active at
both training and inference time when enabled. The critic scores overlapping
patches with a small receptive field and reduces its response map to a
single scalar by averaging, so it judges local texture rather than whole
images.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import Tensor
from .errors import ConfigError, ShapeError, UsageError
from .layers import ParamStore
from .rng import RngStream

KERNEL = 4
PAD = 1
LEAK = 0.2
# generator widths cap out at base_width * CHANNEL_CAP in the deep layers
CHANNEL_CAP = 8
# tolerance when validating that inputs sit inside [-1, 1]
RANGE_TOL = 1e-4


@dataclass(frozen=True)
class LayerSpec:
    """One conv block: geometry plus which extras it carries."""

    name: str
    kind: str  # "down" | "up" | "patch"
    in_ch: int
    out_ch: int
    stride: int
    normalize: bool
    dropout_rate: float
    activation: str | None  # "lrelu" | "relu" | "tanh" | None


def receptive_field(layers: list[tuple[int, int]]) -> int:
    """Receptive field of one output unit of a conv stack.

    layers is a list of (kernel, stride) from first to last layer; the
    field grows by (kernel - 1) * jump per layer, where jump is the
    product of the strides seen so far.
    """
    rf = 1
    jump = 1
    for k, s in layers:
        rf += (k - 1) * jump
        jump *= s
    return rf


def _check_image_input(x: Tensor, channels: int, image_size: int, what: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{what} expects an NCHW tensor, got shape {x.shape}")
    if x.shape[1] != channels:
        raise ShapeError(f"{what} expects {channels} channels, got {x.shape[1]}")
    if x.shape[2] != image_size or x.shape[3] != image_size:
        raise ShapeError(
            f"{what} expects {image_size}x{image_size} input, got {x.shape[2]}x{x.shape[3]}"
        )
    peak = float(np.max(np.abs(x.data))) if x.size else 0.0
    if peak > 1.0 + RANGE_TOL:
        raise UsageError(f"{what} input must lie in [-1, 1], max abs value is {peak:.4g}")


class UNetGenerator:
    """U-shaped translator with skip connections and decoder dropout.

    The encoder halves resolution `depth` times; the decoder mirrors it,
    concatenating each upsampled feature with the encoder feature of the
    same resolution. Dropout (the only noise source) sits in the first
    half of the decoder blocks. Output passes through tanh, so it lands
    in [-1, 1] by construction.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        image_size: int,
        depth: int,
        base_width: int,
        dropout_rate: float = 0.5,
        dtype=np.float32,
    ):
        if depth < 2:
            raise ConfigError("gen_depth", f"must be at least 2, got {depth}")
        if image_size % (1 << depth) != 0 or image_size < (1 << depth):
            raise ConfigError(
                "image_size",
                f"{image_size} is not divisible by 2^depth = {1 << depth}",
            )
        if not (0.0 <= dropout_rate < 1.0):
            raise ConfigError("dropout_rate", f"must lie in [0, 1), got {dropout_rate}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.image_size = image_size
        self.depth = depth
        self.dtype = np.dtype(dtype)
        self.params = ParamStore()

        widths = [base_width * min(1 << i, CHANNEL_CAP) for i in range(depth)]
        n_dropout = depth // 2  # innermost decoder blocks carry the noise

        self.enc_specs: list[LayerSpec] = []
        for i in range(depth):
            in_ch = in_channels if i == 0 else widths[i - 1]
            # first layer sees raw pixels, bottleneck can reach 1x1: no norm
            normed = 0 < i < depth - 1
            self.enc_specs.append(
                LayerSpec(f"enc{i}", "down", in_ch, widths[i], 2, normed, 0.0, "lrelu")
            )

        self.dec_specs: list[LayerSpec] = []
        for j in range(depth - 1):
            src = depth - 1 - j  # resolution level being upsampled from
            in_ch = widths[depth - 1] if j == 0 else 2 * widths[src]
            rate = dropout_rate if j < n_dropout else 0.0
            self.dec_specs.append(
                LayerSpec(f"dec{j}", "up", in_ch, widths[src - 1], 2, True, rate, "relu")
            )
        self.final_spec = LayerSpec(
            "final", "up", 2 * widths[0], out_channels, 2, False, 0.0, "tanh"
        )

        for spec in self.enc_specs:
            self.params.add(f"{spec.name}.weight", (spec.out_ch, spec.in_ch, KERNEL, KERNEL), dtype)
            self.params.add(f"{spec.name}.bias", (spec.out_ch,), dtype)
            if spec.normalize:
                self.params.add(f"{spec.name}.norm.scale", (spec.out_ch,), dtype)
                self.params.add(f"{spec.name}.norm.shift", (spec.out_ch,), dtype)
        for spec in self.dec_specs + [self.final_spec]:
            # transposed kernels store [in_ch, out_ch, kh, kw]
            self.params.add(f"{spec.name}.weight", (spec.in_ch, spec.out_ch, KERNEL, KERNEL), dtype)
            self.params.add(f"{spec.name}.bias", (spec.out_ch,), dtype)
            if spec.normalize:
                self.params.add(f"{spec.name}.norm.scale", (spec.out_ch,), dtype)
                self.params.add(f"{spec.name}.norm.shift", (spec.out_ch,), dtype)

    def forward(self, x: Tensor, rng: RngStream | None, noise_enabled: bool = True) -> Tensor:
        """Translate a batch of images.

        Args:
            x: [b, in_channels, image_size, image_size] tensor in [-1, 1].
            rng: stream feeding the dropout masks; fresh values are drawn
                on every invocation. May be None only when noise is off.
            noise_enabled: disable to make the forward pass a deterministic
                function of x and the parameters.
        """
        _check_image_input(x, self.in_channels, self.image_size, "generator")
        if x.dtype != self.dtype:
            raise ShapeError(f"generator is {self.dtype}, input is {x.dtype}")
        if noise_enabled and rng is None and any(s.dropout_rate > 0 for s in self.dec_specs):
            raise UsageError("noise_enabled=True needs an RngStream")

        p = self.params
        skips: list[Tensor] = []
        h = x
        for spec in self.enc_specs:
            h = engine.conv2d(h, p[f"{spec.name}.weight"], stride=2, pad=PAD)
            h = engine.add_channel_bias(h, p[f"{spec.name}.bias"])
            if spec.normalize:
                h = engine.channel_norm(h, p[f"{spec.name}.norm.scale"], p[f"{spec.name}.norm.shift"])
            h = engine.leaky_relu(h, LEAK)
            skips.append(h)

        h = skips[-1]
        for j, spec in enumerate(self.dec_specs):
            h = engine.conv2d_transpose(h, p[f"{spec.name}.weight"], stride=2, pad=PAD)
            h = engine.add_channel_bias(h, p[f"{spec.name}.bias"])
            h = engine.channel_norm(h, p[f"{spec.name}.norm.scale"], p[f"{spec.name}.norm.shift"])
            if spec.dropout_rate > 0:
                h = engine.dropout(h, spec.dropout_rate, rng, enabled=noise_enabled)
            h = engine.relu(h)
            h = engine.concat_channels(h, skips[self.depth - 2 - j])

        h = engine.conv2d_transpose(h, p["final.weight"], stride=2, pad=PAD)
        h = engine.add_channel_bias(h, p["final.bias"])
        return engine.tanh(h)


class PatchCritic:
    """Convolutional critic scoring local patches.

    features lists (width, stride) for the hidden layers; a final 1-channel
    stride-1 conv produces the response map. Scores are unbounded (no
    squashing anywhere) and the scalar score is the mean over the whole
    response map and batch.
    """

    def __init__(
        self,
        in_channels: int,
        features: list[tuple[int, int]],
        dtype=np.float32,
    ):
        if not features:
            raise ConfigError("disc_features", "needs at least one (width, stride) layer")
        for w, s in features:
            if w < 1:
                raise ConfigError("disc_features", f"width must be positive, got {w}")
            if s not in (1, 2):
                raise ConfigError("disc_features", f"stride must be 1 or 2, got {s}")
        self.in_channels = in_channels
        self.dtype = np.dtype(dtype)
        self.specs: list[LayerSpec] = []
        prev = in_channels
        for i, (w, s) in enumerate(features):
            self.specs.append(
                LayerSpec(f"layer{i}", "patch", prev, w, s, i > 0, 0.0, "lrelu")
            )
            prev = w
        self.specs.append(LayerSpec("response", "patch", prev, 1, 1, False, 0.0, None))
        self.receptive_field = receptive_field([(KERNEL, s.stride) for s in self.specs])

        self.params = ParamStore()
        for spec in self.specs:
            self.params.add(f"{spec.name}.weight", (spec.out_ch, spec.in_ch, KERNEL, KERNEL), dtype)
            self.params.add(f"{spec.name}.bias", (spec.out_ch,), dtype)
            if spec.normalize:
                self.params.add(f"{spec.name}.norm.scale", (spec.out_ch,), dtype)
                self.params.add(f"{spec.name}.norm.shift", (spec.out_ch,), dtype)

    def response_map(self, x: Tensor) -> Tensor:
        """Per-patch scores for a batch, shape [b, 1, mh, mw]."""
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(
                f"critic expects [b, {self.in_channels}, h, w], got {x.shape}"
            )
        if x.dtype != self.dtype:
            raise ShapeError(f"critic is {self.dtype}, input is {x.dtype}")
        if min(x.shape[2], x.shape[3]) < self.receptive_field:
            raise ConfigError(
                "image_size",
                f"critic input {x.shape[2]}x{x.shape[3]} is smaller than its "
                f"receptive field {self.receptive_field}",
            )
        p = self.params
        h = x
        for spec in self.specs:
            h = engine.conv2d(h, p[f"{spec.name}.weight"], stride=spec.stride, pad=PAD)
            h = engine.add_channel_bias(h, p[f"{spec.name}.bias"])
            if spec.normalize:
                h = engine.channel_norm(h, p[f"{spec.name}.norm.scale"], p[f"{spec.name}.norm.shift"])
            if spec.activation == "lrelu":
                h = engine.leaky_relu(h, LEAK)
        return h

    def score(self, x: Tensor) -> Tensor:
        """Scalar critic score: the mean of the response map over batch
        and spatial positions."""
        return engine.mean_all(self.response_map(x))
