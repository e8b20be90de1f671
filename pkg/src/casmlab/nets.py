"""Toy classifier and encoder-decoder saliency mapper.

The classifier is a stack of stride-2 3x3 conv + ReLU blocks, global average
pooling and a dense head.  The mapper reuses that stack as its encoder
(optionally the very same tensors) and decodes every block output through a
1x1 conv, bilinear resize to a common grid at a quarter of the input size,
channel concatenation, one 3x3 conv, a sigmoid, and a nearest-neighbor resize
back to the input size.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .autodiff import ParamSet, Tensor
from .autodiff import ops
from .errors import ConfigError, ShapeError


@dataclass
class NetConfig:
    input_size: int = 64
    in_channels: int = 3
    channels: List[int] = field(default_factory=lambda: [16, 32, 64, 128])
    num_classes: int = 10
    tap_channels: int = 16
    share_encoder: bool = True

    def __post_init__(self):
        if not self.channels:
            raise ConfigError("classifier needs at least one block")
        if self.input_size % (2 ** len(self.channels)):
            raise ConfigError(
                f"input_size {self.input_size} not divisible by 2**{len(self.channels)}"
            )
        if self.input_size % 4:
            raise ConfigError("input_size must be divisible by 4 for the decoder grid")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")

    @property
    def grid(self) -> int:
        return self.input_size // 4

    def to_dict(self) -> dict:
        return asdict(self)


def _uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _encoder_shapes(cfg: NetConfig, prefix: str):
    shapes = []
    c_in = cfg.in_channels
    for i, c_out in enumerate(cfg.channels):
        shapes.append((f"{prefix}block{i}.w", (c_out, c_in, 3, 3), c_in * 9))
        shapes.append((f"{prefix}block{i}.b", (c_out,), None))
        c_in = c_out
    return shapes


def _materialize(shapes, rng):
    out = ParamSet()
    for name, shape, fan_in in shapes:
        data = np.zeros(shape) if fan_in is None else _uniform(rng, shape, fan_in)
        out[name] = Tensor(data, track=True, name=name)
    return out


def init_params(kind: str, cfg: NetConfig, seed: int, classifier: Optional[ParamSet] = None) -> ParamSet:
    """Draw fresh parameters for ``kind`` in {"classifier", "mapper"}.

    Weights are uniform in +-sqrt(6/fan_in), biases zero.  A mapper built with
    ``cfg.share_encoder`` aliases the encoder tensors of ``classifier``.
    """
    rng = np.random.default_rng(seed)
    if kind == "classifier":
        shapes = _encoder_shapes(cfg, "")
        shapes.append(("head.w", (cfg.num_classes, cfg.channels[-1]), cfg.channels[-1]))
        shapes.append(("head.b", (cfg.num_classes,), None))
        return _materialize(shapes, rng)
    if kind != "mapper":
        raise ConfigError(f"unknown parameter kind {kind!r}")

    params = ParamSet()
    if cfg.share_encoder:
        if classifier is None:
            raise ConfigError("a shared-encoder mapper needs the classifier parameters")
        for i in range(len(cfg.channels)):
            for suffix in ("w", "b"):
                params[f"encoder.block{i}.{suffix}"] = classifier[f"block{i}.{suffix}"]
    else:
        for name, t in _materialize(_encoder_shapes(cfg, "encoder."), rng).items():
            params[name] = t
    dec = []
    for i, c in enumerate(cfg.channels):
        dec.append((f"decoder.tap{i}.w", (cfg.tap_channels, c, 1, 1), c))
        dec.append((f"decoder.tap{i}.b", (cfg.tap_channels,), None))
    width = cfg.tap_channels * len(cfg.channels)
    dec.append(("decoder.out.w", (1, width, 3, 3), width * 9))
    dec.append(("decoder.out.b", (1,), None))
    for name, t in _materialize(dec, rng).items():
        params[name] = t
    return params


def mapper_trainable(mapper: ParamSet, cfg: NetConfig) -> ParamSet:
    """Parameters owned (and updated) by the mapper's optimizer."""
    return mapper.subset("decoder.") if cfg.share_encoder else mapper


def _p(params, name, frozen):
    t = params[name]
    return t.detach() if frozen else t


def _check_images(images: Tensor, cfg: NetConfig):
    expected = (cfg.in_channels, cfg.input_size, cfg.input_size)
    if images.ndim != 4 or images.shape[1:] != expected:
        raise ShapeError(f"expected images [N, {expected[0]}, {expected[1]}, {expected[2]}], got {images.shape}")


def encode(params: ParamSet, images: Tensor, cfg: NetConfig, prefix: str = "", frozen: bool = False):
    """Run the conv stack and return every block output."""
    _check_images(images, cfg)
    taps = []
    h = images
    for i in range(len(cfg.channels)):
        h = ops.relu(
            ops.conv2d(h, _p(params, f"{prefix}block{i}.w", frozen), _p(params, f"{prefix}block{i}.b", frozen), stride=2, pad=1)
        )
        taps.append(h)
    return taps


def head(params: ParamSet, last: Tensor, frozen: bool = False) -> Tensor:
    return ops.dense(ops.global_avg_pool(last), _p(params, "head.w", frozen), _p(params, "head.b", frozen))


def classify(params: ParamSet, images: Tensor, cfg: NetConfig, frozen: bool = False) -> Tensor:
    """Logits ``[N, num_classes]``.  ``frozen`` treats parameters as constants."""
    return head(params, encode(params, images, cfg, frozen=frozen)[-1], frozen)


def decode(params: ParamSet, taps, cfg: NetConfig, frozen: bool = False) -> Tensor:
    """Turn encoder block outputs into a ``[N, H, W]`` mask in (0, 1)."""
    g = cfg.grid
    feats = []
    for i, tap in enumerate(taps):
        z = ops.relu(ops.conv2d(tap, _p(params, f"decoder.tap{i}.w", frozen), _p(params, f"decoder.tap{i}.b", frozen)))
        feats.append(ops.bilinear_resize(z, g, g))
    hmap = ops.concat(feats, axis=1)
    logit = ops.conv2d(hmap, _p(params, "decoder.out.w", frozen), _p(params, "decoder.out.b", frozen), stride=1, pad=1)
    up = ops.nearest_resize(ops.sigmoid(logit), cfg.input_size, cfg.input_size)
    n = up.shape[0]
    return ops.reshape(up, (n, cfg.input_size, cfg.input_size))


def map_saliency(mapper: ParamSet, images: Tensor, cfg: NetConfig, frozen: bool = False,
                 encoder_frozen: Optional[bool] = None) -> Tensor:
    """Saliency map ``[N, H, W]`` with values strictly inside (0, 1).

    ``encoder_frozen`` defaults to ``frozen``, except that a shared encoder is
    always frozen here: its weights belong to the classifier.
    """
    if encoder_frozen is None:
        encoder_frozen = frozen or cfg.share_encoder
    taps = encode(mapper, images, cfg, prefix="encoder.", frozen=encoder_frozen)
    return decode(mapper, taps, cfg, frozen=frozen)


def count_distinct(*paramsets) -> int:
    """Number of distinct tensor objects across parameter sets."""
    return len({id(t) for ps in paramsets for t in ps.tensors()})
