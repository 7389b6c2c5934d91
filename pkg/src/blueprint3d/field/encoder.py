"""Fully convolutional hourglass encoder with dynamic input sizes.

Structure: initial stride-2 reduction(s), then `stacks` hourglass modules.
Each module runs `internal_downsample_steps` stride-2 conv steps down, one
processing conv at the bottom, and matching nearest-neighbor upsamples with
skip additions on the way back up. Channel width stays at feature_depth
throughout; every conv is 3x3 followed by tanh. The output feature map
keeps the post-initial-reduction resolution: ceil(H / 2^initial) per axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, RangeError
from ..images import GrayImage
from .layers import ParamSet, Tensor, add, conv2d, conv_init, tanh, upsample_to


@dataclass(frozen=True)
class EncoderConfig:
    stacks: int = 2
    initial_downsample_steps: int = 1
    internal_downsample_steps: int = 5
    feature_depth: int = 128
    max_input_dim: int = 512

    def __post_init__(self):
        for name in ("stacks", "initial_downsample_steps", "internal_downsample_steps", "feature_depth"):
            if getattr(self, name) < 1:
                raise RangeError(f"{name} must be at least 1")
        if self.max_input_dim < min_input_dim(self):
            raise RangeError(
                f"max_input_dim {self.max_input_dim} is below the chain minimum {min_input_dim(self)}"
            )


def min_input_dim(cfg: EncoderConfig) -> int:
    """Smallest input dimension the downsampling chain supports."""
    return 2 ** (cfg.initial_downsample_steps + cfg.internal_downsample_steps)


def feature_map_shape(cfg: EncoderConfig, input_hw: tuple[int, int]) -> tuple[int, int, int]:
    h, w = input_hw
    for _ in range(cfg.initial_downsample_steps):
        h = -(-h // 2)
        w = -(-w // 2)
    return (cfg.feature_depth, h, w)


def build_encoder_params(cfg: EncoderConfig, rng: np.random.Generator, prefix: str = "enc", dtype=np.float32) -> ParamSet:
    """Parameters in declaration order: stem, then per stack the down convs,
    the bottom conv, and the up convs. The order is the checkpoint layout."""
    params = ParamSet()
    d = cfg.feature_depth
    c_in = 1
    for i in range(cfg.initial_downsample_steps):
        params.add(f"{prefix}.stem{i}.w", conv_init(rng, d, c_in, 3, dtype))
        params.add(f"{prefix}.stem{i}.b", np.zeros(d, dtype=dtype))
        c_in = d
    for s in range(cfg.stacks):
        for i in range(cfg.internal_downsample_steps):
            params.add(f"{prefix}.s{s}.down{i}.w", conv_init(rng, d, d, 3, dtype))
            params.add(f"{prefix}.s{s}.down{i}.b", np.zeros(d, dtype=dtype))
        params.add(f"{prefix}.s{s}.bottom.w", conv_init(rng, d, d, 3, dtype))
        params.add(f"{prefix}.s{s}.bottom.b", np.zeros(d, dtype=dtype))
        for i in range(cfg.internal_downsample_steps):
            params.add(f"{prefix}.s{s}.up{i}.w", conv_init(rng, d, d, 3, dtype))
            params.add(f"{prefix}.s{s}.up{i}.b", np.zeros(d, dtype=dtype))
    return params


def encode_tensor(params: ParamSet, cfg: EncoderConfig, image: Tensor, prefix: str = "enc") -> Tensor:
    """Forward pass on a (1, H, W) image tensor; differentiable."""
    _, h, w = image.data.shape
    lim = min_input_dim(cfg)
    if h < lim or w < lim:
        raise DimensionError(f"input {h}x{w} below the chain minimum of {lim} pixels per side")
    if max(h, w) > cfg.max_input_dim:
        raise DimensionError(f"input {h}x{w} exceeds max_input_dim {cfg.max_input_dim}")
    x = image
    for i in range(cfg.initial_downsample_steps):
        x = tanh(conv2d(x, params[f"{prefix}.stem{i}.w"], params[f"{prefix}.stem{i}.b"], stride=2))
    for s in range(cfg.stacks):
        skips: list[Tensor] = []
        for i in range(cfg.internal_downsample_steps):
            skips.append(x)
            x = tanh(conv2d(x, params[f"{prefix}.s{s}.down{i}.w"], params[f"{prefix}.s{s}.down{i}.b"], stride=2))
        x = tanh(conv2d(x, params[f"{prefix}.s{s}.bottom.w"], params[f"{prefix}.s{s}.bottom.b"]))
        for i in range(cfg.internal_downsample_steps):
            skip = skips.pop()
            x = add(upsample_to(x, skip.data.shape[1:]), skip)
            x = tanh(conv2d(x, params[f"{prefix}.s{s}.up{i}.w"], params[f"{prefix}.s{s}.up{i}.b"]))
    return x


def encode(image: GrayImage, cfg: EncoderConfig, params: ParamSet) -> np.ndarray:
    """Inference-only convenience: grayscale image in, (D, h, w) array out."""
    t = encode_tensor(params, cfg, Tensor(image.data[None, :, :].astype(np.float32)))
    return t.data
