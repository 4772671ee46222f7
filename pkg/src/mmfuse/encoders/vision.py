"""Image preprocessing/augmentation and the small convolutional backbone.

The backbone plays the role of a large pretrained feature extractor at desk
scale: a stack of stride-2 conv/batch-norm/relu stages whose last feature map
provides both a spatial map and its spatial average as a pooled vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import ops
from ..nn import BatchNorm, Conv2d, Layer, collect


def bilinear_resize(image, out_h, out_w):
    """Resize an (H, W, C) array with bilinear sampling (align-corners=False)."""
    h, w = image.shape[:2]
    ys = (np.arange(out_h) + 0.5) * h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * w / out_w - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    top = image[y0][:, x0] * (1 - wx) + image[y0][:, x1] * wx
    bot = image[y1][:, x0] * (1 - wx) + image[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


@dataclass
class ImagePreprocessConfig:
    """Resize-then-crop geometry; the published reference setting is 500-pixel resizes with
    299-pixel crops, the desk default 64/56."""

    resize_shortest: int = 64
    crop_side: int = 56

    def __post_init__(self):
        if self.crop_side < 1 or self.resize_shortest < self.crop_side:
            raise ValueError("need resize_shortest >= crop_side >= 1")

    @classmethod
    def reference(cls):
        return cls(resize_shortest=500, crop_side=299)


@dataclass
class VisionBackboneConfig:
    input_side: int = 56
    channels: tuple = (16, 32, 48, 64)
    stride: int = 2

    def __post_init__(self):
        if self.input_side < 1 or not self.channels:
            raise ValueError("need input_side >= 1 and at least one stage")

    @property
    def map_channels(self):
        return self.channels[-1]

    @property
    def map_side(self):
        side = self.input_side
        for _ in self.channels:
            side = -(-side // self.stride)  # same-padded stride reduction
        return side

    @classmethod
    def reference_shaped(cls):
        """A config reproducing the reference 8x8x2048 map / 2048-d vector."""
        return cls(input_side=256, channels=(128, 256, 512, 1024, 2048))


def preprocess_image(image, mode, config, seed=0):
    """Resize shortest side, then crop (random in train, centered in eval).

    Train mode additionally mirrors horizontally with probability 1/2. Fully
    deterministic for a given seed.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] < 1 or image.shape[1] < 1:
        raise ValueError(f"expected a non-empty (H, W, C) image, got shape {image.shape}")
    h, w = image.shape[:2]
    scale = config.resize_shortest / min(h, w)
    resized = bilinear_resize(
        image, max(config.resize_shortest, round(h * scale)), max(config.resize_shortest, round(w * scale))
    )
    side = config.crop_side
    max_y = resized.shape[0] - side
    max_x = resized.shape[1] - side
    if mode == "train":
        rng = np.random.default_rng(seed)
        y = int(rng.integers(0, max_y + 1))
        x = int(rng.integers(0, max_x + 1))
        crop = resized[y : y + side, x : x + side]
        if rng.random() < 0.5:
            crop = crop[:, ::-1]
    elif mode == "eval":
        crop = resized[max_y // 2 : max_y // 2 + side, max_x // 2 : max_x // 2 + side]
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    return np.ascontiguousarray(crop)


class VisionBackbone(Layer):
    """Stride-2 conv stages producing a spatial feature map and pooled vector."""

    def __init__(self, config, rng):
        self.config = config
        self.stages = []
        in_ch = 3
        for out_ch in config.channels:
            conv = Conv2d(in_ch, out_ch, rng, kernel=3, stride=config.stride)
            bn = BatchNorm(out_ch)
            self.stages.append((conv, bn))
            in_ch = out_ch

    def feature_map(self, x, training):
        """(N, S, S, 3) -> (N, map_side, map_side, map_channels)."""
        if x.shape[1] != self.config.input_side or x.shape[2] != self.config.input_side:
            raise ValueError(
                f"backbone expects {self.config.input_side}-pixel inputs, got {x.shape}"
            )
        for conv, bn in self.stages:
            x = ops.relu(bn(conv(x), training))
        return x

    def __call__(self, x, training):
        """Return (pooled (N, D), map (N, side, side, D)); pooled == map mean."""
        fmap = self.feature_map(x, training)
        return ops.avg_pool_spatial(fmap), fmap

    def _children(self):
        children = {}
        for i, (conv, bn) in enumerate(self.stages):
            children[f"stage{i}.conv"] = conv
            children[f"stage{i}.bn"] = bn
        return children

    def parameters(self):
        params, _ = collect(self._children())
        return params

    def state_arrays(self):
        _, state = collect(self._children())
        return state
