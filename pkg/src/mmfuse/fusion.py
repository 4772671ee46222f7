"""The three multimodal fusion heads and the full three-input models.

FCM concatenates the pooled visual vector with both text encodings and runs a
fully connected stack. SCM tiles the text encodings at every spatial location
of the visual feature map before further convolution. TKM generates 1x1
convolution kernels from each text encoding, convolves them with the visual
map, then proceeds like SCM. Unavailable modalities are replaced by zeros.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ShapeMismatch, Tensor, ops
from .encoders import TextEncoder, TextEncoderConfig, VisionBackbone, VisionBackboneConfig
from .nn import BatchNorm, Conv2d, Dense, Layer, collect

VARIANTS = ("FCM", "SCM", "TKM")


@dataclass(frozen=True)
class InputMask:
    """Which of the three inputs a model sees: tweet text, image text, image."""

    tweet_text: bool = True
    image_text: bool = True
    image: bool = True

    def __post_init__(self):
        if not (self.tweet_text or self.image_text or self.image):
            raise ValueError("at least one input must be available")

    def label(self):
        parts = [
            name
            for flag, name in [(self.tweet_text, "TT"), (self.image_text, "IT"), (self.image, "I")]
            if flag
        ]
        return ",".join(parts)

    @classmethod
    def parse(cls, text):
        parts = {p.strip().upper() for p in text.split(",") if p.strip()}
        unknown = parts - {"TT", "IT", "I"}
        if unknown:
            raise ValueError(f"unknown input names {sorted(unknown)}; use TT, IT, I")
        return cls(tweet_text="TT" in parts, image_text="IT" in parts, image="I" in parts)


@dataclass
class FusionModelConfig:
    variant: str = "TKM"
    visual_dim: int = 64  # pooled-vector / feature-map channel count
    map_side: int = 4
    hidden_dim: int = 150
    tweet_kernels: int = 4  # K_t; reference value 10
    imgtext_kernels: int = 2  # K_it; reference value 5
    fc_plan: tuple = (128, 64, 2)
    fusion_block_count: int = 2
    fusion_channels: int = 64
    dropout_rate: float = 0.5

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.fc_plan[-1] != 2:
            raise ValueError("fc_plan must end in the 2-class layer")
        if self.variant == "TKM" and (self.tweet_kernels < 1 or self.imgtext_kernels < 1):
            raise ValueError("TKM needs at least one kernel per text input")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    @classmethod
    def reference(cls, variant="TKM"):
        return cls(
            variant=variant,
            visual_dim=2048,
            map_side=8,
            hidden_dim=150,
            tweet_kernels=10,
            imgtext_kernels=5,
            fc_plan=(1024, 512, 2),
            fusion_channels=2048,
        )

    @property
    def concat_dim(self):
        """FCM concatenation length: visual vector plus the two text vectors."""
        return self.visual_dim + 2 * self.hidden_dim

    @property
    def kernel_count(self):
        return self.tweet_kernels + self.imgtext_kernels


def apply_input_mask(v_input, t_tweet, t_imgtext, mask):
    """Zero out unavailable modalities, pass available ones through."""

    def masked(tensor, available):
        if available or tensor is None:
            return tensor
        return Tensor(np.zeros(tensor.shape))

    return (
        masked(v_input, mask.image),
        masked(t_tweet, mask.tweet_text),
        masked(t_imgtext, mask.image_text),
    )


class _FcStack(Layer):
    """fc -> BN -> relu pairs, ending in a plain linear classification layer."""

    def __init__(self, in_dim, plan, rng):
        self.blocks = []
        for out_dim in plan[:-1]:
            self.blocks.append((Dense(in_dim, out_dim, rng), BatchNorm(out_dim)))
            in_dim = out_dim
        self.final = Dense(in_dim, plan[-1], rng)

    def __call__(self, x, training):
        for dense, bn in self.blocks:
            x = ops.relu(bn(dense(x), training))
        return self.final(x)

    def _children(self, prefix):
        children = {}
        for i, (dense, bn) in enumerate(self.blocks):
            children[f"{prefix}.fc{i}"] = dense
            children[f"{prefix}.bn{i}"] = bn
        children[f"{prefix}.out"] = self.final
        return children


class _ConvStack(Layer):
    """conv3x3 -> BN -> relu fusion blocks standing in for Inception-E blocks."""

    def __init__(self, in_ch, out_ch, count, rng):
        self.blocks = []
        for _ in range(count):
            self.blocks.append((Conv2d(in_ch, out_ch, rng, kernel=3, stride=1), BatchNorm(out_ch)))
            in_ch = out_ch

    def __call__(self, x, training):
        for conv, bn in self.blocks:
            x = ops.relu(bn(conv(x), training))
        return x

    def _children(self, prefix):
        children = {}
        for i, (conv, bn) in enumerate(self.blocks):
            children[f"{prefix}.conv{i}"] = conv
            children[f"{prefix}.bn{i}"] = bn
        return children


class FusionHead(Layer):
    """Variant-dispatching fusion head over pre-encoded inputs."""

    def __init__(self, config, rng):
        self.config = config
        cfg = config
        if cfg.variant == "FCM":
            self.fc = _FcStack(cfg.concat_dim, cfg.fc_plan, rng)
        else:
            if cfg.variant == "TKM":
                self.tweet_kernel_gen = Dense(cfg.hidden_dim, cfg.tweet_kernels * cfg.visual_dim, rng)
                self.imgtext_kernel_gen = Dense(
                    cfg.hidden_dim, cfg.imgtext_kernels * cfg.visual_dim, rng
                )
                self.kernel_bn = BatchNorm(cfg.kernel_count)
                fused_depth = cfg.kernel_count + 2 * cfg.hidden_dim
            else:
                fused_depth = cfg.visual_dim + 2 * cfg.hidden_dim
            self.conv = _ConvStack(fused_depth, cfg.fusion_channels, cfg.fusion_block_count, rng)
            self.fc = _FcStack(cfg.fusion_channels, cfg.fc_plan, rng)

    # -- kernels ------------------------------------------------------------

    def make_textual_kernels(self, t_text, which):
        """Affine-map a text encoding to a bank of 1x1 kernels (N, K, D_v).

        One independent affine map per kernel; implemented as a single dense
        layer whose output is split, which is parameter-for-parameter the same
        as K separate layers.
        """
        gen = self.tweet_kernel_gen if which == "tweet" else self.imgtext_kernel_gen
        count = self.config.tweet_kernels if which == "tweet" else self.config.imgtext_kernels
        flat = gen(t_text)
        return ops.reshape(flat, (t_text.shape[0], count, self.config.visual_dim))

    # -- forwards -----------------------------------------------------------

    def _check_text(self, t, name):
        if t.ndim != 2 or t.shape[1] != self.config.hidden_dim:
            raise ShapeMismatch(
                self.config.variant.lower() + "_forward",
                f"{name} must be (N, {self.config.hidden_dim}), got {t.shape}",
            )

    def _spatial_tail(self, fused, training, rng):
        x = self.conv(fused, training)
        x = ops.dropout(x, self.config.dropout_rate, training, rng)
        x = ops.avg_pool_spatial(x)
        return self.fc(x, training)

    def fcm_forward(self, v_pool, t_tweet, t_imgtext, training=False, rng=None):
        cfg = self.config
        if v_pool.ndim != 2 or v_pool.shape[1] != cfg.visual_dim:
            raise ShapeMismatch("fcm_forward", f"v_pool must be (N, {cfg.visual_dim}), got {v_pool.shape}")
        self._check_text(t_tweet, "t_tweet")
        self._check_text(t_imgtext, "t_imgtext")
        fused = ops.concat([v_pool, t_tweet, t_imgtext], axis=1)
        assert fused.shape[1] == cfg.concat_dim
        return self.fc(fused, training)

    def _check_map(self, v_map, name):
        cfg = self.config
        expected = (cfg.map_side, cfg.map_side, cfg.visual_dim)
        if v_map.ndim != 4 or v_map.shape[1:] != expected:
            raise ShapeMismatch(name, f"v_map must be (N, {expected}), got {v_map.shape}")

    def scm_forward(self, v_map, t_tweet, t_imgtext, training=False, rng=None):
        cfg = self.config
        self._check_map(v_map, "scm_forward")
        self._check_text(t_tweet, "t_tweet")
        self._check_text(t_imgtext, "t_imgtext")
        side = cfg.map_side
        fused = ops.concat(
            [v_map, ops.tile_spatial(t_tweet, side, side), ops.tile_spatial(t_imgtext, side, side)],
            axis=3,
        )
        assert fused.shape[3] == cfg.visual_dim + 2 * cfg.hidden_dim
        return self._spatial_tail(fused, training, rng)

    def tkm_forward(self, v_map, t_tweet, t_imgtext, training=False, rng=None):
        cfg = self.config
        self._check_map(v_map, "tkm_forward")
        self._check_text(t_tweet, "t_tweet")
        self._check_text(t_imgtext, "t_imgtext")
        kernels = ops.concat(
            [self.make_textual_kernels(t_tweet, "tweet"), self.make_textual_kernels(t_imgtext, "imgtext")],
            axis=1,
        )
        mm_map = ops.dynamic_conv1x1(v_map, kernels)
        assert mm_map.shape[1:] == (cfg.map_side, cfg.map_side, cfg.kernel_count)
        mm_map = self.kernel_bn(mm_map, training)
        side = cfg.map_side
        fused = ops.concat(
            [mm_map, ops.tile_spatial(t_tweet, side, side), ops.tile_spatial(t_imgtext, side, side)],
            axis=3,
        )
        assert fused.shape[3] == cfg.kernel_count + 2 * cfg.hidden_dim
        return self._spatial_tail(fused, training, rng)

    def __call__(self, v_input, t_tweet, t_imgtext, training=False, rng=None):
        forward = {
            "FCM": self.fcm_forward,
            "SCM": self.scm_forward,
            "TKM": self.tkm_forward,
        }[self.config.variant]
        if self.config.variant == "FCM":
            return forward(v_input, t_tweet, t_imgtext, training)
        return forward(v_input, t_tweet, t_imgtext, training, rng)

    def _children(self):
        children = {}
        if self.config.variant != "FCM":
            children.update(self.conv._children("conv"))
            if self.config.variant == "TKM":
                children["kernels.tweet"] = self.tweet_kernel_gen
                children["kernels.imgtext"] = self.imgtext_kernel_gen
                children["kernels.bn"] = self.kernel_bn
        children.update(self.fc._children("fc"))
        return children

    def parameters(self):
        params, _ = collect(self._children())
        return params

    def state_arrays(self):
        _, state = collect(self._children())
        return state


class MultimodalModel(Layer):
    """Backbone + shared text encoder + fusion head over raw batch inputs.

    The same LSTM encodes tweet text and image text unless
    ``share_text_encoder`` is off. Masked modalities are replaced by zero
    tensors before fusion, so eval-mode logits cannot depend on their content.
    """

    def __init__(
        self,
        vocab_size,
        fusion_config,
        backbone_config=None,
        text_config=None,
        seed=0,
        share_text_encoder=True,
        mask=InputMask(),
    ):
        rng = np.random.default_rng(seed)
        self.config = fusion_config
        self.mask = mask
        self.text_config = text_config or TextEncoderConfig(hidden_dim=fusion_config.hidden_dim)
        if self.text_config.hidden_dim != fusion_config.hidden_dim:
            raise ValueError("text encoder hidden_dim must match fusion hidden_dim")
        self.backbone_config = backbone_config or VisionBackboneConfig()
        if self.backbone_config.map_channels != fusion_config.visual_dim:
            raise ValueError("backbone map_channels must match fusion visual_dim")
        if self.backbone_config.map_side != fusion_config.map_side:
            raise ValueError("backbone map_side must match fusion map_side")
        self.backbone = VisionBackbone(self.backbone_config, rng)
        self.text_encoder = TextEncoder(vocab_size, self.text_config, rng)
        self.imgtext_encoder = (
            self.text_encoder
            if share_text_encoder
            else TextEncoder(vocab_size, self.text_config, rng)
        )
        self.share_text_encoder = share_text_encoder
        self.head = FusionHead(fusion_config, rng)

    def forward(self, images, tweet_ids, imgtext_ids, training=False, rng=None, mask=None):
        """2-class logits for a batch.

        ``images`` is an (N, S, S, 3) array or Tensor; the token-id inputs are
        lists of id lists. Masked modalities skip their encoder entirely.
        """
        mask = mask or self.mask
        n = len(tweet_ids)
        cfg = self.config
        zeros_text = lambda: Tensor(np.zeros((n, cfg.hidden_dim)))
        t_tweet = self.text_encoder.encode(tweet_ids) if mask.tweet_text else zeros_text()
        t_imgtext = self.imgtext_encoder.encode(imgtext_ids) if mask.image_text else zeros_text()
        if mask.image:
            images = images if isinstance(images, Tensor) else Tensor(images)
            v_pool, v_map = self.backbone(images, training)
            v_input = v_pool if cfg.variant == "FCM" else v_map
        elif cfg.variant == "FCM":
            v_input = Tensor(np.zeros((n, cfg.visual_dim)))
        else:
            v_input = Tensor(np.zeros((n, cfg.map_side, cfg.map_side, cfg.visual_dim)))
        v_input, t_tweet, t_imgtext = apply_input_mask(v_input, t_tweet, t_imgtext, mask)
        return self.head(v_input, t_tweet, t_imgtext, training=training, rng=rng)

    def _children(self):
        children = {"backbone": self.backbone, "text": self.text_encoder, "head": self.head}
        if not self.share_text_encoder:
            children["imgtext"] = self.imgtext_encoder
        return children

    def parameters(self):
        params, _ = collect(self._children())
        return params

    def state_arrays(self):
        _, state = collect(self._children())
        return state

    def all_arrays(self):
        """Trainable parameters plus running statistics, for checkpointing."""
        arrays = {name: t.data for name, t in self.parameters().items()}
        arrays.update(self.state_arrays())
        return arrays

    def load_all_arrays(self, arrays):
        for name, tensor in self.parameters().items():
            tensor.data = np.array(arrays[name], dtype=np.float64)
        for prefix, child in self._children().items():
            for name in child.state_arrays():
                child._set_state(name, np.array(arrays[f"{prefix}.{name}"], dtype=np.float64))
