"""Controlled synthetic multimodal corpora with plantable cross-modal signals.

Each example carries two independent latent bits: a text bit (rendered as a
signal token among distractors in the tweet) and an image bit (rendered as a
bright square patch over noise). The labeling mode decides how the bits
combine; the label-noise rate and the multimodal fraction let degradation
effects be measured directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import TweetRecord, WorkerAnnotation

MODES = ("unimodal_text", "unimodal_image", "crossmodal_and", "crossmodal_xor")

SIGNAL_TOKEN = "zork"
DISTRACTOR_TOKENS = tuple(f"filler{i}" for i in range(12))


@dataclass
class SynthSpec:
    mode: str = "crossmodal_xor"
    n_train: int = 8000
    n_val: int = 1000
    n_test: int = 2000
    noise_rate: float = 0.0  # label-flip probability
    multimodal_fraction: float = 1.0  # rest of the examples use label = text bit
    image_side: int = 16
    min_tokens: int = 5
    max_tokens: int = 9
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.noise_rate < 0.5:
            raise ValueError("noise_rate must be in [0, 0.5)")
        if not 0.0 < self.multimodal_fraction <= 1.0:
            raise ValueError("multimodal_fraction must be in (0, 1]")
        if self.image_side < 4:
            raise ValueError("image_side must be at least 4")


@dataclass
class SynthExample:
    image: np.ndarray  # (side, side, 3) in [0, 1]
    tweet_tokens: list
    imgtext_tokens: list
    label: int
    text_bit: int
    image_bit: int


def _sample_bits(rng, mode):
    """Draw (text_bit, image_bit, label) with 50/50 label balance.

    xor is balanced for independent fair bits. For the and rule the cells are
    reweighted: label 1 forces (1,1); label 0 draws uniformly from the other
    three cells.
    """
    if mode == "crossmodal_and":
        if rng.random() < 0.5:
            return 1, 1, 1
        t, v = [(0, 0), (0, 1), (1, 0)][int(rng.integers(0, 3))]
        return t, v, 0
    t = int(rng.integers(0, 2))
    v = int(rng.integers(0, 2))
    label = {
        "unimodal_text": t,
        "unimodal_image": v,
        "crossmodal_xor": t ^ v,
    }[mode]
    return t, v, label


def _render_text(rng, bit, spec):
    count = int(rng.integers(spec.min_tokens, spec.max_tokens + 1))
    tokens = [DISTRACTOR_TOKENS[int(i)] for i in rng.integers(0, len(DISTRACTOR_TOKENS), count)]
    if bit:
        tokens[int(rng.integers(0, count))] = SIGNAL_TOKEN
    return tokens


def _render_image(rng, bit, side):
    image = np.clip(rng.normal(0.0, 0.1, (side, side, 3)), 0.0, 1.0)
    if bit:
        patch = max(1, side // 4)
        y = int(rng.integers(0, side - patch + 1))
        x = int(rng.integers(0, side - patch + 1))
        image[y : y + patch, x : x + patch, :] = 1.0
    return image


def _generate_split(rng, n, spec):
    examples = []
    for _ in range(n):
        mode = spec.mode
        if spec.multimodal_fraction < 1.0 and rng.random() >= spec.multimodal_fraction:
            mode = "unimodal_text"
        t, v, label = _sample_bits(rng, mode)
        if rng.random() < spec.noise_rate:
            label = 1 - label
        examples.append(
            SynthExample(
                image=_render_image(rng, v, spec.image_side),
                tweet_tokens=_render_text(rng, t, spec),
                imgtext_tokens=_render_text(rng, int(rng.integers(0, 2)), spec),
                label=label,
                text_bit=t,
                image_bit=v,
            )
        )
    return examples


def generate(spec):
    """Deterministically build {'train', 'val', 'test'} example lists."""
    sizes = {"train": spec.n_train, "val": spec.n_val, "test": spec.n_test}
    out = {}
    for i, (split, n) in enumerate(sizes.items()):
        rng = np.random.default_rng([spec.seed, i])
        out[split] = _generate_split(rng, n, spec)
    return out


def bayes_accuracy_text_only(spec):
    """Best achievable accuracy from the text bit alone, before label noise."""
    base = {
        "unimodal_text": 1.0,
        "unimodal_image": 0.5,
        "crossmodal_xor": 0.5,
        # under the rebalanced cells: predict 0 at t=0 (always right, mass 1/3),
        # predict 1 at t=1 (right 3/4 of the time, mass 2/3) -> 5/6. With the
        # unweighted 25/75 cells this would be the textbook 3/4.
        "crossmodal_and": 5.0 / 6.0,
    }[spec.mode]
    mu = spec.multimodal_fraction
    mixed = mu * base + (1.0 - mu) * 1.0
    return (1.0 - spec.noise_rate) * mixed + spec.noise_rate * (1.0 - mixed)


def build_vocabulary():
    from .encoders import Vocabulary

    vocab = Vocabulary()
    vocab.add(SIGNAL_TOKEN)
    for token in DISTRACTOR_TOKENS:
        vocab.add(token)
    return vocab


def to_model_data(examples, vocab):
    """Pack synth examples into a batchable split."""
    from .training import ModelData

    return ModelData(
        images=np.stack([ex.image for ex in examples]) if examples else np.zeros((0,)),
        tweet_ids=[vocab.encode(ex.tweet_tokens) for ex in examples],
        imgtext_ids=[vocab.encode(ex.imgtext_tokens) for ex in examples],
        labels=np.array([ex.label for ex in examples], dtype=np.int64),
    )


def to_records(examples, split_name, image_dir=None):
    """Convert synth examples to the corpus record format.

    When ``image_dir`` is given, images are saved there as .npy files and
    referenced by path; annotations are three consistent slow votes so the
    aggregation pipeline reproduces the generated labels.
    """
    records = []
    for i, ex in enumerate(examples):
        ident = f"{split_name}-{i:06d}"
        image_ref = None
        if image_dir is not None:
            image_ref = f"{ident}.npy"
            np.save(f"{image_dir}/{image_ref}", ex.image)
        category = "OtherHate" if ex.label else "NotHate"
        records.append(
            TweetRecord(
                id=ident,
                tweet_text=" ".join(ex.tweet_tokens),
                is_retweet=False,
                image_ref=image_ref,
                image_text=" ".join(ex.imgtext_tokens),
                image_text_probability=0.0,
                annotations=[
                    WorkerAnnotation(f"synth-{w}", category, 10.0) for w in range(3)
                ],
            )
        )
    return records
