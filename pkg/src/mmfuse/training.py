"""Training loop: weighted softmax cross-entropy, ADAM, seeded batching.

Class imbalance is compensated with inverse-frequency weights normalized to
mean 1 under the empirical distribution, so the loss scale stays comparable
across weight modes. Model selection keeps the checkpoint with the best
validation AUC. Everything is deterministic given the seed.
"""

from __future__ import annotations

import copy
import csv
from dataclasses import dataclass, field

import numpy as np

from .autodiff import AdamState, Tensor, adam_step, backward, ops
from .evaluation import MetricError, ScoredExample, auc_roc
from .fusion import InputMask

HATE = 1  # class index of the hate label; index 0 is not-hate


def class_weights(label_counts):
    """Inverse-frequency weights: w_c = N / (C * count_c); mean weight is 1."""
    counts = np.asarray(label_counts, dtype=np.float64)
    if (counts <= 0).any():
        raise ValueError(f"every class needs a positive count, got {counts}")
    return counts.sum() / (len(counts) * counts)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 5
    seed: int = 0
    mask: InputMask = field(default_factory=InputMask)
    class_weight_mode: str = "balanced"  # or "uniform"
    eval_every: int = 0  # steps; 0 = end of each epoch

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.class_weight_mode not in ("balanced", "uniform"):
            raise ValueError("class_weight_mode must be 'balanced' or 'uniform'")


@dataclass
class TrainHistory:
    steps: list = field(default_factory=list)  # (step, loss)
    evals: list = field(default_factory=list)  # (step, val_auc)
    best_step: int = -1
    best_val_auc: float = float("nan")
    diverged: bool = False

    def write_csv(self, path):
        evals = dict(self.evals)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "loss", "val_auc"])
            for step, loss in self.steps:
                auc = evals.get(step)
                writer.writerow([step, repr(loss), "" if auc is None else repr(auc)])


@dataclass
class ModelData:
    """A split ready for batching: aligned images, token ids and labels."""

    images: np.ndarray  # (N, S, S, 3); may be a zero-size array when unused
    tweet_ids: list
    imgtext_ids: list
    labels: np.ndarray  # int, 1 = hate
    ids: list = None

    def __post_init__(self):
        if self.ids is None:
            self.ids = [str(i) for i in range(len(self.labels))]

    def __len__(self):
        return len(self.labels)

    def subset(self, indices):
        return ModelData(
            images=self.images[indices] if self.images.size else self.images,
            tweet_ids=[self.tweet_ids[i] for i in indices],
            imgtext_ids=[self.imgtext_ids[i] for i in indices],
            labels=self.labels[indices],
            ids=[self.ids[i] for i in indices],
        )


class TextOnlyModel:
    """LSTM classifier adapter exposing the multimodal forward interface."""

    def __init__(self, text_encoder):
        self.text_encoder = text_encoder
        self.mask = InputMask(tweet_text=True, image_text=False, image=False)

    def forward(self, images, tweet_ids, imgtext_ids, training=False, rng=None, mask=None):
        return self.text_encoder.classify(tweet_ids)

    def parameters(self):
        return self.text_encoder.parameters()

    def state_arrays(self):
        return {}

    def all_arrays(self):
        return {name: t.data for name, t in self.parameters().items()}

    def load_all_arrays(self, arrays):
        for name, tensor in self.parameters().items():
            tensor.data = np.array(arrays[name], dtype=np.float64)


def score_dataset(model, data, batch_size=64, mask=None):
    """Eval-mode hate scores for every example; deterministic."""
    scored = []
    for start in range(0, len(data), batch_size):
        batch = data.subset(np.arange(start, min(start + batch_size, len(data))))
        logits = model.forward(
            batch.images, batch.tweet_ids, batch.imgtext_ids, training=False, mask=mask
        )
        probs = ops.softmax(logits, axis=1).data
        for ident, p, label in zip(batch.ids, probs[:, HATE], batch.labels):
            scored.append(ScoredExample(id=ident, score=float(p), hate=bool(label)))
    return scored


def train(model, train_data, val_data, config):
    """Run the training loop; returns (best_arrays, history).

    The model is left holding the best-validation-AUC parameters. Training
    aborts (history.diverged) on a non-finite loss, returning the last finite
    checkpoint.
    """
    if len(train_data) == 0:
        raise ValueError("train split is empty")
    rng = np.random.default_rng(config.seed)
    dropout_rng = np.random.default_rng([config.seed, 1])

    if config.class_weight_mode == "balanced":
        counts = np.array(
            [(train_data.labels == 0).sum(), (train_data.labels == 1).sum()], dtype=np.float64
        )
        weights = class_weights(counts)
    else:
        weights = np.ones(2)

    params = model.parameters()
    adam = AdamState(lr=config.learning_rate)
    history = TrainHistory()
    best = copy.deepcopy(model.all_arrays())
    best_auc = -np.inf
    step = 0

    def evaluate_now():
        nonlocal best_auc
        if len(val_data) == 0 or (history.evals and history.evals[-1][0] == step):
            return
        try:
            auc = auc_roc(score_dataset(model, val_data, config.batch_size, mask=config.mask))
        except MetricError:
            return
        history.evals.append((step, auc))
        if auc > best_auc:
            best_auc = auc
            history.best_step = step
            history.best_val_auc = auc
            best.clear()
            best.update(copy.deepcopy(model.all_arrays()))

    for _ in range(config.epochs):
        order = rng.permutation(len(train_data))
        for start in range(0, len(order), config.batch_size):
            batch = train_data.subset(order[start : start + config.batch_size])
            logits = model.forward(
                batch.images,
                batch.tweet_ids,
                batch.imgtext_ids,
                training=True,
                rng=dropout_rng,
                mask=config.mask,
            )
            loss = ops.softmax_cross_entropy(logits, batch.labels, weights)
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                history.diverged = True
                model.load_all_arrays(best)
                return best, history
            step += 1
            history.steps.append((step, loss_value))
            backward(loss)
            grads = {name: p.grad for name, p in params.items() if p.grad is not None}
            adam_step(params, grads, adam)
            if config.eval_every and step % config.eval_every == 0:
                evaluate_now()
        if not config.eval_every:
            evaluate_now()
    evaluate_now()
    if best_auc == -np.inf:  # no usable validation signal: keep final params
        best = copy.deepcopy(model.all_arrays())
    model.load_all_arrays(best)
    return best, history
