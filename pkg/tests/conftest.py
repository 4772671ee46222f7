"""Shared brute-force oracles and small helpers for the test suite."""

import itertools

import numpy as np
import pytest


def oracle_auc(scores, labels):
    """Pair-counting AUC: wins + half-ties over all (pos, neg) pairs."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = 0.0
    for p, n in itertools.product(pos, neg):
        if p > n:
            wins += 1.0
        elif p == n:
            wins += 0.5
    return wins / (len(pos) * len(neg))


def oracle_f1(scores, labels, threshold):
    tp = sum(1 for s, y in zip(scores, labels) if y and s >= threshold)
    fp = sum(1 for s, y in zip(scores, labels) if not y and s >= threshold)
    fn = sum(1 for s, y in zip(scores, labels) if y and s < threshold)
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def oracle_max_f1(scores, labels):
    """Exhaustive sweep over every candidate threshold."""
    candidates = set(scores) | {float("inf")}
    return max(oracle_f1(scores, labels, t) for t in candidates)


def oracle_balanced_accuracy(scores, labels, threshold=0.5):
    predicted = [s >= threshold for s in scores]
    tpr = sum(1 for p, y in zip(predicted, labels) if p and y) / sum(labels)
    tnr = sum(1 for p, y in zip(predicted, labels) if not p and not y) / (
        len(labels) - sum(labels)
    )
    return 0.5 * (tpr + tnr)


def make_scored(scores, labels):
    from mmfuse.evaluation import ScoredExample

    return [
        ScoredExample(id=str(i), score=float(s), hate=bool(y))
        for i, (s, y) in enumerate(zip(scores, labels))
    ]


def random_instance(rng, n=None):
    """A random scored set guaranteed to contain both classes."""
    n = n or int(rng.integers(4, 101))
    scores = rng.random(n)
    labels = rng.integers(0, 2, n).astype(bool)
    labels[0], labels[1] = True, False
    return scores, labels


@pytest.fixture
def rng():
    return np.random.default_rng(0)
