"""Corpus construction: filtering, text-image gating, vote aggregation, splits.

Corpora are line-delimited JSON, one tweet record per line. All functions are
pure over immutable records; only split building consumes a seed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .encoders import preprocess_tweet_text

HATE_CATEGORIES = ("Racist", "Sexist", "Homophobic", "ReligionAttack", "OtherHate")
CATEGORIES = ("NotHate",) + HATE_CATEGORIES

# Tie-break order among hate sub-categories (fixed; binary label unaffected).
_CATEGORY_RANK = {cat: i for i, cat in enumerate(CATEGORIES)}

DEFAULT_MIN_DURATION = 3.0  # seconds; faster hits are discarded as unreliable


@dataclass(frozen=True)
class WorkerAnnotation:
    worker_id: str
    category: str
    duration_seconds: float

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if self.duration_seconds < 0:
            raise ValueError("duration_seconds must be non-negative")


@dataclass
class TweetRecord:
    id: str
    tweet_text: str
    is_retweet: bool = False
    image_ref: str | None = None
    image_text: str = ""
    image_text_probability: float | None = None
    annotations: list = field(default_factory=list)

    def __post_init__(self):
        if not self.id:
            raise ValueError("record id must be non-empty")
        p = self.image_text_probability
        if p is not None and not 0.0 <= p <= 1.0:
            raise ValueError(f"image_text_probability {p} outside [0, 1]")

    def to_json(self):
        return json.dumps(
            {
                "id": self.id,
                "tweet_text": self.tweet_text,
                "is_retweet": self.is_retweet,
                "image_ref": self.image_ref,
                "image_text": self.image_text,
                "image_text_probability": self.image_text_probability,
                "annotations": [
                    {"worker_id": a.worker_id, "category": a.category, "duration_seconds": a.duration_seconds}
                    for a in self.annotations
                ],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        return cls(
            id=obj["id"],
            tweet_text=obj["tweet_text"],
            is_retweet=bool(obj.get("is_retweet", False)),
            image_ref=obj.get("image_ref"),
            image_text=obj.get("image_text", ""),
            image_text_probability=obj.get("image_text_probability"),
            annotations=[
                WorkerAnnotation(a["worker_id"], a["category"], float(a["duration_seconds"]))
                for a in obj.get("annotations", [])
            ],
        )


@dataclass
class LabeledExample:
    id: str
    tweet_text: str
    hate: bool
    category: str
    vote_counts: dict
    binary_tie: bool = False
    split: str | None = None


@dataclass
class FilterRuleSet:
    min_word_count: int = 3
    banned_terms: tuple = ()
    keyword_list: tuple = ()
    text_probability_threshold: float = 0.3

    def __post_init__(self):
        if self.min_word_count < 1:
            raise ValueError("min_word_count must be >= 1")
        if not 0.0 <= self.text_probability_threshold <= 1.0:
            raise ValueError("text_probability_threshold must be in [0, 1]")


class FilterReason(Enum):
    KEEP = "keep"
    RETWEET = "retweet"
    TOO_SHORT = "too_short"
    BANNED_TERM = "banned_term"
    NO_IMAGE = "no_image"


# ---------------------------------------------------------------------------
# I/O


class CorpusError(Exception):
    pass


def import_corpus(path):
    """Load a JSON-lines corpus; returns (records, diagnostics).

    Malformed lines are reported as (line_number, message) pairs, never
    silently dropped. Duplicate ids are malformed.
    """
    records, diagnostics = [], []
    seen = set()
    try:
        fh = open(path)
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = TweetRecord.from_json(line)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                diagnostics.append((lineno, f"line {lineno}: {exc}"))
                continue
            if record.id in seen:
                diagnostics.append((lineno, f"line {lineno}: duplicate id {record.id!r}"))
                continue
            seen.add(record.id)
            records.append(record)
    return records, diagnostics


def export_corpus(records, path):
    with open(path, "w") as fh:
        for record in records:
            fh.write(record.to_json() + "\n")


# ---------------------------------------------------------------------------
# filtering


def filter_tweet(record, rules):
    """First-triggered-rule keep/discard decision; rules are pure predicates."""
    if record.is_retweet:
        return FilterReason.RETWEET
    if len(record.tweet_text.split()) < rules.min_word_count:
        return FilterReason.TOO_SHORT
    tokens = {t.lower() for t in record.tweet_text.split()}
    if any(term.lower() in tokens for term in rules.banned_terms):
        return FilterReason.BANNED_TERM
    if not record.image_ref:
        return FilterReason.NO_IMAGE
    return FilterReason.KEEP


def gate_image_by_text_probability(record, threshold):
    """'keep' / 'discard' on the precomputed text probability; 'ungated' if absent."""
    p = record.image_text_probability
    if p is None:
        return "ungated"
    return "discard" if p > threshold else "keep"


# ---------------------------------------------------------------------------
# annotation aggregation


def aggregate_annotations(annotations, min_duration=DEFAULT_MIN_DURATION):
    """Majority-vote a record's annotations into a binary label.

    Annotations faster than ``min_duration`` are dropped first. The binary
    label is the majority over hate vs NotHate among retained votes (binary
    ties resolve to not-hate, flagged); the winning category is the plurality
    hate category, ties broken by the fixed category order.

    Returns (label, category, retained_count, binary_tie) or None when every
    annotation was rejected as a fast hit (unlabelable).
    """
    if not annotations:
        raise ValueError("need at least one annotation")
    retained = [a for a in annotations if a.duration_seconds >= min_duration]
    if not retained:
        return None
    hate_votes = [a for a in retained if a.category != "NotHate"]
    not_hate = len(retained) - len(hate_votes)
    tie = len(hate_votes) == not_hate
    hate = len(hate_votes) > not_hate
    if hate:
        counts = {}
        for a in hate_votes:
            counts[a.category] = counts.get(a.category, 0) + 1
        best = max(counts.items(), key=lambda kv: (kv[1], -_CATEGORY_RANK[kv[0]]))
        category = best[0]
    else:
        category = "NotHate"
    return hate, category, len(retained), tie


def label_corpus(records, min_duration=DEFAULT_MIN_DURATION):
    """Aggregate every record; returns (examples, unlabelable_ids)."""
    examples, unlabelable = [], []
    for record in records:
        result = aggregate_annotations(record.annotations, min_duration)
        if result is None:
            unlabelable.append(record.id)
            continue
        hate, category, retained_count, tie = result
        counts = {cat: 0 for cat in CATEGORIES}
        for a in record.annotations:
            if a.duration_seconds >= min_duration:
                counts[a.category] += 1
        assert sum(counts.values()) == retained_count
        examples.append(
            LabeledExample(
                id=record.id,
                tweet_text=record.tweet_text,
                hate=hate,
                category=category,
                vote_counts=counts,
                binary_tie=tie,
            )
        )
    return examples, unlabelable


# ---------------------------------------------------------------------------
# splits


def build_splits(examples, val_size, test_size, seed):
    """Assign balanced val/test splits in place; remainder goes to train.

    Val and test each get exactly half hate / half not-hate, drawn without
    replacement from a seeded shuffle; deterministic given the seed.
    """
    if val_size % 2 or test_size % 2:
        raise ValueError("val_size and test_size must be even (balanced halves)")
    by_class = {True: [], False: []}
    for ex in examples:
        by_class[ex.hate].append(ex)
    need = (val_size + test_size) // 2
    for hate, pool in by_class.items():
        if len(pool) < need:
            label = "hate" if hate else "not-hate"
            raise ValueError(
                f"insufficient {label} examples: need {need} for val+test, have {len(pool)}"
            )
    rng = np.random.default_rng(seed)
    for ex in examples:
        ex.split = "train"
    for hate in (True, False):
        pool = by_class[hate]
        order = rng.permutation(len(pool))
        for i in order[: val_size // 2]:
            pool[i].split = "val"
        for i in order[val_size // 2 : need]:
            pool[i].split = "test"
    return examples


# ---------------------------------------------------------------------------
# statistics


def keyword_hate_rates(examples, keyword_list):
    """Per-keyword (hate, not-hate, fraction) via whole-token matching.

    Matching is case-insensitive over the symbol-preprocessed tweet text.
    Fraction is None when a keyword never occurs. Rows come back sorted by
    total frequency, descending.
    """
    rows = []
    tokenized = [(set(preprocess_tweet_text(ex.tweet_text)), ex.hate) for ex in examples]
    for keyword in keyword_list:
        hate = sum(1 for tokens, is_hate in tokenized if keyword in tokens and is_hate)
        not_hate = sum(1 for tokens, is_hate in tokenized if keyword in tokens and not is_hate)
        total = hate + not_hate
        fraction = hate / total if total else None
        rows.append((keyword, hate, not_hate, fraction))
    rows.sort(key=lambda r: (-(r[1] + r[2]), r[0]))
    return rows


def class_distribution(counts):
    """Percentages per category from raw counts (category -> count)."""
    total = sum(counts.values())
    if total == 0:
        raise ValueError("no examples")
    return {cat: 100.0 * counts.get(cat, 0) / total for cat in CATEGORIES}


def write_keyword_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["keyword", "hate_count", "nothate_count", "fraction"])
        for keyword, hate, not_hate, fraction in rows:
            writer.writerow([keyword, hate, not_hate, "" if fraction is None else f"{fraction:.6f}"])


def write_class_distribution_csv(counts, path):
    percentages = class_distribution(counts)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "count", "percentage"])
        for cat in CATEGORIES:
            writer.writerow([cat, counts.get(cat, 0), f"{percentages[cat]:.2f}"])
