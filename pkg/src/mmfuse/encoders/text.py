"""Tweet-text preprocessing, vocabulary handling and the LSTM encoder.

Tweets get a symbol treatment before lookup: user mentions, hashtags, URLs
and bare numbers collapse to dedicated symbols; everything else is lowercased.
Both tweet text and image text run through the same encoder.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, ops
from ..nn import Dense, LSTM, Layer, collect

PAD = "<pad>"
UNK = "<unk>"
USER = "<user>"
HASHTAG = "<hashtag>"
NUMBER = "<number>"
URL = "<url>"

SPECIALS = (PAD, UNK, USER, HASHTAG, NUMBER, URL)

_URL_RE = re.compile(r"^(https?://|www\.)\S+$", re.IGNORECASE)
_NUMBER_RE = re.compile(r"^[+-]?\d+([.,]\d+)*$")
_STRIP_CHARS = ".,!?;:\"'()[]"


def preprocess_tweet_text(raw):
    """Tokenize a raw tweet into symbol-normalized lowercase tokens."""
    tokens = []
    for piece in raw.split():
        if _URL_RE.match(piece):
            tokens.append(URL)
            continue
        piece = piece.strip(_STRIP_CHARS)
        if not piece:
            continue
        if piece.startswith("@") and len(piece) > 1:
            tokens.append(USER)
        elif piece.startswith("#") and len(piece) > 1:
            tokens.append(HASHTAG)
            tokens.append(piece[1:].lower())
        elif _NUMBER_RE.match(piece):
            tokens.append(NUMBER)
        else:
            tokens.append(piece.lower())
    return tokens


class Vocabulary:
    """Dense token -> index map; the special symbols always occupy 0..5."""

    def __init__(self, tokens=()):
        self._index = {}
        for tok in SPECIALS:
            self._index[tok] = len(self._index)
        for tok in tokens:
            self.add(tok)

    def add(self, token):
        if token not in self._index:
            self._index[token] = len(self._index)
        return self._index[token]

    def lookup(self, token):
        return self._index.get(token, self._index[UNK])

    def encode(self, tokens):
        return [self.lookup(t) for t in tokens]

    def __len__(self):
        return len(self._index)

    def __contains__(self, token):
        return token in self._index

    @classmethod
    def from_texts(cls, texts):
        vocab = cls()
        for text in texts:
            for tok in preprocess_tweet_text(text):
                vocab.add(tok)
        return vocab

    def save(self, path):
        with open(path, "w") as fh:
            for tok, _ in sorted(self._index.items(), key=lambda kv: kv[1]):
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        if tuple(tokens[: len(SPECIALS)]) != SPECIALS:
            raise ValueError(f"{path}: vocabulary file must start with {SPECIALS}")
        vocab = cls()
        for tok in tokens[len(SPECIALS):]:
            vocab.add(tok)
        return vocab


def load_embeddings(path, vocab, dim):
    """Read 'token v1 ... vdim' lines into a (len(vocab), dim) matrix.

    Tokens absent from the file keep zero rows; malformed lines are rejected.
    """
    matrix = np.zeros((len(vocab), dim))
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected token + {dim} floats")
            token = parts[0]
            if token in vocab:
                matrix[vocab.lookup(token)] = [float(v) for v in parts[1:]]
    return matrix


@dataclass
class TextEncoderConfig:
    embedding_dim: int = 100
    hidden_dim: int = 150

    def __post_init__(self):
        if self.embedding_dim <= 0 or self.hidden_dim <= 0:
            raise ValueError("embedding_dim and hidden_dim must be positive")


class TextEncoder(Layer):
    """Embedding table + single-layer LSTM; encodes a batch of token-id lists.

    The encoding of a sequence is the hidden state after its last token; empty
    sequences encode to the zero vector. A linear head turns encodings into
    2-class logits for the text-only classifier.
    """

    def __init__(self, vocab_size, config, rng, embedding_matrix=None):
        self.config = config
        if embedding_matrix is None:
            embed = rng.uniform(-0.05, 0.05, (vocab_size, config.embedding_dim))
        else:
            embed = np.asarray(embedding_matrix, dtype=np.float64)
            if embed.shape != (vocab_size, config.embedding_dim):
                raise ValueError(
                    f"embedding matrix {embed.shape} != ({vocab_size}, {config.embedding_dim})"
                )
        self.embed = Tensor(embed, requires_grad=True)
        self.lstm = LSTM(config.embedding_dim, config.hidden_dim, rng)
        self.head = Dense(config.hidden_dim, 2, rng)

    @staticmethod
    def pad_batch(id_lists):
        """Right-pad to the batch max length; returns (ids (N, T), lengths)."""
        lengths = np.array([len(ids) for ids in id_lists], dtype=np.int64)
        max_len = int(lengths.max()) if len(lengths) else 0
        ids = np.zeros((len(id_lists), max_len), dtype=np.int64)
        for row, seq in enumerate(id_lists):
            ids[row, : len(seq)] = seq
        return ids, lengths

    def encode(self, id_lists):
        """Encode a list of token-id sequences to an (N, hidden_dim) Tensor."""
        ids, lengths = self.pad_batch(id_lists)
        if ids.shape[1] == 0:
            return Tensor(np.zeros((len(id_lists), self.config.hidden_dim)))
        steps = [ops.embedding(self.embed, ids[:, t]) for t in range(ids.shape[1])]
        return self.lstm(steps, lengths)

    def classify(self, id_lists):
        """2-class logits (hate, not-hate order: index 1 = hate)."""
        return self.head(self.encode(id_lists))

    def parameters(self):
        params, _ = collect({"lstm": self.lstm, "head": self.head})
        params["embed"] = self.embed
        return params
