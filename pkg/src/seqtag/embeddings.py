"""Pre-trained word vectors in the plain text format (``word v1 ... vD``)."""
from __future__ import annotations

import gzip
import logging
from dataclasses import dataclass

import numpy as np

from .corpus import NUMBER, PADDING, UNKNOWN, Vocabulary

log = logging.getLogger(__name__)

INIT_RANGE = 0.25


@dataclass
class EmbeddingTable:
    matrix: np.ndarray  # (vocab size, dim)
    trainable: np.ndarray  # (vocab size,) bool

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.matrix.copy(), self.trainable.copy())


def _open(path):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def load_text_embeddings(path, limit_to: Vocabulary | None = None, seed: int = 0,
                         lowercase: bool = False) -> tuple[EmbeddingTable, Vocabulary]:
    """Read a text embedding file and append random rows for the special tokens.

    ``limit_to`` keeps only words present in that vocabulary (after
    lowercasing when ``lowercase`` is set). The special rows are drawn
    uniformly from [-0.25, 0.25] with ``seed``.
    """
    vocab = Vocabulary()
    rows = []
    dim = None
    with _open(path) as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                dim = int(parts[1])
                continue
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            if len(values) != dim or dim == 0:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(values)}")
            if lowercase:
                word = word.lower()
            if limit_to is not None and word not in limit_to:
                continue
            if word in vocab:
                log.warning("%s:%d: duplicate word %r, keeping the first vector", path, lineno, word)
                continue
            vocab.add(word)
            rows.append(np.array(values, dtype=np.float64))
    if dim is None:
        raise ValueError(f"{path}: no vectors found")
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    table = EmbeddingTable(matrix, np.ones(len(rows), dtype=bool))
    for special in (PADDING, UNKNOWN, NUMBER):
        vocab.add(special)
    table = extend_table(table, vocab, np.random.default_rng(seed))
    return table, vocab


def extend_table(table: EmbeddingTable, vocab: Vocabulary, rng: np.random.Generator) -> EmbeddingTable:
    """Append random rows for vocabulary entries the table does not cover yet."""
    missing = len(vocab) - len(table)
    if missing <= 0:
        return table
    extra = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(missing, table.dim))
    return EmbeddingTable(
        np.vstack([table.matrix, extra]),
        np.concatenate([table.trainable, np.ones(missing, dtype=bool)]),
    )


def random_table(vocab: Vocabulary, dim: int, rng: np.random.Generator) -> EmbeddingTable:
    return extend_table(EmbeddingTable(np.zeros((0, dim)), np.zeros(0, dtype=bool)), vocab, rng)


def freeze_pretrained(table: EmbeddingTable, n_pretrained: int) -> EmbeddingTable:
    trainable = table.trainable.copy()
    trainable[:n_pretrained] = False
    return EmbeddingTable(table.matrix, trainable)


def lookup(table: EmbeddingTable | np.ndarray, ids) -> np.ndarray:
    matrix = table.matrix if isinstance(table, EmbeddingTable) else table
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= matrix.shape[0]):
        bad = ids[(ids < 0) | (ids >= matrix.shape[0])][0]
        raise IndexError(f"embedding id {bad} out of range for {matrix.shape[0]} rows")
    return matrix[ids]


def lookup_backward(table: EmbeddingTable | np.ndarray, ids, upstream: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the table; rows accumulate, frozen rows stay zero."""
    matrix = table.matrix if isinstance(table, EmbeddingTable) else table
    ids = np.asarray(ids, dtype=np.int64).ravel()
    grad = np.zeros_like(matrix)
    np.add.at(grad, ids, upstream.reshape(len(ids), -1))
    if isinstance(table, EmbeddingTable):
        grad[~table.trainable] = 0.0
    return grad
