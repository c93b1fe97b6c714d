"""CoNLL column data, vocabularies, casing feature and OOV normalization."""
from __future__ import annotations

import enum
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from .tagscheme import TagScheme, convert_scheme

log = logging.getLogger(__name__)

PADDING = "PADDING_TOKEN"
UNKNOWN = "UNKNOWN_TOKEN"
NUMBER = "NUMBER_TOKEN"
CHAR_PADDING = "<PAD>"
CHAR_UNKNOWN = "<UNK>"

# numbers with an optional sign and '.'/',' group separators: 12, -3, 1,000.5
NUMBER_RE = re.compile(r"^[+-]?\d+(?:[.,]\d+)*$")


class CapCategory(enum.IntEnum):
    NUMERIC = 0
    MAINLY_NUMERIC = 1
    ALL_LOWER = 2
    ALL_UPPER = 3
    INITIAL_UPPER = 4
    CONTAINS_DIGIT = 5
    OTHER = 6

    def one_hot(self) -> np.ndarray:
        v = np.zeros(len(CapCategory))
        v[self] = 1.0
        return v


def capitalization_feature(surface: str) -> CapCategory:
    if not surface:
        raise ValueError("capitalization feature of an empty token")
    n_digits = sum(c.isdigit() for c in surface)
    if n_digits == len(surface):
        return CapCategory.NUMERIC
    if n_digits / len(surface) > 0.5:
        return CapCategory.MAINLY_NUMERIC
    # punctuation is ignored for the case tests, digits are not
    alnum = [c for c in surface if c.isalnum()]
    if alnum and all(c.islower() for c in alnum):
        return CapCategory.ALL_LOWER
    if alnum and all(c.isupper() for c in alnum):
        return CapCategory.ALL_UPPER
    if surface[0].isupper():
        return CapCategory.INITIAL_UPPER
    if n_digits:
        return CapCategory.CONTAINS_DIGIT
    return CapCategory.OTHER


class Vocabulary:
    """Dense text <-> index map. After :meth:`freeze`, lookups never insert."""

    def __init__(self, items: Iterable[str] = ()):
        self._index: dict[str, int] = {}
        self._items: list[str] = []
        self.frozen = False
        for item in items:
            self.add(item)

    def add(self, item: str) -> int:
        idx = self._index.get(item)
        if idx is not None:
            return idx
        if self.frozen:
            raise KeyError(f"vocabulary is frozen; cannot add {item!r}")
        idx = len(self._items)
        self._index[item] = idx
        self._items.append(item)
        return idx

    def freeze(self) -> "Vocabulary":
        self.frozen = True
        return self

    def get(self, item: str, default: int | None = None) -> int | None:
        return self._index.get(item, default)

    def __getitem__(self, item: str) -> int:
        return self._index[item]

    def __contains__(self, item: str) -> bool:
        return item in self._index

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[str]:
        return iter(self._items)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._items == other._items

    def item(self, idx: int) -> str:
        return self._items[idx]

    @property
    def items(self) -> list[str]:
        return list(self._items)

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for i, item in enumerate(self._items):
                f.write(f"{item}\t{i}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        pairs = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                item, _, idx = line.rpartition("\t")
                pairs.append((int(idx), item))
        pairs.sort()
        if [i for i, _ in pairs] != list(range(len(pairs))):
            raise ValueError(f"{path}: indices are not dense")
        return cls(item for _, item in pairs).freeze()


@dataclass(frozen=True)
class Token:
    surface: str
    normalized_id: int
    cap: CapCategory
    char_ids: tuple[int, ...]


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    labels: Mapping[str, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        for task, seq in self.labels.items():
            if len(seq) != len(self.tokens):
                raise ValueError(
                    f"task {task!r}: {len(seq)} labels for {len(self.tokens)} tokens"
                )

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def words(self) -> list[str]:
        return [t.surface for t in self.tokens]


class RawSentence(NamedTuple):
    words: list[str]
    tags: list[str]


def read_conll(path, token_column: int = 0, label_column: int = -1) -> list[RawSentence]:
    """Read whitespace-separated columns; a blank line ends a sentence."""
    sentences = []
    words: list[str] = []
    tags: list[str] = []
    # a token column and a label column at minimum
    need = max(2, token_column + 1, label_column + 1 if label_column >= 0 else -label_column)
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            cols = line.split()
            if not cols:
                if words:
                    sentences.append(RawSentence(words, tags))
                    words, tags = [], []
                continue
            if len(cols) < need:
                raise ValueError(
                    f"{path}:{lineno}: expected at least {need} columns, got {len(cols)}"
                )
            words.append(cols[token_column])
            tags.append(cols[label_column])
    if words:
        sentences.append(RawSentence(words, tags))
    return sentences


def write_conll(path, sentences: Iterable[RawSentence], sep: str = " ") -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in sentences:
            for w, t in zip(s.words, s.tags):
                f.write(f"{w}{sep}{t}\n")
            f.write("\n")


def normalize_token(surface: str, vocab: Vocabulary, train_counts: Mapping[str, int],
                    min_count: int = 50) -> int:
    """Resolve a surface form to a word-vocabulary index.

    Order: exact, lowercased, NUMBER, promotion of frequent training tokens
    (only while ``vocab`` is not frozen), UNKNOWN.
    """
    idx = vocab.get(surface)
    if idx is not None:
        return idx
    lower = surface.lower()
    idx = vocab.get(lower)
    if idx is not None:
        return idx
    if NUMBER_RE.match(surface):
        return vocab[NUMBER]
    if not vocab.frozen and train_counts.get(surface, 0) >= min_count:
        return vocab.add(lower)
    return vocab[UNKNOWN]


def ensure_specials(vocab: Vocabulary) -> None:
    for special in (PADDING, UNKNOWN, NUMBER):
        if special not in vocab:
            vocab.add(special)


@dataclass
class TaggedCorpus:
    train: tuple[Sentence, ...]
    dev: tuple[Sentence, ...]
    test: tuple[Sentence, ...]
    word_vocab: Vocabulary
    char_vocab: Vocabulary
    label_vocabs: dict[str, Vocabulary]
    task_name: str
    scheme: TagScheme = TagScheme.BIO

    @property
    def label_vocab(self) -> Vocabulary:
        return self.label_vocabs[self.task_name]

    def split(self, name: str) -> tuple[Sentence, ...]:
        return {"train": self.train, "dev": self.dev, "test": self.test}[name]

    def tags(self, sentence: Sentence) -> list[str]:
        vocab = self.label_vocab
        return [vocab.item(i) for i in sentence.labels[self.task_name]]


def build_corpora(tasks: Mapping[str, Mapping[str, Sequence[RawSentence]]],
                  word_vocab: Vocabulary | None = None, schemes: Mapping[str, TagScheme] | None = None,
                  min_count: int = 50) -> dict[str, TaggedCorpus]:
    """Build one corpus per task with shared word and character vocabularies.

    ``tasks`` maps task name to ``{"train": ..., "dev": ..., "test": ...}``
    with labels already in the target scheme. ``word_vocab`` (usually from
    the embedding file) is extended with promoted OOV tokens, then frozen;
    without one, a fresh vocabulary is grown from the training data.
    """
    schemes = schemes or {}
    word_vocab = Vocabulary() if word_vocab is None else word_vocab
    ensure_specials(word_vocab)
    counts: Counter[str] = Counter()
    chars = Vocabulary([CHAR_PADDING, CHAR_UNKNOWN])
    for splits in tasks.values():
        for raw in splits["train"]:
            counts.update(raw.words)
            for w in raw.words:
                for ch in w:
                    chars.add(ch)
    chars.freeze()

    # promotion only ever happens on training tokens
    for splits in tasks.values():
        for raw in splits["train"]:
            for w in raw.words:
                normalize_token(w, word_vocab, counts, min_count)
    word_vocab.freeze()

    corpora = {}
    for name, splits in tasks.items():
        labels = Vocabulary()
        for part in ("train", "dev", "test"):
            for raw in splits.get(part, ()):
                for t in raw.tags:
                    labels.add(t)
        labels.freeze()
        built = {}
        for part in ("train", "dev", "test"):
            out = []
            for raw in splits.get(part, ()):
                if not raw.words:
                    continue
                out.append(_encode(raw, name, word_vocab, chars, labels, counts, min_count))
            built[part] = tuple(out)
        corpora[name] = TaggedCorpus(
            train=built["train"], dev=built["dev"], test=built["test"],
            word_vocab=word_vocab, char_vocab=chars, label_vocabs={name: labels},
            task_name=name, scheme=TagScheme.parse(schemes.get(name, TagScheme.BIO)),
        )
    return corpora


def _encode(raw: RawSentence, task: str, word_vocab: Vocabulary, chars: Vocabulary,
            labels: Vocabulary, counts: Mapping[str, int], min_count: int) -> Sentence:
    unk_char = chars[CHAR_UNKNOWN]
    tokens = tuple(
        Token(
            surface=w,
            normalized_id=normalize_token(w, word_vocab, counts, min_count),
            cap=capitalization_feature(w),
            char_ids=tuple(chars.get(ch, unk_char) for ch in w),
        )
        for w in raw.words
    )
    unknown = [t for t in raw.tags if t not in labels]
    if unknown:
        raise KeyError(f"label {unknown[0]!r} not in the label vocabulary")
    return Sentence(tokens, {task: tuple(labels[t] for t in raw.tags)})


def encode_sentences(raws: Sequence[RawSentence], task: str, word_vocab: Vocabulary,
                     char_vocab: Vocabulary, labels: Vocabulary) -> list[Sentence]:
    """Encode against fixed (e.g. checkpointed) vocabularies; empty sentences are dropped."""
    return [_encode(r, task, word_vocab, char_vocab, labels, {}, 1) for r in raws if r.words]


def build_corpus(train, dev, test, task_name: str, word_vocab: Vocabulary | None = None,
                 scheme=TagScheme.BIO, min_count: int = 50) -> TaggedCorpus:
    return build_corpora(
        {task_name: {"train": train, "dev": dev, "test": test}},
        word_vocab, {task_name: TagScheme.parse(scheme)}, min_count,
    )[task_name]


def convert_raw(sentences: Sequence[RawSentence], source, target) -> list[RawSentence]:
    source, target = TagScheme.parse(source), TagScheme.parse(target)
    if source is target or TagScheme.NONE in (source, target):
        return list(sentences)
    return [RawSentence(s.words, convert_scheme(s.tags, source, target)) for s in sentences]


def batch_iterator(split: Sequence, batch_size: int, rng: np.random.Generator) -> Iterator[list]:
    """One epoch: a seeded shuffle partitioned into consecutive batches."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = rng.permutation(len(split))
    for i in range(0, len(order), batch_size):
        yield [split[j] for j in order[i:i + batch_size]]


def load_task_dir(path, target_scheme=None, token_column: int = 0, label_column: int = -1):
    """Read ``train.txt``/``dev.txt``/``test.txt`` from a task directory.

    An optional ``task.json`` may set ``name``, ``scheme`` (the scheme of the
    files), ``token_column`` and ``label_column``. Labels are converted to
    ``target_scheme`` unless either side is NONE. Returns
    ``(name, source_scheme, splits)``.
    """
    import json

    path = Path(path)
    meta = {}
    if (path / "task.json").exists():
        meta = json.loads((path / "task.json").read_text(encoding="utf-8"))
    name = meta.get("name", path.name)
    source = TagScheme.parse(meta.get("scheme", "BIO"))
    tc = meta.get("token_column", token_column)
    lc = meta.get("label_column", label_column)
    target = source if target_scheme is None else TagScheme.parse(target_scheme)
    if source is TagScheme.NONE:
        target = TagScheme.NONE
    splits = {}
    for part in ("train", "dev", "test"):
        f = path / f"{part}.txt"
        if not f.exists():
            raise FileNotFoundError(f"missing {f}")
        splits[part] = convert_raw(read_conll(f, tc, lc), source, target)
    return name, target, splits
