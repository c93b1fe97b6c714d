"""Small generated corpora for smoke tests, demos and desk-scale experiments."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .corpus import RawSentence, write_conll

_SYLLABLES = ["ka", "lo", "mi", "ten", "ra", "vo", "sel", "du", "ny", "pe", "gar", "shi", "bo", "tu"]


def _make_words(rng, n, capitalize=False):
    words = set()
    while len(words) < n:
        w = "".join(rng.choice(_SYLLABLES, size=rng.integers(2, 4)))
        words.add(w.capitalize() if capitalize else w)
    return sorted(words)


def lexicon_corpus(n_sentences: int = 20, seed: int = 0, n_classes: int = 4,
                   words_per_class: int = 6, min_len: int = 3, max_len: int = 8):
    """Sentences whose per-token label is a fixed function of the surface form.

    Returns ``(sentences, lexicon)`` with ``lexicon`` mapping word -> label.
    """
    rng = np.random.default_rng(seed)
    classes = [f"C{k}" for k in range(n_classes)]
    words = _make_words(rng, n_classes * words_per_class)
    rng.shuffle(words)
    lexicon = {w: classes[i % n_classes] for i, w in enumerate(words)}
    vocab = sorted(lexicon)
    sentences = []
    for _ in range(n_sentences):
        n = int(rng.integers(min_len, max_len + 1))
        ws = [vocab[i] for i in rng.integers(0, len(vocab), size=n)]
        sentences.append(RawSentence(ws, [lexicon[w] for w in ws]))
    return sentences, lexicon


def segment_corpus(n_sentences: int = 200, seed: int = 0, classes=("PER", "LOC", "ORG")):
    """BIO-labelled sentences with 1-3 token segments drawn from class lexicons.

    Segment words are shared between first and inner positions so that the
    begin/inside decision depends on context, not on the word alone.
    """
    rng = np.random.default_rng(seed)
    fillers = _make_words(rng, 30)
    names = {c: _make_words(rng, 8, capitalize=True) for c in classes}
    triggers = {c: fillers[i] for i, c in enumerate(classes)}
    sentences = []
    for _ in range(n_sentences):
        words, tags = [], []
        for _ in range(int(rng.integers(1, 4))):
            for w in rng.choice(fillers, size=rng.integers(0, 3)):
                words.append(str(w))
                tags.append("O")
            cls = classes[int(rng.integers(len(classes)))]
            if rng.random() < 0.7:
                words.append(triggers[cls])
                tags.append("O")
            span = int(rng.integers(1, 4))
            for k in range(span):
                words.append(str(rng.choice(names[cls])))
                tags.append(("B-" if k == 0 else "I-") + cls)
        for w in rng.choice(fillers, size=rng.integers(0, 3)):
            words.append(str(w))
            tags.append("O")
        sentences.append(RawSentence(words, tags))
    return sentences


def split(sentences, dev_fraction: float = 0.2, test_fraction: float = 0.2):
    n = len(sentences)
    n_test = int(round(n * test_fraction))
    n_dev = int(round(n * dev_fraction))
    n_train = n - n_dev - n_test
    return {"train": sentences[:n_train], "dev": sentences[n_train:n_train + n_dev],
            "test": sentences[n_train + n_dev:]}


def write_embeddings(path, words, dim: int = 20, seed: int = 0, header: bool = False) -> None:
    """Random vectors for the lowercased ``words`` in the text embedding format."""
    rng = np.random.default_rng(seed)
    vocab = sorted({w.lower() for w in words})
    with open(path, "w", encoding="utf-8") as f:
        if header:
            f.write(f"{len(vocab)} {dim}\n")
        for w in vocab:
            vec = rng.uniform(-1, 1, size=dim)
            f.write(w + " " + " ".join(f"{v:.6f}" for v in vec) + "\n")


def write_task_dir(path, splits, name: str, scheme: str = "BIO") -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for part, sents in splits.items():
        write_conll(path / f"{part}.txt", sents)
    (path / "task.json").write_text(json.dumps({"name": name, "scheme": scheme}) + "\n",
                                    encoding="utf-8")
    return path


def all_words(splits) -> list[str]:
    return sorted({w for sents in splits.values() for s in sents for w in s.words})
