"""Wiring from task directories and a config to a trained model."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .config import NetworkConfig
from .corpus import TaggedCorpus, Vocabulary, build_corpora, load_task_dir
from .embeddings import EmbeddingTable, extend_table, freeze_pretrained, load_text_embeddings, random_table
from .tagger import TaggerModel, build_model
from .trainer import MtlConfig, TrainReport, train_multi, train_single

# OOV promotion threshold when pre-trained vectors are present; without
# them every training word gets its own row
PROMOTION_MIN_COUNT = 50


def _words(tasks) -> Vocabulary:
    vocab = Vocabulary()
    for splits in tasks.values():
        for part in splits.values():
            for s in part:
                for w in s.words:
                    vocab.add(w)
                    vocab.add(w.lower())
    return vocab


def prepare(task_dirs: Sequence, config: NetworkConfig) -> tuple[dict[str, TaggedCorpus], EmbeddingTable]:
    """Load task directories into corpora sharing one vocabulary, plus the embedding table."""
    tasks, schemes = {}, {}
    for d in task_dirs:
        name, scheme, splits = load_task_dir(d, config.tag_scheme)
        if name in tasks:
            raise ValueError(f"duplicate task name {name!r} ({d})")
        tasks[name], schemes[name] = splits, scheme
    rng = np.random.default_rng([config.seed, 2])
    if config.embedding_path:
        path = Path(config.embedding_path)
        if not path.exists():
            raise FileNotFoundError(f"embeddings file not found: {path}")
        table, vocab = load_text_embeddings(path, limit_to=_words(tasks), seed=config.seed,
                                            lowercase=config.lowercase_embeddings)
        n_pretrained = len(vocab) - 3
        corpora = build_corpora(tasks, vocab, schemes, PROMOTION_MIN_COUNT)
        table = extend_table(table, vocab, rng)
        if config.freeze_embeddings:
            table = freeze_pretrained(table, n_pretrained)
    else:
        vocab = Vocabulary()
        corpora = build_corpora(tasks, vocab, schemes, min_count=1)
        table = random_table(vocab, config.word_dim, rng)
    return corpora, table


def run_single(task_dir, config: NetworkConfig, max_epochs: int | None = None
               ) -> tuple[TaggerModel, TrainReport]:
    corpora, table = prepare([task_dir], config)
    corpus = next(iter(corpora.values()))
    model = build_model(config, corpus, table)
    return model, train_single(model, corpus, config, max_epochs)


def run_multi(main_dir, aux_dir, config: NetworkConfig, supervision: str = "same_level",
              max_epochs: int | None = None) -> tuple[TaggerModel, TrainReport]:
    corpora, table = prepare([main_dir, aux_dir], config)
    main, aux = list(corpora)
    mtl = MtlConfig(main, aux, supervision)
    model = build_model(config, corpora, table, mtl.levels(config.layers))
    return model, train_multi(model, corpora, mtl, config, max_epochs)
