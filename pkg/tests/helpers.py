import numpy as np

from seqtag.corpus import build_corpus
from seqtag.embeddings import random_table


def make_corpus(splits, name="seg", scheme="BIO"):
    return build_corpus(splits["train"], splits["dev"], splits["test"], name, None, scheme, 1)


def make_table(corpus, dim=8, seed=0):
    return random_table(corpus.word_vocab, dim, np.random.default_rng(seed))
