"""
Overfitting a tiny corpus
=========================

Twenty sentences whose labels depend only on the word. Any working tagger
should memorise them, so this is the first thing to try after changing the
network code.
"""
import numpy as np

from seqtag import synthetic
from seqtag.config import NetworkConfig
from seqtag.corpus import RawSentence, build_corpus, encode_sentences
from seqtag.embeddings import random_table
from seqtag.nn.dropout import DropoutSpec
from seqtag.optim import ADAM_WARM_SCHEDULE
from seqtag.tagger import build_model
from seqtag.trainer import train_single

sentences, lexicon = synthetic.lexicon_corpus(20, seed=0)
print(" ".join(sentences[0].words))
print(" ".join(sentences[0].tags))

# train, dev and test are all the same sentences: dev accuracy is train accuracy
corpus = build_corpus(sentences, sentences, sentences, "lex", None, "NONE", 1)
print(len(corpus.word_vocab), "words,", len(corpus.label_vocab), "labels")

# %%
# A CRF tagger with a character CNN and no dropout.
config = NetworkConfig(classifier="crf", char_rep="cnn", optimizer="adam",
                       lr_schedule=ADAM_WARM_SCHEDULE, batch_size=8,
                       dropout=DropoutSpec("variational", 0.0, 0.0),
                       max_epochs=30, patience=30, seed=0)
table = random_table(corpus.word_vocab, config.word_dim, np.random.default_rng(0))
model = build_model(config, corpus, table)
print(model.parameter_count(), "parameters")

report = train_single(model, corpus, config)
for epoch, (loss, acc) in enumerate(zip(report.train_losses, report.dev_scores), 1):
    print(f"epoch {epoch:2d}  loss {loss:8.4f}  train accuracy {acc:.3f}")

# %%
# Predictions on a new sentence built from the same lexicon.
words = sorted(lexicon)[:6]
new = encode_sentences([RawSentence(words, [lexicon[w] for w in words])], "lex",
                       corpus.word_vocab, corpus.char_vocab, corpus.label_vocab)
tags, _ = model.predict_tags(new)
for w, t in zip(words, tags[0]):
    print(f"{w:10s} {t}  (lexicon says {lexicon[w]})")
