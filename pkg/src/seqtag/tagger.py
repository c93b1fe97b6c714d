"""The end-to-end BiLSTM tagger: embeddings, casing, characters, BiLSTM stack, output layer.

A model may carry several output layers ("heads"), one per task, each reading
the output of a chosen BiLSTM level. Single-task models have one head on the
top level.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import nn
from .config import NetworkConfig, canonical_json
from .corpus import PADDING, CapCategory, Sentence, TaggedCorpus, Vocabulary
from .embeddings import EmbeddingTable
from .nn import charenc, crf
from .nn.dropout import output_mask
from .nn.functional import NonFiniteError
from .tagscheme import TagScheme, repair_invalid

N_CAPS = len(CapCategory)
CHAR_OUT = {"none": 0, "cnn": charenc.CNN_FILTERS, "lstm": 2 * charenc.CHAR_LSTM_UNITS}


@dataclass
class Head:
    task: str
    level: int
    labels: Vocabulary
    scheme: TagScheme


class TaggerModel:
    def __init__(self, config: NetworkConfig, params: dict, word_vocab: Vocabulary,
                 char_vocab: Vocabulary, heads: Mapping[str, Head], word_trainable: np.ndarray):
        self.config = config
        self.params = params
        self.word_vocab = word_vocab
        self.char_vocab = char_vocab
        self.heads = dict(heads)
        self.word_trainable = word_trainable
        self.pad_id = word_vocab[PADDING]

    @property
    def word_dim(self) -> int:
        return self.params["word_emb"].shape[1]

    @property
    def token_dim(self) -> int:
        return self.word_dim + N_CAPS + CHAR_OUT[self.config.char_rep]

    @property
    def main_task(self) -> str:
        return next(iter(self.heads))

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def lstm_names(self, level: int) -> list[str]:
        return [f"lstm{level}.{d}.{w}" for d in ("fw", "bw") for w in ("W", "U", "b")]

    def head_names(self, task: str) -> list[str]:
        names = [f"out.{task}.W", f"out.{task}.b"]
        if self.config.classifier == "crf":
            names.append(f"out.{task}.trans")
        return names

    def shared_names(self, level: int) -> list[str]:
        """Embedding, character encoder and BiLSTM parameters up to ``level``."""
        names = ["word_emb"] + [n for n in self.params if n.startswith("char")]
        for lvl in range(1, level + 1):
            names += self.lstm_names(lvl)
        return names

    def task_parameter_names(self, task: str) -> list[str]:
        return self.shared_names(self.heads[task].level) + self.head_names(task)

    # ------------------------------------------------------------------ forward

    def _inputs(self, sentences: Sequence[Sentence]):
        B = len(sentences)
        lengths = np.array([len(s) for s in sentences])
        if B == 0 or lengths.min() < 1:
            raise ValueError("cannot tag an empty sentence")
        T = int(lengths.max())
        ids = np.full((T, B), self.pad_id, dtype=np.int64)
        caps = np.zeros((T, B, N_CAPS))
        for b, s in enumerate(sentences):
            for t, tok in enumerate(s.tokens):
                ids[t, b] = tok.normalized_id
                caps[t, b, tok.cap] = 1.0
        return ids, caps, lengths, T, B

    def _char_inputs(self, sentences, T, B):
        positions = [(t, b) for b, s in enumerate(sentences) for t in range(len(s))]
        words = [sentences[b].tokens[t].char_ids for t, b in positions]
        wl = np.array([max(len(w), 1) for w in words])
        cids = np.zeros((len(words), int(wl.max())), dtype=np.int64)
        for n, w in enumerate(words):
            cids[n, :len(w)] = w
        return positions, cids, wl

    def forward(self, sentences: Sequence[Sentence], task: str | None = None,
                rng: np.random.Generator | None = None):
        """Emission scores ``(T, B, K)`` for ``task``; dropout only when ``rng`` is given."""
        task = task or self.main_task
        head = self.heads[task]
        p = self.params
        ids, caps, lengths, T, B = self._inputs(sentences)
        parts = [p["word_emb"][ids], caps]
        cache = {"ids": ids, "lengths": lengths, "T": T, "B": B, "task": task}
        rep = self.config.char_rep
        if rep != "none":
            positions, cids, wl = self._char_inputs(sentences, T, B)
            xc = p["char_emb"][cids]
            if rep == "cnn":
                enc, cc = charenc.char_cnn_forward({"W": p["char.W"], "b": p["char.b"]}, xc, wl)
            else:
                cparams = {d: {w: p[f"char.{d}.{w}"] for w in ("W", "U", "b")} for d in ("fw", "bw")}
                enc, cc = charenc.char_bilstm_forward(cparams, xc, wl)
            tb = tuple(np.array(positions).T)
            char_feats = np.zeros((T, B, enc.shape[1]))
            char_feats[tb] = enc
            parts.append(char_feats)
            cache.update(char=(cc, cids, tb))
        x = np.concatenate(parts, axis=-1)
        drop = self.config.dropout if rng is not None else None
        in_mask = output_mask(drop, x.shape, rng)
        if in_mask is not None:
            x = x * in_mask
        cache["in_mask"] = in_mask
        layer_caches = []
        for level in range(1, head.level + 1):
            fw = {w: p[f"lstm{level}.fw.{w}"] for w in ("W", "U", "b")}
            bw = {w: p[f"lstm{level}.bw.{w}"] for w in ("W", "U", "b")}
            x, lc = nn.bilstm_forward(fw, bw, x, lengths, drop, rng)
            layer_caches.append(lc)
        cache["layers"] = layer_caches
        cache["top"] = x
        scores = x @ p[f"out.{task}.W"] + p[f"out.{task}.b"]
        return scores, cache

    # ------------------------------------------------------------------ loss

    def loss_and_gradients(self, sentences: Sequence[Sentence], task: str | None = None,
                           rng: np.random.Generator | None = None):
        """Mean sentence loss over the batch and gradients for every parameter on the path.

        Softmax sentence loss is the mean token cross-entropy; CRF sentence
        loss is the sentence negative log-likelihood.
        """
        task = task or self.main_task
        scores, cache = self.forward(sentences, task, rng)
        lengths, T, B = cache["lengths"], cache["T"], cache["B"]
        p = self.params
        d_scores = np.zeros_like(scores)
        grads: dict[str, np.ndarray] = {}
        total = 0.0
        if self.config.classifier == "crf":
            trans = p[f"out.{task}.trans"]
            d_trans = np.zeros_like(trans)
            for b, s in enumerate(sentences):
                n = lengths[b]
                loss, d_em, d_tr = nn.crf_negative_log_likelihood(scores[:n, b], s.labels[task], trans)
                total += loss
                d_scores[:n, b] = d_em / B
                d_trans += d_tr / B
            K = trans.shape[0] - 2
            grads[f"out.{task}.trans"] = d_trans * crf.transition_grad_mask(K)
        else:
            for b, s in enumerate(sentences):
                n = lengths[b]
                loss, d_logits, _, _ = nn.softmax_cross_entropy(scores[:n, b], s.labels[task])
                total += loss
                d_scores[:n, b] = d_logits / B
        loss = total / B
        if not np.isfinite(loss):
            raise NonFiniteError(f"non-finite loss (config {self.config.fingerprint()})")

        top = cache["top"]
        grads[f"out.{task}.W"] = top.reshape(T * B, -1).T @ d_scores.reshape(T * B, -1)
        grads[f"out.{task}.b"] = d_scores.sum(axis=(0, 1))
        dx = d_scores @ p[f"out.{task}.W"].T
        for level in range(len(cache["layers"]), 0, -1):
            g_f, g_b, dx = nn.bilstm_backward(cache["layers"][level - 1], dx)
            for w in ("W", "U", "b"):
                grads[f"lstm{level}.fw.{w}"] = g_f[w]
                grads[f"lstm{level}.bw.{w}"] = g_b[w]
        if cache["in_mask"] is not None:
            dx = dx * cache["in_mask"]

        wd = self.word_dim
        d_word = np.zeros_like(p["word_emb"])
        np.add.at(d_word, cache["ids"].ravel(), dx[..., :wd].reshape(-1, wd))
        d_word[~self.word_trainable] = 0.0
        grads["word_emb"] = d_word

        if "char" in cache:
            cc, cids, tb = cache["char"]
            d_enc = dx[..., wd + N_CAPS:][tb]
            if self.config.char_rep == "cnn":
                g, d_xc = charenc.char_cnn_backward(cc, d_enc)
                grads["char.W"], grads["char.b"] = g["W"], g["b"]
            else:
                g, d_xc = charenc.char_bilstm_backward(cc, d_enc)
                for d in ("fw", "bw"):
                    for w in ("W", "U", "b"):
                        grads[f"char.{d}.{w}"] = g[d][w]
            d_char = np.zeros_like(p["char_emb"])
            np.add.at(d_char, cids.ravel(), d_xc.reshape(-1, d_xc.shape[-1]))
            grads["char_emb"] = d_char
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient for {name} (config {self.config.fingerprint()})")
        return loss, grads

    # ------------------------------------------------------------------ predict

    def predict_ids(self, sentences: Sequence[Sentence], task: str | None = None) -> list[list[int]]:
        task = task or self.main_task
        scores, cache = self.forward(sentences, task)
        out = []
        for b, n in enumerate(cache["lengths"]):
            em = scores[:n, b]
            if self.config.classifier == "crf":
                path, _ = nn.crf_viterbi(em, self.params[f"out.{task}.trans"])
            else:
                path = [int(k) for k in em.argmax(axis=1)]
            out.append(path)
        return out

    def predict_tags(self, sentences: Sequence[Sentence], task: str | None = None,
                     repair: bool = True, batch_size: int = 64):
        """Tag strings per sentence and the number of sentences that needed repair."""
        task = task or self.main_task
        head = self.heads[task]
        tags, repaired = [], 0
        for i in range(0, len(sentences), batch_size):
            for path in self.predict_ids(sentences[i:i + batch_size], task):
                seq = [head.labels.item(k) for k in path]
                if repair:
                    seq, n = repair_invalid(seq, head.scheme, self.config.repair)
                    repaired += n > 0
                tags.append(seq)
        return tags, repaired


def predict(model: TaggerModel, sentence: Sentence, task: str | None = None) -> list[str]:
    if len(sentence) == 0:
        raise ValueError("cannot tag an empty sentence")
    return model.predict_tags([sentence], task)[0][0]


def sentence_loss_and_gradients(model: TaggerModel, sentence: Sentence, task: str | None = None):
    return model.loss_and_gradients([sentence], task)


def _init_params(config: NetworkConfig, embeddings: EmbeddingTable, n_chars: int,
                 heads: Mapping[str, Head]) -> dict:
    rng = np.random.default_rng(config.seed)
    params = {"word_emb": embeddings.matrix.astype(np.float64, copy=True)}
    if config.char_rep != "none":
        params["char_emb"] = rng.uniform(-0.5, 0.5, size=(n_chars, charenc.CHAR_DIM))
        if config.char_rep == "cnn":
            cnn = charenc.init_char_cnn(rng)
            params["char.W"], params["char.b"] = cnn["W"], cnn["b"]
        else:
            bl = charenc.init_char_bilstm(rng)
            for d in ("fw", "bw"):
                for w in ("W", "U", "b"):
                    params[f"char.{d}.{w}"] = bl[d][w]
    in_dim = embeddings.dim + N_CAPS + CHAR_OUT[config.char_rep]
    for level, units in enumerate(config.units_per_layer, 1):
        for d in ("fw", "bw"):
            lp = nn.init_lstm(rng, in_dim, units)
            for w in ("W", "U", "b"):
                params[f"lstm{level}.{d}.{w}"] = lp[w]
        in_dim = 2 * units
    for task, head in heads.items():
        width = 2 * config.units_per_layer[head.level - 1]
        K = len(head.labels)
        dense = nn.init_dense(rng, width, K)
        params[f"out.{task}.W"], params[f"out.{task}.b"] = dense["W"], dense["b"]
        if config.classifier == "crf":
            params[f"out.{task}.trans"] = crf.init_transitions(K)
    return params


def build_model(config: NetworkConfig, corpus: TaggedCorpus | Mapping[str, TaggedCorpus],
                embeddings: EmbeddingTable, levels: Mapping[str, int] | None = None) -> TaggerModel:
    """Construct a freshly initialized model; deterministic under ``config.seed``.

    ``corpus`` may be a mapping of task name to corpus (all sharing word and
    character vocabularies) for a multi-task model; ``levels`` then gives
    the BiLSTM level each task's output layer reads (default: top).
    """
    corpora = {corpus.task_name: corpus} if isinstance(corpus, TaggedCorpus) else dict(corpus)
    first = next(iter(corpora.values()))
    for c in corpora.values():
        if c.word_vocab is not first.word_vocab and c.word_vocab != first.word_vocab:
            raise ValueError("multi-task corpora must share one word vocabulary")
    if len(embeddings) != len(first.word_vocab):
        raise ValueError(
            f"embedding table has {len(embeddings)} rows for {len(first.word_vocab)} words"
        )
    levels = dict(levels or {})
    heads = {}
    for task, c in corpora.items():
        labels = c.label_vocabs[task]
        if len(labels) == 0:
            raise ValueError(f"task {task!r} has no labels")
        level = levels.get(task, config.layers)
        if not 1 <= level <= config.layers:
            raise ValueError(f"task {task!r}: level {level} outside 1..{config.layers}")
        heads[task] = Head(task, level, labels, c.scheme)
    params = _init_params(config, embeddings, len(first.char_vocab), heads)
    return TaggerModel(config, params, first.word_vocab, first.char_vocab, heads,
                       embeddings.trainable.copy())


# ---------------------------------------------------------------------- checkpoint

MAGIC = b"SQTL"
FORMAT_VERSION = 1


def save_checkpoint(model: TaggerModel, path) -> None:
    """Binary container: magic, version, config JSON, manifest JSON, float64 LE blocks."""
    arrays = dict(model.params)
    arrays["word_emb.trainable"] = model.word_trainable.astype(np.float64)
    entries, offset = [], 0
    for name in sorted(arrays):
        a = arrays[name]
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        offset += a.size * 8
    manifest = {
        "params": entries,
        "word_vocab": model.word_vocab.items,
        "char_vocab": model.char_vocab.items,
        "heads": [{"task": h.task, "level": h.level, "labels": h.labels.items,
                   "scheme": h.scheme.value} for h in model.heads.values()],
    }
    cfg = model.config.to_json().encode("utf-8")
    man = canonical_json(manifest).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<Q", len(cfg)))
        f.write(cfg)
        f.write(struct.pack("<Q", len(man)))
        f.write(man)
        for name in sorted(arrays):
            f.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())


def load_checkpoint(path) -> TaggerModel:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 8
    (n,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    config = NetworkConfig.from_json(data[pos:pos + n].decode("utf-8"))
    pos += n
    (n,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    manifest = json.loads(data[pos:pos + n].decode("utf-8"))
    pos += n
    arrays = {}
    for e in manifest["params"]:
        size = int(np.prod(e["shape"], dtype=np.int64))
        start = pos + e["offset"]
        arrays[e["name"]] = np.frombuffer(data, dtype="<f8", count=size, offset=start) \
            .reshape(e["shape"]).astype(np.float64)
    trainable = arrays.pop("word_emb.trainable").astype(bool)
    heads = {}
    for h in manifest["heads"]:
        heads[h["task"]] = Head(h["task"], h["level"], Vocabulary(h["labels"]).freeze(),
                                TagScheme.parse(h["scheme"]))
    return TaggerModel(config, arrays, Vocabulary(manifest["word_vocab"]).freeze(),
                       Vocabulary(manifest["char_vocab"]).freeze(), heads, trainable)
