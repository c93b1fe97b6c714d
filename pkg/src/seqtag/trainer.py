"""Training loops: single task with early stopping, and two-task MTL."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .config import NetworkConfig, canonical_json
from .corpus import TaggedCorpus, batch_iterator
from .nn.functional import NonFiniteError
from .optim import Optimizer, apply_policy, scheduled_lr
from .tagger import TaggerModel
from .tagscheme import TagScheme, entity_f1, token_accuracy

log = logging.getLogger(__name__)


@dataclass
class TrainReport:
    dev_scores: list = field(default_factory=list)
    test_scores: list = field(default_factory=list)
    train_losses: list = field(default_factory=list)
    best_dev_epoch: int = 0
    dev_at_best: float = 0.0
    test_at_best_dev: float = 0.0
    epochs_run: int = 0
    wall_time: float = 0.0
    diverged: bool = False
    task: str = ""
    config: dict | None = None

    def to_json(self, with_time: bool = True) -> str:
        d = asdict(self)
        if not with_time:
            d.pop("wall_time")
        return canonical_json(d)


@dataclass(frozen=True)
class MtlConfig:
    main_task: str
    aux_task: str
    supervision: str = "same_level"

    def __post_init__(self):
        if self.supervision not in ("same_level", "different_level"):
            raise ValueError(f"supervision {self.supervision!r} not in (same_level, different_level)")
        if self.main_task == self.aux_task:
            raise ValueError("main and auxiliary task must differ")

    def levels(self, layers: int) -> dict:
        if self.supervision == "different_level":
            if layers < 2:
                raise ValueError("different-level supervision needs at least 2 stacked layers")
            return {self.main_task: layers, self.aux_task: 1}
        return {self.main_task: layers, self.aux_task: layers}


class EarlyStopping:
    """Tracks the best dev epoch; stop once ``patience`` epochs in a row failed to improve."""

    def __init__(self, patience: int = 5):
        self.patience = patience
        self.best_epoch = 0
        self.best_score = -math.inf

    def update(self, epoch: int, score: float) -> bool:
        """Record a dev score; True means stop now."""
        if score > self.best_score:
            self.best_score = score
            self.best_epoch = epoch
        return epoch - self.best_epoch >= self.patience


def evaluate(model: TaggerModel, sentences: Sequence, task: str | None = None,
             scheme: TagScheme | None = None) -> float:
    """Token accuracy for NONE-scheme tasks, entity F1 otherwise (after repair)."""
    task = task or model.main_task
    head = model.heads[task]
    scheme = scheme or head.scheme
    if not sentences:
        return 0.0
    pred, _ = model.predict_tags(sentences, task)
    gold = [[head.labels.item(i) for i in s.labels[task]] for s in sentences]
    if scheme is TagScheme.NONE:
        return token_accuracy(gold, pred)
    return entity_f1(gold, pred, scheme).f1


def _epoch_lr(config: NetworkConfig, optimizer: Optimizer, epoch: int) -> float:
    if config.lr_schedule is not None:
        return scheduled_lr(config.lr_schedule, epoch)
    return optimizer.lr


def make_optimizer(config: NetworkConfig) -> Optimizer:
    return Optimizer(config.optimizer, lr=config.learning_rate)


def _train_step(model, optimizer, config, batch, task, rng, lr):
    loss, grads = model.loss_and_gradients(batch, task, rng)
    names = set(model.task_parameter_names(task))
    grads = {k: v for k, v in grads.items() if k in names}
    grads = apply_policy(grads, config.gradient_policy)
    optimizer.step(model.params, grads, lr)
    return loss


def train_single(model: TaggerModel, corpus: TaggedCorpus, config: NetworkConfig | None = None,
                 max_epochs: int | None = None) -> TrainReport:
    """Mini-batch training with early stopping on the dev score.

    A non-finite loss ends the run and marks the report as diverged with
    score 0; it is not raised.
    """
    config = config or model.config
    max_epochs = max_epochs or config.max_epochs
    task = corpus.task_name
    rng = np.random.default_rng([config.seed, 1])
    optimizer = make_optimizer(config)
    stopper = EarlyStopping(config.patience)
    report = TrainReport(task=task, config=config.to_dict())
    start = time.perf_counter()
    for epoch in range(1, max_epochs + 1):
        lr = _epoch_lr(config, optimizer, epoch)
        losses = []
        try:
            for batch in batch_iterator(corpus.train, config.batch_size, rng):
                losses.append(_train_step(model, optimizer, config, batch, task, rng, lr))
        except NonFiniteError as exc:
            log.warning("run diverged in epoch %d: %s", epoch, exc)
            report.diverged = True
            report.epochs_run = epoch
            report.test_at_best_dev = 0.0
            report.dev_at_best = 0.0
            break
        report.train_losses.append(float(np.mean(losses)))
        dev = evaluate(model, corpus.dev, task)
        test = evaluate(model, corpus.test, task)
        report.dev_scores.append(dev)
        report.test_scores.append(test)
        report.epochs_run = epoch
        stop = stopper.update(epoch, dev)
        report.best_dev_epoch = stopper.best_epoch
        report.dev_at_best = report.dev_scores[stopper.best_epoch - 1]
        report.test_at_best_dev = report.test_scores[stopper.best_epoch - 1]
        log.debug("epoch %d loss %.4f dev %.4f test %.4f", epoch, report.train_losses[-1], dev, test)
        if stop:
            break
    report.wall_time = time.perf_counter() - start
    return report


def mtl_schedule(main_size: int, aux_size: int, batch_size: int, rng: np.random.Generator):
    """One epoch of ``(task, indices)`` pairs alternating main, aux, main, aux, ...

    The epoch covers the main data once. The auxiliary stream supplies as
    many examples as the main task: a random subset when aux is larger,
    reshuffled repetitions when it is smaller.
    """
    if main_size < 1 or aux_size < 1:
        raise ValueError("both tasks need at least one training sentence")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    main_order = rng.permutation(main_size)
    reps = -(-main_size // aux_size)
    aux_stream = np.concatenate([rng.permutation(aux_size) for _ in range(reps)])[:main_size]
    schedule = []
    for i in range(0, main_size, batch_size):
        schedule.append(("main", main_order[i:i + batch_size]))
        schedule.append(("aux", aux_stream[i:i + batch_size]))
    return schedule


def train_multi(model: TaggerModel, corpora: Mapping[str, TaggedCorpus], mtl: MtlConfig,
                config: NetworkConfig | None = None, max_epochs: int | None = None) -> TrainReport:
    """Alternate main/aux batches; model selection on the main task's dev score.

    Each batch updates its own output layer plus the shared layers up to
    that task's supervision level.
    """
    config = config or model.config
    max_epochs = max_epochs or config.max_epochs
    main, aux = corpora[mtl.main_task], corpora[mtl.aux_task]
    rng = np.random.default_rng([config.seed, 1])
    optimizer = make_optimizer(config)
    stopper = EarlyStopping(config.patience)
    report = TrainReport(task=mtl.main_task, config=config.to_dict())
    start = time.perf_counter()
    names = {"main": mtl.main_task, "aux": mtl.aux_task}
    data = {"main": main.train, "aux": aux.train}
    for epoch in range(1, max_epochs + 1):
        lr = _epoch_lr(config, optimizer, epoch)
        losses = []
        try:
            for which, idx in mtl_schedule(len(main.train), len(aux.train), config.batch_size, rng):
                batch = [data[which][i] for i in idx]
                loss = _train_step(model, optimizer, config, batch, names[which], rng, lr)
                if which == "main":
                    losses.append(loss)
        except NonFiniteError as exc:
            log.warning("multi-task run diverged in epoch %d: %s", epoch, exc)
            report.diverged = True
            report.epochs_run = epoch
            report.test_at_best_dev = report.dev_at_best = 0.0
            break
        report.train_losses.append(float(np.mean(losses)))
        dev = evaluate(model, main.dev, mtl.main_task)
        test = evaluate(model, main.test, mtl.main_task)
        report.dev_scores.append(dev)
        report.test_scores.append(test)
        report.epochs_run = epoch
        stop = stopper.update(epoch, dev)
        report.best_dev_epoch = stopper.best_epoch
        report.dev_at_best = report.dev_scores[stopper.best_epoch - 1]
        report.test_at_best_dev = report.test_scores[stopper.best_epoch - 1]
        if stop:
            break
    report.wall_time = time.perf_counter() - start
    return report


def seed_sensitivity(scores: Sequence[float]) -> dict:
    """Median and max absolute pairwise difference between runs of one config."""
    s = np.asarray(scores, dtype=np.float64)
    if len(s) < 2:
        return {"median": 0.0, "max": 0.0, "n": len(s)}
    i, j = np.triu_indices(len(s), 1)
    diffs = np.abs(s[i] - s[j])
    return {"median": float(np.median(diffs)), "max": float(diffs.max()), "n": len(s)}
