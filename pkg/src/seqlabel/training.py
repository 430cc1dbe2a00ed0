"""Minibatch Adam training with epoch-wise learning-rate decay and early stopping."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import Graph
from .checkpoint import Checkpoint
from .data import TaggedSentence
from .errors import ConfigError, ContractError, NumericalError
from .evaluation import ner_report, token_accuracy
from .layers import DropoutSpec
from .model import Tagger

logger = logging.getLogger(__name__)


@dataclass
class TrainSchedule:
    base_lr: float = 0.0035
    decay: float = 0.005
    batch_size: int = 8
    max_epochs: int = 50
    patience: int | None = 5
    mean_loss: bool = False
    clip_norm: float | None = None

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be positive")
        if self.decay < 0:
            raise ConfigError("decay must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.patience is not None and self.patience < 1:
            raise ConfigError("patience must be >= 1 (or None to disable)")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive")


def lr_at_epoch(sched: TrainSchedule, t: int) -> float:
    """Rate after ``t`` completed epochs: base / (1 + decay * t)."""
    if t < 0:
        raise ContractError("epoch index must be >= 0")
    return sched.base_lr / (1.0 + sched.decay * t)


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: dict, grads: dict, state: OptimizerState, lr: float) -> None:
    """Bias-corrected Adam update of ``params`` in place; ``grads`` are zeroed afterwards."""
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        g[...] = 0.0


def clip_global_norm(grads: dict, max_norm: float) -> float:
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm
    return norm


def accumulate_gradients(model: Tagger, batch, grads: dict, dropout: DropoutSpec | None) -> float:
    """Add each sentence's loss gradient into ``grads``; returns the summed loss."""
    total = 0.0
    for encoded, gold in batch:
        g = Graph()
        bound = model.bind(g)
        loss = model.loss(g, encoded, gold, dropout, bound)
        g.backward(loss)
        value = loss.item()
        if not math.isfinite(value):
            raise NumericalError("training loss is not finite")
        total += value
        for name in grads:
            t = bound[name]
            if t.grad is not None:
                grads[name] += t.grad
    return total


def dev_score(model: Tagger, sentences: Sequence[TaggedSentence], task: str) -> float:
    """Accuracy for ``pos``, span micro-F1 for ``ner``."""
    gold = [s.labels for s in sentences]
    pred = [model.tag(s) for s in sentences]
    if task == "pos":
        return token_accuracy(gold, pred)
    return ner_report(gold, pred).f1


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    dev_score: float | None


@dataclass
class TrainResult:
    best: Checkpoint
    last: Checkpoint
    history: list
    stopped_early: bool = False


class TrainingDiverged(NumericalError):
    def __init__(self, message, best: Checkpoint | None, history):
        super().__init__(message)
        self.best = best
        self.history = history


def _snapshot(model, state, epoch, score, rngs, history, meta) -> Checkpoint:
    return Checkpoint(
        config=model.cfg.to_dict(),
        params={k: v.copy() for k, v in model.params.items()},
        vocabs={
            "words": model.words.to_dict(),
            "chars": model.chars.to_dict(),
            "pos": model.pos.to_dict(),
            "chunks": model.chunks.to_dict(),
        },
        optimizer={
            "t": state.t,
            "m": {k: v.copy() for k, v in state.m.items()},
            "v": {k: v.copy() for k, v in state.v.items()},
        },
        epoch=epoch,
        dev_score=score,
        rng_states={k: copy.deepcopy(r.bit_generator.state) for k, r in rngs.items()},
        history=[vars(h).copy() for h in history],
        meta=dict(meta),
    )


def train(model: Tagger, train_set: Sequence[TaggedSentence], dev_set: Sequence[TaggedSentence],
          sched: TrainSchedule, seed: int = 0, task: str = "ner",
          evaluate: Callable[[Tagger, int], float] | None = None,
          resume: Checkpoint | None = None, meta: dict | None = None,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainResult:
    """Train ``model`` in place and return the best and last checkpoints.

    Each epoch shuffles the training sentences, takes one Adam step per
    ``batch_size`` sentences with summed losses, then scores the dev set.
    Training stops after ``patience`` epochs without strict improvement.
    ``evaluate(model, epoch)`` replaces the dev scoring when given.
    """
    if not train_set:
        raise ContractError("training set is empty")
    has_dev = evaluate is not None or bool(dev_set)
    if not has_dev and sched.patience is not None:
        raise ConfigError("early stopping needs a dev set; pass patience=None to disable it")
    if task not in ("pos", "ner"):
        raise ConfigError(f"unknown task {task!r}")
    meta = dict(meta or {}, task=task, seed=seed)

    encoded = [(model.encode(s), model.encode_labels(s)) for s in train_set]
    shuffle_rng = np.random.default_rng(seed)
    dropout = None
    if model.cfg.dropout_rate > 0:
        dropout = DropoutSpec(model.cfg.dropout_rate, rng_seed=seed + 1)
    rngs = {"shuffle": shuffle_rng}
    if dropout is not None:
        rngs["dropout"] = dropout.rng
    state = OptimizerState()
    history: list = []
    start_epoch = 1
    best: Checkpoint | None = None
    best_score = -math.inf
    if resume is not None:
        state.t = resume.optimizer["t"]
        state.m = {k: v.copy() for k, v in resume.optimizer["m"].items()}
        state.v = {k: v.copy() for k, v in resume.optimizer["v"].items()}
        for k, r in rngs.items():
            r.bit_generator.state = copy.deepcopy(resume.rng_states[k])
        history = [EpochRecord(**h) for h in resume.history]
        start_epoch = resume.epoch + 1
        scored = [h for h in history if h.dev_score is not None]
        if scored:
            best_score = max(h.dev_score for h in scored)

    trainable = sorted(model.trainable)
    grads = {name: np.zeros_like(model.params[name]) for name in trainable}
    since_best = 0
    stopped_early = False
    last = None
    for epoch in range(start_epoch, sched.max_epochs + 1):
        lr = lr_at_epoch(sched, epoch - 1)
        order = shuffle_rng.permutation(len(encoded))
        epoch_loss = 0.0
        try:
            for start in range(0, len(order), sched.batch_size):
                batch = [encoded[i] for i in order[start:start + sched.batch_size]]
                epoch_loss += accumulate_gradients(model, batch, grads, dropout)
                if sched.mean_loss:
                    for g in grads.values():
                        g /= len(batch)
                if sched.clip_norm is not None:
                    clip_global_norm(grads, sched.clip_norm)
                adam_step(model.params, grads, state, lr)
        except NumericalError as exc:
            raise TrainingDiverged(f"epoch {epoch}: {exc}", best, history) from exc

        score = None
        if has_dev:
            score = evaluate(model, epoch) if evaluate is not None else dev_score(model, dev_set, task)
        rec = EpochRecord(epoch, lr, epoch_loss / len(encoded), score)
        history.append(rec)
        logger.info("epoch %d lr %.6g loss %.6f dev %s", epoch, lr, rec.train_loss, score)
        if on_epoch is not None:
            on_epoch(rec)

        last = _snapshot(model, state, epoch, score, rngs, history, meta)
        if not has_dev or score > best_score:
            best_score = score if has_dev else best_score
            best = last
            since_best = 0
        else:
            since_best += 1
            if sched.patience is not None and since_best >= sched.patience:
                stopped_early = True
                break
    if last is None:
        raise ConfigError("nothing to train: resume checkpoint is already at max_epochs")
    if best is None:
        best = last
    return TrainResult(best, last, history, stopped_early)


def restore(ckpt: Checkpoint) -> Tagger:
    """Rebuild a :class:`Tagger` from a checkpoint's config, vocabularies and parameters."""
    from .data import PretrainedEmbeddings, Vocabulary
    from .model import TaggerConfig

    cfg = TaggerConfig.from_dict(ckpt.config)
    words = Vocabulary.from_dict(ckpt.vocabs["words"])
    emb = PretrainedEmbeddings(words, ckpt.params["word_emb"])
    return Tagger(
        cfg, emb,
        Vocabulary.from_dict(ckpt.vocabs["chars"]),
        Vocabulary.from_dict(ckpt.vocabs["pos"]),
        Vocabulary.from_dict(ckpt.vocabs["chunks"]),
        params={k: v.copy() for k, v in ckpt.params.items()},
    )
