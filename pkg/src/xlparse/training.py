"""Losses, the Adam optimiser and the mini-batch training loop."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore
from .conllu import Sentence, Treebank, filter_by_length
from .encoder import RNN

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    dropout: float = 0.33
    max_sentence_length: int = 140
    max_sentences: int | None = None
    epochs: int = 1
    seed: int = 0
    precision: str = "single"
    delexicalized: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_sentence_length < 1:
            raise ValueError("learning rate, batch size and length bound must be positive")
        if self.max_sentences is not None and self.max_sentences < 1:
            raise ValueError("max_sentences must be positive when set")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    @classmethod
    def for_encoder(cls, variant: str, **overrides) -> "TrainConfig":
        """Reference optimiser settings: RNN lr 1e-3 / batch 32 / dropout 0.33,
        self-attention lr 1e-4 / batch 80 / dropout 0.2."""
        if variant == RNN:
            base = dict(learning_rate=0.001, batch_size=32, dropout=0.33)
        else:
            base = dict(learning_rate=0.0001, batch_size=80, dropout=0.2)
        base.update(overrides)
        return cls(**base)


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: ParameterStore, state: AdamState, lr: float,
              names: Sequence[str] | None = None) -> AdamState:
    """Bias-corrected Adam update of every parameter from its ``.grad``."""
    names = list(params) if names is None else list(names)
    missing = [n for n in names if params[n].grad is None]
    if missing:
        raise ValueError(f"no gradient for trainable parameters: {missing[:5]}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name in names:
        p = params[name]
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data -= update.astype(p.data.dtype)
    return state


def graph_loss(parser, batch: Sequence[Sentence], training: bool = False, rng=None):
    """Token-averaged head + label cross-entropy for a graph-decoder parser."""
    if parser.decoder_kind != "graph":
        raise ValueError("graph_loss needs a graph-decoder parser")
    return parser.batch_loss(batch, training, rng)


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    dev_uas: float | None
    dev_las: float | None
    wall_seconds: float


def log_tsv(entries: Sequence[EpochLog], seed: int | None = None) -> str:
    lines = []
    if seed is not None:
        lines.append(f"# seed = {seed}")
    lines.append("epoch\ttrain_loss\tdev_UAS\tdev_LAS\twall_seconds")

    def fmt(x):
        return "NA" if x is None else f"{x:.4f}"

    for e in entries:
        lines.append(f"{e.epoch}\t{e.train_loss:.6f}\t{fmt(e.dev_uas)}\t{fmt(e.dev_las)}\t{e.wall_seconds:.2f}")
    return "\n".join(lines) + "\n"


def train(parser, tb: Treebank, cfg: TrainConfig, dev: Treebank | None = None,
          on_epoch: Callable[[int, object], bool] | None = None):
    """Train ``parser`` in place; returns ``(parser, epoch_logs)``.

    Sentences longer than ``cfg.max_sentence_length`` are dropped first; the
    survivors are then cut to the first ``cfg.max_sentences`` if that is set.
    Batches are reshuffled every epoch from a generator seeded with
    ``cfg.seed``.  With a dev treebank the parameters with the best dev UAS
    are restored at the end.  ``on_epoch(epoch, parser)`` may return True to
    stop early.
    """
    from .evaluation import attachment_scores

    data = filter_by_length(tb, cfg.max_sentence_length).sentences
    if cfg.max_sentences is not None:
        data = data[:cfg.max_sentences]
    if not data:
        raise ValueError("training treebank is empty after length filtering")
    if parser.params.precision != cfg.precision:
        parser.cast(cfg.precision)
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    logs: list[EpochLog] = []
    best_uas, best_params = -1.0, None
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(len(data))
        losses = []
        for b in range(0, len(order), cfg.batch_size):
            batch = [data[i] for i in order[b:b + cfg.batch_size]]
            parser.params.zero_grad()
            loss = parser.batch_loss(batch, True, rng, cfg.delexicalized)
            losses.append(loss.item())
            ad.backward(loss)
            adam_step(parser.params, state, cfg.learning_rate)
        dev_uas = dev_las = None
        if dev is not None and len(dev):
            pred = parser.parse_sentences(dev.sentences, cfg.delexicalized)
            report = attachment_scores(pred, dev.sentences)
            dev_uas, dev_las = report.uas, report.las
            if dev_uas > best_uas:
                best_uas, best_params = dev_uas, parser.params.snapshot()
        entry = EpochLog(epoch, float(np.mean(losses)), dev_uas, dev_las, time.perf_counter() - start)
        logs.append(entry)
        log.info("epoch %d loss %.4f dev UAS %s", epoch, entry.train_loss, dev_uas)
        if on_epoch is not None and on_epoch(epoch, parser):
            break
    if best_params is not None:
        parser.params.load_arrays(best_params)
    parser.params.zero_grad()
    return parser, logs
