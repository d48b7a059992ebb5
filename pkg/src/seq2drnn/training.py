"""Corpus ingestion, minibatch training with early stopping, loss-curve logging."""

from __future__ import annotations

import csv
import io
import logging
import math
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .autodiff import Adam, Tape
from .config import TrainConfig
from .model import Encoded, Example, TranslationModel, make_example
from .treebank import TreebankParseError, parse_brackets
from .vocab import Vocabulary, build_vocab

log = logging.getLogger(__name__)

CURVE_FIELDS = ("epoch", "train_label", "train_topo_a", "train_topo_f", "train_total", "valid_total", "wall_seconds")


class CorpusError(ValueError):
    """Bad corpus input; ``line`` is 1-based."""

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        where = f"{path}:" if path else ""
        where += f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


class TrainingDiverged(RuntimeError):
    pass


# -- corpora ------------------------------------------------------------------


def read_lines(path: str | Path) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise CorpusError(f"no such file: {path}") from None


def read_tree_file(path: str | Path) -> list:
    trees = []
    for lineno, line in enumerate(read_lines(path), 1):
        if not line.strip():
            raise CorpusError("empty line where a tree was expected", lineno, str(path))
        try:
            trees.append(parse_brackets(line))
        except TreebankParseError as exc:
            raise CorpusError(str(exc), lineno, str(path)) from None
    return trees


def read_parallel(src_path: Optional[str | Path], tree_path: str | Path, strip_pos: bool = False) -> list[Example]:
    """Line-aligned source sentences and target trees.

    With ``src_path=None`` the source is the tree's own yield (parser mode).
    """
    trees = read_tree_file(tree_path)
    if src_path is None:
        return [make_example(t.leaves(), t, strip_pos) for t in trees]
    sources = read_lines(src_path)
    for lineno in range(1, min(len(sources), len(trees)) + 1):
        if not sources[lineno - 1].split():
            raise CorpusError("empty source sentence", lineno, str(src_path))
    if len(sources) != len(trees):
        bad = min(len(sources), len(trees)) + 1
        raise CorpusError(f"corpora misaligned: {len(sources)} source lines vs {len(trees)} trees", bad)
    return [make_example(s.split(), t, strip_pos) for s, t in zip(sources, trees)]


def vocab_for(examples: Sequence[Example], config: TrainConfig) -> Vocabulary:
    return build_vocab((e.source for e in examples), (e.tree for e in examples),
                       config.source_vocab, config.target_vocab)


# -- early stopping -------------------------------------------------------------


class EarlyStopping:
    """Stop after ``patience`` consecutive epochs without a new best."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, value: float) -> bool:
        """Record ``value`` for ``epoch``; True means stop now."""
        if value < self.best:
            self.best, self.best_epoch, self.bad_epochs = value, epoch, 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


# -- training -------------------------------------------------------------------


@dataclass
class EpochStats:
    label: float = 0.0
    leaf: float = 0.0
    sibling: float = 0.0
    total: float = 0.0
    count: int = 0

    def add(self, loss) -> None:
        self.label += loss.label
        self.leaf += loss.leaf
        self.sibling += loss.sibling
        self.total += loss.total.item()
        self.count += 1

    def mean(self, attr: str) -> float:
        return getattr(self, attr) / max(self.count, 1)


@dataclass
class TrainResult:
    model: TranslationModel
    curve: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def curve_csv(self) -> str:
        return curve_to_csv(self.curve)


def curve_to_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CURVE_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in CURVE_FIELDS})
    return buf.getvalue()


def evaluate(model: TranslationModel, data: Sequence[Encoded]) -> EpochStats:
    stats = EpochStats()
    for enc in data:
        stats.add(model.loss(enc))
    return stats


def train(config: TrainConfig, train_set: Sequence[Example], valid_set: Sequence[Example],
          vocab: Optional[Vocabulary] = None, curve_path: Optional[str | Path] = None,
          on_epoch_end: Optional[Callable[[int, TranslationModel, dict], bool]] = None) -> TrainResult:
    """Train with Adam on shuffled minibatches, keeping the best-validation parameters.

    Gradients of the examples in a minibatch are summed. ``on_epoch_end`` may
    return True to stop; the loss curve row for the epoch is passed to it.
    """
    if not train_set:
        raise CorpusError("empty training corpus")
    vocab = vocab or vocab_for(train_set, config)
    model = TranslationModel(config, vocab)
    train_data = [model.encode_example(e) for e in train_set]
    valid_data = [model.encode_example(e) for e in valid_set] or train_data
    params = model.parameters()
    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.epsilon)
    order_rng = random.Random(config.seed)
    stopper = EarlyStopping(config.patience)
    best = [p.data.copy() for p in params]
    result = TrainResult(model)
    start = time.perf_counter()
    log.info("training %s on %d examples (%d parameters)", config.arch, len(train_data),
             sum(p.data.size for p in params))

    for epoch in range(1, config.max_epochs + 1):
        order = list(range(len(train_data)))
        order_rng.shuffle(order)
        stats = EpochStats()
        for b, lo in enumerate(range(0, len(order), config.batch_size), 1):
            for k in order[lo : lo + config.batch_size]:
                with Tape() as tape:
                    loss = model.loss(train_data[k])
                value = loss.total.item()
                if not math.isfinite(value):
                    raise TrainingDiverged(f"non-finite loss in epoch {epoch}, batch {b} (example {k + 1})")
                tape.backward(loss.total)
                stats.add(loss)
            opt.step()
        valid = evaluate(model, valid_data)
        row = {
            "epoch": epoch,
            "train_label": stats.mean("label"),
            "train_topo_a": stats.mean("leaf"),
            "train_topo_f": stats.mean("sibling"),
            "train_total": stats.mean("total"),
            "valid_total": valid.mean("total"),
            "wall_seconds": round(time.perf_counter() - start, 3) if config.log_wall_time else 0.0,
        }
        result.curve.append(row)
        log.info("epoch %d train %.4f valid %.4f", epoch, row["train_total"], row["valid_total"])
        if curve_path is not None:
            Path(curve_path).write_text(curve_to_csv(result.curve), encoding="utf-8")
        stop = stopper.update(epoch, row["valid_total"])
        if stopper.best_epoch == epoch:
            best = [p.data.copy() for p in params]
        if on_epoch_end is not None and on_epoch_end(epoch, model, row):
            break
        if stop:
            result.stopped_early = True
            log.info("early stop after epoch %d; best epoch %d", epoch, stopper.best_epoch)
            break

    for p, saved in zip(params, best):
        p.data[...] = saved
    result.best_epoch = stopper.best_epoch
    return result

