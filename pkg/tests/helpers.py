"""Shared builders for tests: random trees, tiny models, parameter scrambling."""

from __future__ import annotations

import random

import numpy as np

from seq2drnn.autodiff import Tensor, dot, matvec
from seq2drnn.config import TrainConfig
from seq2drnn.model import TranslationModel, make_example
from seq2drnn.treebank import TreeNode
from seq2drnn.vocab import build_vocab

LABELS = ["S", "NP", "VP", "PP", "ADJP", "SBAR", "X"]
WORDS = ["a", "b", "c", "dog", "cat", "runs", "(", ")", "x-y", "z.", "UNKish", "über"]


def random_tree(rng: random.Random, max_depth: int = 4, max_children: int = 3, words=WORDS,
                labels=LABELS) -> TreeNode:
    """Random non-terminal rooted tree; every non-terminal has >= 1 child."""

    def grow(depth: int) -> TreeNode:
        n = rng.randint(1, max_children)
        kids = []
        for _ in range(n):
            if depth >= max_depth or rng.random() < 0.45:
                kids.append(TreeNode(rng.choice(words)))
            else:
                kids.append(grow(depth + 1))
        return TreeNode(rng.choice(labels), tuple(kids))

    return grow(1)


def tiny_config(arch: str = "seq2drnn-sync", dim: int = 4, layers: int = 1, **kw) -> TrainConfig:
    return TrainConfig(arch=arch, embed_dim=dim, label_embed_dim=dim, hidden_dim=dim, attention_dim=dim,
                       layers=layers, **kw)


def tiny_model(trees, sources=None, arch: str = "seq2drnn-sync", dim: int = 4, layers: int = 1, seed: int = 0,
               **kw):
    """Model plus examples built from ``trees`` (sources default to the yields)."""
    sources = sources or [t.leaves() for t in trees]
    examples = [make_example(s, t) for s, t in zip(sources, trees)]
    vocab = build_vocab([e.source for e in examples], [e.tree for e in examples])
    model = TranslationModel(tiny_config(arch, dim, layers, seed=seed, **kw), vocab)
    return model, examples


def scramble(model, seed: int, std: float = 0.7) -> None:
    """Replace every parameter with N(0, std^2) noise so all paths carry signal."""
    rng = np.random.default_rng(seed)
    for p in model.parameters():
        p.data[...] = rng.normal(0.0, std, size=p.data.shape)


def to_scalar(t: Tensor, rng: np.random.Generator) -> Tensor:
    """Random linear functional of a vector or matrix output."""
    if t.data.ndim == 0:
        return t
    if t.data.ndim == 1:
        return dot(Tensor(rng.normal(size=t.data.shape)), t)
    v = matvec(t, Tensor(rng.normal(size=t.data.shape[1])))
    return dot(Tensor(rng.normal(size=v.data.shape)), v)
