"""Encoder-decoder models: Seq2Seq, Seq2DRNN and Seq2DRNN+SynC."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .autodiff import Tensor
from .config import DecodeLimits, TrainConfig
from .drnn import DecodeResult, DrnnDecoder, IdTree, NodeState, index_tree
from .encoder import BiLstmEncoder, Bridge
from .layers import Module
from .seq2seq import SeqDecoder
from .treebank import ROOT, TreeNode, add_root, strip_preterminals
from .vocab import UNK_TOKEN, Vocabulary


@dataclass
class Example:
    """A training pair; ``tree`` is ROOT-normalised."""

    source: list[str]
    tree: TreeNode

    @property
    def target_words(self) -> list[str]:
        return self.tree.leaves()


def make_example(source: Sequence[str], tree: TreeNode, strip_pos: bool = False) -> Example:
    if strip_pos:
        tree = strip_preterminals(tree)
    return Example(list(source), add_root(tree))


@dataclass
class Encoded:
    source_ids: list[int]
    tree: IdTree
    target_ids: list[int]


@dataclass
class Loss:
    """Loss of one example; ``total`` is the differentiable scalar."""

    total: Tensor
    label: float
    leaf: float
    sibling: float
    terminal_nll: float = 0.0
    terminals: int = 0
    nodes: list[NodeState] = field(default_factory=list)


@dataclass
class Translation:
    words: list[str]
    tree: Optional[TreeNode]
    attention: np.ndarray  # [source tokens x output positions]
    column_labels: list[str]
    truncated: bool = False
    diagnostics: list[str] = field(default_factory=list)


class TranslationModel(Module):
    def __init__(self, config: TrainConfig, vocab: Vocabulary, seed: Optional[int] = None):
        super().__init__()
        self.config = config
        self.vocab = vocab
        rng = np.random.default_rng(config.seed if seed is None else seed)
        dtype = np.dtype(config.dtype)
        self.dtype = dtype
        self.encoder = self.child(
            "encoder",
            BiLstmEncoder(vocab.source_size, config.embed_dim, config.hidden_dim, config.layers, rng, dtype),
        )
        mem = self.encoder.output_dim
        self.bridge = self.child("bridge", Bridge(mem, config.hidden_dim, config.layers, rng, dtype))
        terminals = np.array(list(vocab.terminal_range), dtype=np.int64)
        if config.is_tree:
            self.decoder = self.child(
                "decoder",
                DrnnDecoder(
                    vocab.label_size, config.label_embed_dim, config.hidden_dim, mem, config.attention_dim,
                    config.layers, rng, dtype, sync=config.sync, injection=config.attention_injection,
                    terminal_ids=terminals, nonterminal_ids=np.array(list(vocab.nonterminal_range), dtype=np.int64),
                ),
            )
        else:
            self.decoder = self.child(
                "decoder",
                SeqDecoder(vocab.label_size, config.label_embed_dim, config.hidden_dim, mem, config.attention_dim,
                           config.layers, rng, dtype, output_ids=terminals),
            )

    @property
    def is_tree(self) -> bool:
        return self.config.is_tree

    # -- data ---------------------------------------------------------------

    def source_ids(self, words: Sequence[str]) -> list[int]:
        return self.vocab.source_ids(words)

    def encode_example(self, ex: Example) -> Encoded:
        return Encoded(
            self.vocab.source_ids(ex.source),
            index_tree(ex.tree, self.vocab),
            [self.vocab.terminal_id(w) for w in ex.target_words],
        )

    def _memory(self, source_ids: list[int]):
        enc = self.encoder.encode(source_ids)
        return self.decoder.attention.prepare(enc), self.bridge.initial_state(enc.summary)

    # -- training -------------------------------------------------------------

    def loss(self, ex: Encoded, perplexity: bool = False) -> Loss:
        memory, init = self._memory(ex.source_ids)
        if self.is_tree:
            t = self.decoder.teacher_forced_loss(ex.tree, memory, init, self.config.alpha, perplexity)
            return Loss(t.total, t.label.item(), t.leaf.item(), t.sibling.item(), t.terminal_nll, t.terminals, t.nodes)
        s = self.decoder.teacher_forced_loss(ex.target_ids, memory, init, perplexity)
        return Loss(s.total, s.total.item(), 0.0, 0.0, s.terminal_nll, s.terminals)

    # -- inference ------------------------------------------------------------

    def decode_tree(self, source: Sequence[str], limits: Optional[DecodeLimits] = None,
                    schedule: str = "sequential") -> DecodeResult:
        memory, init = self._memory(self.source_ids(source))
        return self.decoder.decode(memory, init, limits or self.config.limits, schedule)

    def translate(self, source: Sequence[str], limits: Optional[DecodeLimits] = None,
                  schedule: str = "sequential") -> Translation:
        if self.is_tree:
            res = self.decode_tree(source, limits, schedule)
            tree = self.build_tree(res.root)
            return Translation(
                words=tree.leaves(),
                tree=tree,
                attention=res.attention_matrix(),
                column_labels=[self.vocab.label(n.label) for n in res.nodes],
                truncated=res.truncated,
                diagnostics=list(res.diagnostics),
            )
        memory, init = self._memory(self.source_ids(source))
        ids, rows = self.decoder.greedy_decode(memory, init, self.config.max_len)
        words = [self.vocab.label(i) for i in ids]
        att = np.stack(rows, axis=1) if rows else np.zeros((len(source), 0))
        return Translation(words=words, tree=None, attention=att, column_labels=words)

    def build_tree(self, root: NodeState) -> TreeNode:
        """Turn decoded node states into a tree; childless non-terminals are dropped."""

        def build(node: NodeState) -> Optional[TreeNode]:
            label = self.vocab.label(node.label)
            if node.alpha:
                return TreeNode(label)
            kids = [t for t in (build(c) for c in node.children) if t is not None]
            if not kids:
                return None
            return TreeNode(label, tuple(kids))

        kids = [t for t in (build(c) for c in root.children) if t is not None]
        if not kids:
            kids = [TreeNode(UNK_TOKEN)]
        return TreeNode(ROOT, tuple(kids))
