"""Index maps for source words and the joint target label space."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .autodiff import DomainError
from .treebank import ROOT_LABELS, TreeNode

PAD, UNK, ROOT_ID, BOS_SIB, BOS, EOS = range(6)
UNK_TOKEN = "UNK"
TARGET_RESERVED = ("<pad>", UNK_TOKEN, "<root>", "<bos-sib>", "<bos>", "<eos>")
SOURCE_RESERVED = ("<pad>", UNK_TOKEN)


def top_tokens(counts: Counter, cap: int | None) -> list[str]:
    """Most frequent tokens first, ties broken lexicographically."""
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if cap is not None:
        ranked = ranked[:cap]
    return [tok for tok, _ in ranked]


@dataclass
class Vocabulary:
    """Source word ids plus a joint target label space.

    Target ids are laid out as reserved symbols, then terminals, then
    non-terminals, so the three groups occupy disjoint ranges.
    """

    source_words: list[str]
    terminals: list[str]
    nonterminals: list[str]
    _src_index: dict[str, int] = field(init=False, repr=False)
    _term_index: dict[str, int] = field(init=False, repr=False)
    _nt_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self._src_index = {w: i for i, w in enumerate(SOURCE_RESERVED)}
        for w in self.source_words:
            self._src_index[w] = len(self._src_index)
        base = len(TARGET_RESERVED)
        self._term_index = {w: base + k for k, w in enumerate(self.terminals)}
        base += len(self.terminals)
        self._nt_index = {s: base + k for k, s in enumerate(self.nonterminals)}
        if len(self._src_index) != len(SOURCE_RESERVED) + len(self.source_words):
            raise ValueError("duplicate source words")
        if len(self._term_index) != len(self.terminals) or len(self._nt_index) != len(self.nonterminals):
            raise ValueError("duplicate target labels")

    # sizes and ranges

    @property
    def source_size(self) -> int:
        return len(SOURCE_RESERVED) + len(self.source_words)

    @property
    def label_size(self) -> int:
        return len(TARGET_RESERVED) + len(self.terminals) + len(self.nonterminals)

    @property
    def terminal_range(self) -> range:
        start = len(TARGET_RESERVED)
        return range(start, start + len(self.terminals))

    @property
    def nonterminal_range(self) -> range:
        start = len(TARGET_RESERVED) + len(self.terminals)
        return range(start, start + len(self.nonterminals))

    # lookups

    def source_id(self, word: str) -> int:
        return self._src_index.get(word, UNK)

    def source_ids(self, words: Sequence[str]) -> list[int]:
        return [self.source_id(w) for w in words]

    def terminal_id(self, word: str) -> int:
        return self._term_index.get(word, UNK)

    def nonterminal_id(self, symbol: str) -> int:
        try:
            return self._nt_index[symbol]
        except KeyError:
            raise DomainError(f"unknown non-terminal {symbol!r}") from None

    def label_id(self, node: TreeNode) -> int:
        if node.is_terminal:
            return self.terminal_id(node.label)
        if node.label in ROOT_LABELS:
            return ROOT_ID
        return self.nonterminal_id(node.label)

    def label(self, idx: int) -> str:
        if idx < len(TARGET_RESERVED):
            return TARGET_RESERVED[idx]
        idx -= len(TARGET_RESERVED)
        if idx < len(self.terminals):
            return self.terminals[idx]
        idx -= len(self.terminals)
        if idx < len(self.nonterminals):
            return self.nonterminals[idx]
        raise DomainError(f"label id out of range: {idx}")

    def is_terminal_id(self, idx: int) -> bool:
        return idx == UNK or idx in self.terminal_range

    # serialisation

    def to_dict(self) -> dict:
        return {
            "source_words": list(self.source_words),
            "terminals": list(self.terminals),
            "nonterminals": list(self.nonterminals),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        return cls(list(d["source_words"]), list(d["terminals"]), list(d["nonterminals"]))


def build_vocab(sources: Iterable[Sequence[str]], trees: Iterable[TreeNode],
                source_cap: int | None = 50000, target_cap: int | None = 50000) -> Vocabulary:
    """Keep the ``cap`` most frequent words per side; non-terminals are never truncated."""
    src_counts: Counter = Counter()
    for sent in sources:
        src_counts.update(w for w in sent if w not in SOURCE_RESERVED)
    term_counts: Counter = Counter()
    nts: set[str] = set()
    n_trees = 0
    for tree in trees:
        n_trees += 1
        for node in tree.nodes():
            if node.is_terminal:
                if node.label != UNK_TOKEN:
                    term_counts[node.label] += 1
            elif node.label not in ROOT_LABELS:
                nts.add(node.label)
    if n_trees == 0 or (not src_counts and not term_counts):
        raise DomainError("cannot build a vocabulary from an empty corpus")
    return Vocabulary(
        source_words=top_tokens(src_counts, source_cap),
        terminals=top_tokens(term_counts, target_cap),
        nonterminals=sorted(nts),
    )
