"""Synthetic PCFG corpora for parser-mode and translation experiments.

Words belong to disjoint lexical categories and no rule allows a phrase to
attach in two places, so every yield has exactly one parse under its grammar.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .treebank import TreeNode

Rule = tuple[float, tuple[str, ...]]


@dataclass
class Pcfg:
    start: str
    rules: dict[str, list[Rule]]
    lexicon: dict[str, list[str]]

    @property
    def nonterminals(self) -> list[str]:
        return sorted(self.rules)

    @property
    def terminals(self) -> list[str]:
        return sorted(w for words in self.lexicon.values() for w in words)

    def sample(self, rng: random.Random, symbol: str | None = None) -> list[TreeNode]:
        """Expand ``symbol``; a lexical category yields a single terminal."""
        symbol = symbol or self.start
        if symbol in self.lexicon:
            return [TreeNode(rng.choice(self.lexicon[symbol]))]
        weights = [p for p, _ in self.rules[symbol]]
        _, rhs = rng.choices(self.rules[symbol], weights=weights)[0]
        children = [node for sym in rhs for node in self.sample(rng, sym)]
        return [TreeNode(symbol, tuple(children))]

    def tree(self, rng: random.Random) -> TreeNode:
        return self.sample(rng)[0]


def _words(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{k}" for k in range(n)]


def parsing_grammar() -> Pcfg:
    """Five non-terminals over fifty terminals."""
    return Pcfg(
        start="S",
        rules={
            "S": [(1.0, ("NP", "VP"))],
            "NP": [(0.5, ("Det", "N")), (0.3, ("Det", "ADJP", "N")), (0.2, ("N",))],
            "VP": [(0.4, ("V", "NP")), (0.3, ("V", "NP", "PP")), (0.15, ("V",)), (0.15, ("V", "PP"))],
            "PP": [(1.0, ("P", "NP"))],
            "ADJP": [(0.7, ("Adj",)), (0.3, ("Adj", "Adj"))],
        },
        lexicon={
            "Det": ["the", "a", "this", "that", "every"],
            "N": ["dog", "cat", "man", "woman", "child", "park", "house", "river", "bird", "tree",
                  "car", "city", "book", "table", "garden"],
            "V": ["sees", "likes", "finds", "walks", "runs", "eats", "builds", "reads", "loves",
                  "sleeps", "watches", "paints"],
            "P": ["in", "on", "near", "under", "with", "behind", "over", "beside"],
            "Adj": ["big", "small", "red", "old", "young", "happy", "quiet", "green", "tall", "dark"],
        },
    )


def translation_grammar() -> Pcfg:
    """A second grammar with relative clauses and conjunction."""
    return Pcfg(
        start="S",
        rules={
            "S": [(0.85, ("NP", "VP")), (0.15, ("NP", "VP", "Conj", "S"))],
            "NP": [(0.6, ("Det", "N")), (0.25, ("Det", "ADJP", "N")), (0.15, ("Det", "N", "SBAR"))],
            "VP": [(0.5, ("V", "NP")), (0.3, ("V",)), (0.2, ("V", "NP", "PP"))],
            "PP": [(1.0, ("P", "NP"))],
            "SBAR": [(1.0, ("C", "VP"))],
            "ADJP": [(1.0, ("Adj",))],
        },
        lexicon={
            "Det": ["the", "a"],
            "N": _words("noun", 12),
            "V": _words("verb", 10),
            "P": ["in", "on", "at"],
            "Adj": _words("adj", 6),
            "C": ["that"],
            "Conj": ["and"],
        },
    )


def source_side(tree: TreeNode, mapping: dict[str, str]) -> list[str]:
    """Deterministic 'foreign' rendering: map every word, put verbs after their complements."""
    if tree.is_terminal:
        return [mapping.get(tree.label, tree.label)]
    children = list(tree.children)
    if tree.label == "VP":
        children = [c for c in children if not c.is_terminal] + [c for c in children if c.is_terminal]
    return [w for c in children for w in source_side(c, mapping)]


def word_mapping(grammar: Pcfg) -> dict[str, str]:
    return {w: f"{w[::-1]}_x" for w in grammar.terminals}


def sample_trees(grammar: Pcfg, n: int, seed: int, max_words: int = 12, max_depth: int = 10,
                 unique: bool = True, exclude: set[str] | None = None) -> list[TreeNode]:
    """Draw ``n`` trees satisfying the size limits (rejection sampling)."""
    rng = random.Random(seed)
    seen: set[str] = set(exclude or ())
    out: list[TreeNode] = []
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 1000 * n + 10000:
            raise RuntimeError(f"could only draw {len(out)} of {n} trees within the limits")
        t = grammar.tree(rng)
        if len(t.leaves()) > max_words or t.depth() > max_depth:
            continue
        key = " ".join(t.leaves())
        if unique and key in seen:
            continue
        seen.add(key)
        out.append(t)
    return out
