"""Constituency trees: bracketed I/O, gold topology decisions, bracket scoring."""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass
from typing import Iterable, Iterator

ROOT = "ROOT"
ROOT_LABELS = frozenset({"ROOT", "TOP"})

_ESCAPES = {"(": "-LRB-", ")": "-RRB-"}
_UNESCAPES = {v: k for k, v in _ESCAPES.items()}


class TreebankParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class TreeNode:
    """A terminal (word, no children) or a non-terminal (symbol, >= 1 child)."""

    label: str
    children: tuple["TreeNode", ...] = ()

    @property
    def is_terminal(self) -> bool:
        return not self.children

    def leaves(self) -> list[str]:
        out: list[str] = []
        stack = [self]
        while stack:
            node = stack.pop()
            if node.is_terminal:
                out.append(node.label)
            else:
                stack.extend(reversed(node.children))
        return out

    def nodes(self) -> Iterator["TreeNode"]:
        """Pre-order traversal."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def size(self) -> int:
        return sum(1 for _ in self.nodes())

    def depth(self) -> int:
        if self.is_terminal:
            return 0
        return 1 + max(c.depth() for c in self.children)

    def __str__(self) -> str:
        return serialize(self)


def terminal(word: str) -> TreeNode:
    return TreeNode(word)


def nonterminal(label: str, *children: TreeNode) -> TreeNode:
    if not children:
        raise ValueError(f"non-terminal {label!r} needs at least one child")
    return TreeNode(label, tuple(children))


# -- reading ------------------------------------------------------------------


def _tokenize(text: str) -> list[tuple[str, int]]:
    """Split into '(' / ')' / atom tokens with their byte offsets."""
    tokens = []
    i, n = 0, len(text)
    byte = 0
    while i < n:
        ch = text[i]
        if ch.isspace():
            byte += len(ch.encode("utf-8"))
            i += 1
        elif ch in "()":
            tokens.append((ch, byte))
            byte += 1
            i += 1
        else:
            start_byte = byte
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                byte += len(text[j].encode("utf-8"))
                j += 1
            tokens.append((text[i:j], start_byte))
            i = j
    return tokens


def _unescape(atom: str) -> str:
    return _UNESCAPES.get(atom, atom)


def parse_brackets(text: str) -> TreeNode:
    """Parse one bracketed tree such as ``(S (NP Andrei) (VP likes (NP cheese)))``.

    A bare word parses to a single terminal. A label-less outermost bracket,
    as in ``( (S ...))``, is read as ``ROOT``.
    """
    tokens = _tokenize(text)
    end = len(text.encode("utf-8"))
    if not tokens:
        raise TreebankParseError("empty input", 0)

    pos = 0

    def peek() -> tuple[str, int]:
        return tokens[pos] if pos < len(tokens) else ("", end)

    def parse_node(outermost: bool) -> TreeNode:
        nonlocal pos
        tok, off = peek()
        if tok == "":
            raise TreebankParseError("unexpected end of input", off)
        if tok == ")":
            raise TreebankParseError("unexpected ')'", off)
        if tok != "(":
            pos += 1
            return TreeNode(_unescape(tok))
        pos += 1
        tok, off = peek()
        if tok == "":
            raise TreebankParseError("unexpected end of input", off)
        if tok == ")":
            raise TreebankParseError("empty constituent", off)
        if tok == "(":
            if not outermost:
                raise TreebankParseError("missing constituent label", off)
            label = ROOT
        else:
            label = _unescape(tok)
            pos += 1
        children = []
        while True:
            tok, off = peek()
            if tok == ")":
                pos += 1
                break
            if tok == "":
                raise TreebankParseError("unexpected end of input", off)
            children.append(parse_node(False))
        if not children:
            raise TreebankParseError(f"constituent {label!r} has no children", off)
        return TreeNode(label, tuple(children))

    tree = parse_node(True)
    if pos != len(tokens):
        raise TreebankParseError("trailing input after tree", tokens[pos][1])
    return tree


def read_trees(lines: Iterable[str]) -> list[TreeNode]:
    return [parse_brackets(line) for line in lines if line.strip()]


# -- writing ------------------------------------------------------------------


def _escape(atom: str) -> str:
    return _ESCAPES.get(atom, atom)


def serialize(tree: TreeNode) -> str:
    """Canonical single-space bracketed form."""
    if tree.is_terminal:
        return _escape(tree.label)
    parts: list[str] = []

    def walk(node: TreeNode) -> None:
        if node.is_terminal:
            parts.append(_escape(node.label))
            return
        parts.append("(" + _escape(node.label))
        for child in node.children:
            parts.append(" ")
            walk(child)
        parts.append(")")

    walk(tree)
    return "".join(parts)


# -- normalisation ------------------------------------------------------------


def add_root(tree: TreeNode) -> TreeNode:
    """Wrap ``tree`` under a synthetic ROOT unless it already has one."""
    if not tree.is_terminal and tree.label in ROOT_LABELS:
        return TreeNode(ROOT, tree.children) if tree.label != ROOT else tree
    return TreeNode(ROOT, (tree,))


def strip_root(tree: TreeNode) -> TreeNode:
    """Inverse of :func:`add_root` when the ROOT has a single child."""
    if tree.label in ROOT_LABELS and len(tree.children) == 1:
        return tree.children[0]
    return tree


def strip_preterminals(tree: TreeNode) -> TreeNode:
    """Collapse unary pre-terminals: ``(NP (NNP Andrei))`` -> ``(NP Andrei)``."""
    if tree.is_terminal:
        return tree
    new_children = []
    for child in tree.children:
        if len(child.children) == 1 and child.children[0].is_terminal:
            new_children.append(child.children[0])
        else:
            new_children.append(strip_preterminals(child))
    return TreeNode(tree.label, tuple(new_children))


# -- gold decisions and levels ------------------------------------------------


@dataclass(frozen=True)
class GoldDecisions:
    """Topology targets in breadth-first order.

    ``alpha[k]`` is 1 iff node k is a leaf; ``gamma[k]`` is 1 iff node k has a
    right sibling. ``nodes[k]`` is the node, ``paths[k]`` its child-index path.
    """

    nodes: tuple[TreeNode, ...]
    paths: tuple[tuple[int, ...], ...]
    alpha: tuple[int, ...]
    gamma: tuple[int, ...]

    def by_path(self) -> dict[tuple[int, ...], tuple[int, int]]:
        return {p: (a, g) for p, a, g in zip(self.paths, self.alpha, self.gamma)}


def _bfs_with_paths(tree: TreeNode) -> list[tuple[TreeNode, tuple[int, ...], bool]]:
    out = []
    queue = deque([(tree, (), False)])
    while queue:
        node, path, has_right = queue.popleft()
        out.append((node, path, has_right))
        last = len(node.children) - 1
        for k, child in enumerate(node.children):
            queue.append((child, path + (k,), k < last))
    return out


def gold_decisions(tree: TreeNode) -> GoldDecisions:
    entries = _bfs_with_paths(tree)
    return GoldDecisions(
        nodes=tuple(n for n, _, _ in entries),
        paths=tuple(p for _, p, _ in entries),
        alpha=tuple(int(n.is_terminal) for n, _, _ in entries),
        gamma=tuple(int(r) for _, _, r in entries),
    )


def depth_levels(tree: TreeNode) -> list[list[TreeNode]]:
    levels: list[list[TreeNode]] = []
    current = [tree]
    while current:
        levels.append(current)
        current = [c for node in current for c in node.children]
    return levels


# -- bracket scoring ----------------------------------------------------------


@dataclass(frozen=True)
class BracketSpan:
    start: int
    end: int
    label: str

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid span [{self.start}, {self.end})")


def spans(tree: TreeNode) -> list[BracketSpan]:
    """Non-terminal spans over word indices; ROOT brackets are excluded."""
    out: list[BracketSpan] = []

    def walk(node: TreeNode, start: int) -> int:
        if node.is_terminal:
            return start + 1
        end = start
        for child in node.children:
            end = walk(child, end)
        if node.label not in ROOT_LABELS and end > start:
            out.append(BracketSpan(start, end, node.label))
        return end

    walk(tree, 0)
    return out


@dataclass(frozen=True)
class BracketCounts:
    matched: int
    predicted: int
    gold: int

    def __add__(self, other: "BracketCounts") -> "BracketCounts":
        return BracketCounts(
            self.matched + other.matched,
            self.predicted + other.predicted,
            self.gold + other.gold,
        )

    def scores(self) -> dict[str, float]:
        p = self.matched / self.predicted if self.predicted else 0.0
        r = self.matched / self.gold if self.gold else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return {"precision": p, "recall": r, "f1": f}


def bracket_counts(pred: TreeNode, gold: TreeNode, labelled: bool) -> BracketCounts:
    """Span-multiset match counts for one sentence.

    Trees whose yields differ in length are still counted, with no matches.
    """
    ps, gs = spans(pred), spans(gold)
    if len(pred.leaves()) != len(gold.leaves()):
        return BracketCounts(0, len(ps), len(gs))

    def key(s: BracketSpan):
        return (s.start, s.end, s.label) if labelled else (s.start, s.end)

    matched = sum((Counter(map(key, ps)) & Counter(map(key, gs))).values())
    return BracketCounts(matched, len(ps), len(gs))


def score_brackets(pred: TreeNode, gold: TreeNode, labelled: bool) -> dict[str, float]:
    return bracket_counts(pred, gold, labelled).scores()


def corpus_brackets(preds: Iterable[TreeNode], golds: Iterable[TreeNode], labelled: bool) -> dict[str, float]:
    """EVALB-style micro-averaged precision, recall and F1."""
    total = BracketCounts(0, 0, 0)
    for p, g in zip(preds, golds, strict=True):
        total = total + bracket_counts(p, g, labelled)
    return total.scores()
