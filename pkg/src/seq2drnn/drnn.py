"""Doubly-recurrent top-down tree decoder.

Every node carries an ancestral state (passed from its parent) and a
fraternal state (passed from its left sibling). Their combination drives two
sigmoid topology decisions, leaf or not and right sibling or not, and a
softmax over the joint label space. Generation is breadth first with two
queues; training scores the gold tree under full teacher forcing.

With syntactic connections enabled, a first child has no left sibling of its
own and instead continues the fraternal chain of its nearest ancestor that
does have one, so it is conditioned on the preceding clause.
"""

from __future__ import annotations

from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .attention import AdditiveAttention, Memory
from .autodiff import (
    Tensor,
    add,
    add_n,
    binary_cross_entropy,
    concat,
    cross_entropy,
    dot,
    glorot,
    matvec,
    scale,
    sigmoid,
    softmax,
    softmax_array,
    take_row,
    tanh,
)
from .config import DecodeLimits
from .layers import LstmState, Module, StackedLstm, top
from .vocab import BOS_SIB, ROOT_ID, UNK


@dataclass(frozen=True)
class IdTree:
    """Gold tree with label ids; a node is terminal iff it has no children."""

    label: int
    children: tuple["IdTree", ...] = ()

    @property
    def is_terminal(self) -> bool:
        return not self.children


@dataclass(eq=False)
class NodeState:
    depth: int
    path: tuple[int, ...]
    parent: Optional["NodeState"]
    left: Optional["NodeState"]
    label: int = -1
    alpha: int = 0
    gamma: int = 0
    ancestral: Optional[LstmState] = None
    fraternal: Optional[LstmState] = None
    predecessor: Optional["NodeState"] = None
    hidden: Optional[Tensor] = None
    context: Optional[Tensor] = None
    weights: Optional[Tensor] = None
    attentional: Optional[Tensor] = None
    p_leaf: Optional[Tensor] = None
    p_sibling: Optional[Tensor] = None
    logits: Optional[Tensor] = None
    children: list["NodeState"] = field(default_factory=list)
    child_ancestral: Optional[LstmState] = None
    next_fraternal: Optional[LstmState] = None

    @property
    def index(self) -> int:
        return self.path[-1] if self.path else 0


@dataclass
class LossTerms:
    label: Tensor
    leaf: Tensor
    sibling: Tensor
    total: Tensor
    nodes: list[NodeState]
    terminal_nll: float = 0.0
    terminals: int = 0


@dataclass
class DecodeResult:
    root: NodeState
    nodes: list[NodeState]
    truncated: bool = False
    diagnostics: list[str] = field(default_factory=list)

    def attention_matrix(self) -> np.ndarray:
        """[source tokens x generated nodes], columns in breadth-first order."""
        if not self.nodes:
            return np.zeros((0, 0))
        return np.stack([n.weights.data for n in self.nodes], axis=1)


class DrnnDecoder(Module):
    def __init__(self, label_size: int, label_embed_dim: int, hidden_dim: int, memory_dim: int,
                 attention_dim: int, layers: int, rng: np.random.Generator, dtype=np.float64,
                 sync: bool = True, injection: str = "combined",
                 terminal_ids: Optional[np.ndarray] = None, nonterminal_ids: Optional[np.ndarray] = None):
        super().__init__()
        H = hidden_dim
        self.sync = sync
        self.injection = injection
        self.label_size = label_size
        self.hidden_dim = H
        self.label_embedding = self.param("label_embedding", glorot(rng, (label_size, label_embed_dim), dtype))
        self.ancestral_rnn = self.child("ancestral_rnn", StackedLstm(label_embed_dim, H, layers, rng, dtype))
        self.fraternal_rnn = self.child("fraternal_rnn", StackedLstm(label_embed_dim, H, layers, rng, dtype))
        self.fraternal_start = [self.param(f"fraternal_start{k}", np.zeros(H, dtype=dtype)) for k in range(layers)]
        self.U_anc = self.param("U_anc", glorot(rng, (H, H), dtype))
        self.U_frat = self.param("U_frat", glorot(rng, (H, H), dtype))
        self.u_leaf = self.param("u_leaf", glorot(rng, (H,), dtype))
        self.u_sibling = self.param("u_sibling", glorot(rng, (H,), dtype))
        self.U_out = self.param("U_out", glorot(rng, (label_size, H), dtype))
        self.leaf_offset = self.param("leaf_offset", glorot(rng, (label_size,), dtype))
        self.sibling_offset = self.param("sibling_offset", glorot(rng, (label_size,), dtype))
        self.W_c = self.param("W_c", glorot(rng, (H, H + memory_dim), dtype))
        self.attention = self.child("attention", AdditiveAttention(H, memory_dim, attention_dim, rng, dtype))
        self.set_label_groups(
            np.array([] if terminal_ids is None else terminal_ids, dtype=np.int64),
            np.array([] if nonterminal_ids is None else nonterminal_ids, dtype=np.int64),
        )

    def set_label_groups(self, terminal_ids: np.ndarray, nonterminal_ids: np.ndarray) -> None:
        """Label ids allowed at leaves (terminals incl. UNK) and at inner nodes."""
        self.terminal_ids = np.unique(np.append(terminal_ids, UNK)).astype(np.int64)
        self.nonterminal_ids = np.asarray(nonterminal_ids, dtype=np.int64)

    # -- recurrences --------------------------------------------------------

    def _embed(self, label: int) -> Tensor:
        return take_row(self.label_embedding, label)

    def ancestral_step(self, parent: NodeState) -> LstmState:
        """State shared by all children of ``parent``; computed once."""
        if parent.child_ancestral is None:
            parent.child_ancestral = self.ancestral_rnn.step(parent.ancestral, self._embed(parent.label))
        return parent.child_ancestral

    def start_fraternal(self, run: dict) -> LstmState:
        """Fraternal state of a node with no fraternal predecessor."""
        if "start" not in run:
            init = [(h0, Tensor(np.zeros_like(h0.data))) for h0 in self.fraternal_start]
            run["start"] = self.fraternal_rnn.step(init, self._embed(BOS_SIB))
        return run["start"]

    def successor_fraternal(self, node: NodeState) -> LstmState:
        """Fraternal state handed on by ``node`` to whoever follows it."""
        if node.next_fraternal is None:
            node.next_fraternal = self.fraternal_rnn.step(node.fraternal, self._embed(node.label))
        return node.next_fraternal

    def resolve_predecessor(self, node: NodeState) -> Optional[NodeState]:
        """Left sibling, or with syntactic connections the parent's predecessor.

        Returns ``None`` when the chain reaches the root.
        """
        if node.left is not None:
            return node.left
        if not self.sync or node.parent is None or node.parent.parent is None:
            return None
        return node.parent.predecessor

    def fraternal_step(self, node: NodeState, run: dict) -> LstmState:
        node.predecessor = self.resolve_predecessor(node)
        if node.predecessor is None:
            return self.start_fraternal(run)
        return self.successor_fraternal(node.predecessor)

    def predictive_state(self, node: NodeState, memory: Memory) -> Tensor:
        h = tanh(add(matvec(self.U_frat, top(node.fraternal)), matvec(self.U_anc, top(node.ancestral))))
        ctx, weights = self.attention.attend(h, memory)
        node.hidden, node.context, node.weights = h, ctx, weights
        node.attentional = tanh(matvec(self.W_c, concat([h, ctx])))
        return node.attentional

    def topo_predict(self, node: NodeState) -> tuple[Tensor, Tensor]:
        x = node.attentional if self.injection == "combined" else node.hidden
        node.p_leaf = sigmoid(dot(self.u_leaf, x))
        node.p_sibling = sigmoid(dot(self.u_sibling, x))
        return node.p_leaf, node.p_sibling

    def label_logits(self, h: Tensor, alpha: int, gamma: int) -> Tensor:
        logits = matvec(self.U_out, h)
        if alpha:
            logits = add(logits, self.leaf_offset)
        if gamma:
            logits = add(logits, self.sibling_offset)
        return logits

    def masked_distribution(self, logits: np.ndarray, alpha: int) -> np.ndarray:
        """Inference distribution: leaves choose terminals, inner nodes non-terminals."""
        support = self.terminal_ids if alpha else self.nonterminal_ids
        out = np.zeros_like(logits)
        out[support] = softmax_array(logits[support])
        return out

    def _compute(self, node: NodeState, memory: Memory, run: dict) -> None:
        node.ancestral = self.ancestral_step(node.parent)
        node.fraternal = self.fraternal_step(node, run)
        self.predictive_state(node, memory)
        self.topo_predict(node)

    # -- training -----------------------------------------------------------

    def teacher_forced_loss(self, gold: IdTree, memory: Memory, root_state: LstmState,
                            alpha: float = 1.0, perplexity: bool = False) -> LossTerms:
        """Gold labels and gold topology drive the recurrences and the label offsets.

        The root itself is implicit and unscored; every other node contributes
        one label term and two topology terms.
        """
        run: dict = {}
        root = NodeState(depth=0, path=(), parent=None, left=None, label=ROOT_ID, ancestral=root_state)
        label_terms, leaf_terms, sib_terms = [], [], []
        nodes: list[NodeState] = []
        nll, n_term = 0.0, 0
        queue = deque([(root, gold)])
        while queue:
            parent, gparent = queue.popleft()
            left = None
            last = len(gparent.children) - 1
            for k, g in enumerate(gparent.children):
                node = NodeState(depth=parent.depth + 1, path=parent.path + (k,), parent=parent, left=left,
                                 label=g.label, alpha=int(g.is_terminal), gamma=int(k < last))
                self._compute(node, memory, run)
                node.logits = self.label_logits(node.attentional, node.alpha, node.gamma)
                label_terms.append(cross_entropy(softmax(node.logits), g.label))
                leaf_terms.append(binary_cross_entropy(node.p_leaf, node.alpha))
                sib_terms.append(binary_cross_entropy(node.p_sibling, node.gamma))
                if perplexity and node.alpha:
                    p = self.masked_distribution(node.logits.data, 1)[g.label]
                    nll -= float(np.log(max(p, 1e-12)))
                    n_term += 1
                parent.children.append(node)
                nodes.append(node)
                if not g.is_terminal:
                    queue.append((node, g))
                left = node
        label = add_n(label_terms)
        leaf = add_n(leaf_terms)
        sibling = add_n(sib_terms)
        total = add(label, scale(add(leaf, sibling), alpha))
        return LossTerms(label, leaf, sibling, total, nodes, nll, n_term)

    # -- inference ----------------------------------------------------------

    def _generate(self, node: NodeState, memory: Memory, run: dict) -> None:
        self._compute(node, memory, run)
        node.alpha = int(node.p_leaf.item() > 0.5)
        node.gamma = int(node.p_sibling.item() > 0.5)
        if node.alpha == 0 and self.nonterminal_ids.size == 0:
            node.alpha = 1
        node.logits = self.label_logits(node.attentional, node.alpha, node.gamma)
        dist = self.masked_distribution(node.logits.data, node.alpha)
        node.label = int(np.argmax(dist))

    @staticmethod
    def _first_child(node: NodeState) -> NodeState:
        return NodeState(depth=node.depth + 1, path=node.path + (0,), parent=node, left=None)

    @staticmethod
    def _right_sibling(node: NodeState) -> NodeState:
        return NodeState(depth=node.depth, path=node.path[:-1] + (node.index + 1,), parent=node.parent, left=node)

    def decode(self, memory: Memory, root_state: LstmState, limits: DecodeLimits = DecodeLimits(),
               schedule: str = "sequential", workers: int = 4) -> DecodeResult:
        """Greedy breadth-first generation.

        ``schedule="sequential"`` runs the two-queue loop node by node.
        ``schedule="parallel"`` expands every sibling group of a depth level as
        an independent task and merges the groups left to right. Both produce
        the same tree; truncation by ``max_total_nodes`` is applied at level
        boundaries in left-to-right order so it is schedule independent too.
        """
        if schedule not in ("sequential", "parallel"):
            raise ValueError(f"unknown schedule {schedule!r}")
        run: dict = {}
        self.start_fraternal(run)
        root = NodeState(depth=0, path=(), parent=None, left=None, label=ROOT_ID, ancestral=root_state)
        result = DecodeResult(root=root, nodes=[])
        level = [self._first_child(root)]
        pool = ThreadPoolExecutor(max_workers=workers) if schedule == "parallel" and workers > 1 else None
        try:
            while level:
                if schedule == "sequential":
                    generated, next_level = self._level_sequential(level, memory, run, limits, result)
                else:
                    generated, next_level = self._level_parallel(level, memory, run, limits, result, pool)
                generated.sort(key=lambda n: n.path)
                room = limits.max_total_nodes - len(result.nodes)
                if len(generated) > room:
                    generated = generated[:room]
                    self._flag(result, f"node budget {limits.max_total_nodes} exhausted")
                kept = set(map(id, generated))
                for node in generated:
                    node.parent.children.append(node)
                result.nodes.extend(generated)
                next_level = sorted((n for n in next_level if id(n.parent) in kept), key=lambda n: n.path)
                if next_level and len(result.nodes) >= limits.max_total_nodes:
                    self._flag(result, f"node budget {limits.max_total_nodes} exhausted")
                    break
                level = next_level
        finally:
            if pool is not None:
                pool.shutdown()
        return result

    @staticmethod
    def _flag(result: DecodeResult, message: str) -> None:
        result.truncated = True
        if message not in result.diagnostics:
            result.diagnostics.append(message)

    def _after(self, node: NodeState, limits: DecodeLimits, result: DecodeResult):
        sibling = child = None
        if node.gamma:
            if node.index + 1 < limits.max_siblings:
                sibling = self._right_sibling(node)
            else:
                self._flag(result, f"sibling limit {limits.max_siblings} reached")
        if not node.alpha:
            if node.depth < limits.max_depth:
                child = self._first_child(node)
            else:
                self._flag(result, f"depth limit {limits.max_depth} reached")
        return sibling, child

    def _level_sequential(self, level, memory, run, limits, result):
        current = deque(level)
        nxt: deque = deque()
        generated = []
        while current:
            node = current.popleft()
            self._generate(node, memory, run)
            generated.append(node)
            sibling, child = self._after(node, limits, result)
            if sibling is not None:
                current.append(sibling)
            if child is not None:
                nxt.append(child)
        return generated, list(nxt)

    def _level_parallel(self, level, memory, run, limits, result, pool):
        def chain(first: NodeState):
            nodes, children = [], []
            node = first
            while node is not None:
                self._generate(node, memory, run)
                nodes.append(node)
                sibling, child = self._after(node, limits, result)
                if child is not None:
                    children.append(child)
                node = sibling
            return nodes, children

        outcomes = list(pool.map(chain, level)) if pool is not None else [chain(f) for f in reversed(level)][::-1]
        generated = [n for nodes, _ in outcomes for n in nodes]
        next_level = [c for _, children in outcomes for c in children]
        return generated, next_level


def index_tree(tree, vocab) -> IdTree:
    """Convert a ROOT-normalised :class:`TreeNode` to label ids."""
    return IdTree(vocab.label_id(tree), tuple(index_tree(c, vocab) for c in tree.children))
