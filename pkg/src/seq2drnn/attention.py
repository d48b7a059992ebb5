"""Additive attention over encoder states and the attention dump format."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_FLOOR, Decimal
from typing import Sequence

import numpy as np

from .autodiff import DimensionError, Tensor, add_row, glorot, matmul, matvec, softmax, tanh, transpose
from .encoder import Encoding
from .layers import Module


@dataclass
class Memory:
    """Encoder states with the query-independent half of the scores precomputed."""

    encoding: Encoding
    keys: Tensor  # [n x att], row i = U_a h_i


class AdditiveAttention(Module):
    """score_i = V_a . tanh(W_a h + U_a h_i); weights = softmax(scores)."""

    def __init__(self, query_dim: int, memory_dim: int, attention_dim: int,
                 rng: np.random.Generator, dtype=np.float64):
        super().__init__()
        self.query_dim = query_dim
        self.memory_dim = memory_dim
        self.W_a = self.param("W_a", glorot(rng, (attention_dim, query_dim), dtype))
        self.U_a = self.param("U_a", glorot(rng, (attention_dim, memory_dim), dtype))
        self.V_a = self.param("V_a", glorot(rng, (attention_dim,), dtype))

    def prepare(self, enc: Encoding) -> Memory:
        if enc.matrix.data.shape[1] != self.memory_dim:
            raise DimensionError(
                f"encoder states have dim {enc.matrix.data.shape[1]}, attention expects {self.memory_dim}"
            )
        return Memory(enc, matmul(enc.matrix, transpose(self.U_a)))

    def attend(self, query: Tensor, memory: Memory) -> tuple[Tensor, Tensor]:
        """Return ``(context, weights)`` for one query vector."""
        if query.data.shape != (self.query_dim,):
            raise DimensionError(f"attention query has shape {query.data.shape}, expected ({self.query_dim},)")
        energies = tanh(add_row(memory.keys, matvec(self.W_a, query)))
        weights = softmax(matvec(energies, self.V_a))
        context = matvec(memory.encoding.matrix_t, weights)
        return context, weights


def _round_column(col: np.ndarray, places: int) -> list[Decimal]:
    """Round non-negative weights summing to 1 so the rounded values sum to exactly 1.

    Largest-remainder apportionment: floor every cell, then hand the missing
    units of the last place to the cells with the largest remainders.
    """
    unit = Decimal(1).scaleb(-places)
    exact = [Decimal(float(v)) for v in col]
    floors = [v.quantize(unit, rounding=ROUND_FLOOR) for v in exact]
    missing = int(((Decimal(1) - sum(floors)) / unit).to_integral_value())
    order = sorted(range(len(col)), key=lambda k: (-(exact[k] - floors[k]), k))
    for k in order[: max(missing, 0)]:
        floors[k] += unit
    return floors


def format_attention_tsv(source_tokens: Sequence[str], node_labels: Sequence[str],
                         weights: np.ndarray, places: int = 6) -> str:
    """TSV matrix: header row of node labels, one row per source token.

    ``weights`` is [source tokens x nodes]; each column is a distribution and is
    written so that its printed cells add up to exactly one.
    """
    n_src, n_nodes = weights.shape
    if n_src != len(source_tokens) or n_nodes != len(node_labels):
        raise DimensionError(f"weights {weights.shape} vs {len(source_tokens)} tokens, {len(node_labels)} nodes")
    columns = [_round_column(weights[:, j], places) for j in range(n_nodes)]
    lines = ["\t".join([""] + list(node_labels))]
    for i, tok in enumerate(source_tokens):
        lines.append("\t".join([tok] + [f"{columns[j][i]:.{places}f}" for j in range(n_nodes)]))
    return "\n".join(lines) + "\n"


def parse_attention_tsv(text: str) -> tuple[list[str], list[str], np.ndarray]:
    lines = [line for line in text.splitlines() if line]
    header = lines[0].split("\t")[1:]
    tokens, rows = [], []
    for line in lines[1:]:
        cells = line.split("\t")
        tokens.append(cells[0])
        rows.append([float(c) for c in cells[1:]])
    return tokens, header, np.array(rows, dtype=np.float64).reshape(len(tokens), len(header))
