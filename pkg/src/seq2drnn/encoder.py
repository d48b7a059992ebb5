"""Bidirectional LSTM encoder and the bridge that seeds decoder states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import DomainError, Tensor, add, concat, glorot, matvec, stack, take_row, tanh, transpose
from .layers import LstmLayer, LstmState, Module


@dataclass
class Encoding:
    """Encoder output for one sentence.

    ``states`` are the per-token vectors; ``matrix`` stacks them as rows and
    ``matrix_t`` is its transpose, both reused by attention at every node.
    """

    states: list[Tensor]
    summary: Tensor
    matrix: Tensor
    matrix_t: Tensor

    def __len__(self) -> int:
        return len(self.states)


class BiLstmEncoder(Module):
    def __init__(self, vocab_size: int, embed_dim: int, hidden_dim: int, layers: int,
                 rng: np.random.Generator, dtype=np.float64):
        super().__init__()
        self.vocab_size = vocab_size
        self.hidden_dim = hidden_dim
        self.embedding = self.param("embedding", glorot(rng, (vocab_size, embed_dim), dtype))
        self.forward_layers: list[LstmLayer] = []
        self.backward_layers: list[LstmLayer] = []
        for k in range(layers):
            in_dim = embed_dim if k == 0 else 2 * hidden_dim
            self.forward_layers.append(self.child(f"fwd{k}", LstmLayer(in_dim, hidden_dim, rng, dtype)))
            self.backward_layers.append(self.child(f"bwd{k}", LstmLayer(in_dim, hidden_dim, rng, dtype)))

    @property
    def output_dim(self) -> int:
        return 2 * self.hidden_dim

    def encode(self, source_ids: list[int]) -> Encoding:
        if not source_ids:
            raise DomainError("cannot encode an empty sentence")
        for i in source_ids:
            if not 0 <= i < self.vocab_size:
                raise DomainError(f"source id {i} outside vocabulary of size {self.vocab_size}")
        inputs = [take_row(self.embedding, i) for i in source_ids]
        fwd_final = bwd_final = None
        for fl, bl in zip(self.forward_layers, self.backward_layers):
            fwd = _run(fl, inputs)
            bwd = _run(bl, inputs[::-1])[::-1]
            inputs = [concat([f, b]) for f, b in zip(fwd, bwd)]
            fwd_final, bwd_final = fwd[-1], bwd[0]
        matrix = stack(inputs)
        return Encoding(
            states=inputs,
            summary=concat([fwd_final, bwd_final]),
            matrix=matrix,
            matrix_t=transpose(matrix),
        )


def _run(layer: LstmLayer, xs: list[Tensor]) -> list[Tensor]:
    state = layer.zero_state()
    out = []
    for x in xs:
        state = layer.step(state, x)
        out.append(state[0])
    return out


class Bridge(Module):
    """Maps the source summary to an initial decoder state, one affine+tanh per layer."""

    def __init__(self, summary_dim: int, hidden_dim: int, layers: int, rng: np.random.Generator, dtype=np.float64):
        super().__init__()
        self.hidden_dim = hidden_dim
        self.weights = []
        for k in range(layers):
            W = self.param(f"W{k}", glorot(rng, (hidden_dim, summary_dim), dtype))
            b = self.param(f"b{k}", np.zeros(hidden_dim, dtype=dtype))
            self.weights.append((W, b))

    def initial_state(self, summary: Tensor) -> LstmState:
        state = []
        for W, b in self.weights:
            h = tanh(add(matvec(W, summary), b))
            state.append((h, Tensor(np.zeros(self.hidden_dim, dtype=W.data.dtype))))
        return state
