"""Parameter containers and LSTM layers shared by encoder and decoders."""

from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np

from .autodiff import DimensionError, Tensor, glorot, lstm_cell

LstmState = list[tuple[Tensor, Tensor]]


class Module:
    """Holds named parameters and child modules in registration order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._children: dict[str, Module] = {}

    def param(self, name: str, data: np.ndarray) -> Tensor:
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        return t

    def child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, t in self._params.items():
            yield prefix + name, t
        for name, mod in self._children.items():
            yield from mod.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def zero_grad(self) -> None:
        for t in self.parameters():
            t.zero_grad()


class LstmLayer(Module):
    """Single LSTM layer; forget-gate bias starts at 1."""

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator, dtype=np.float64):
        super().__init__()
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.W = self.param("W", glorot(rng, (4 * hidden_dim, input_dim + hidden_dim), dtype))
        b = np.zeros(4 * hidden_dim, dtype=dtype)
        b[hidden_dim : 2 * hidden_dim] = 1.0
        self.b = self.param("b", b)

    def step(self, state: tuple[Tensor, Tensor], x: Tensor) -> tuple[Tensor, Tensor]:
        if x.data.shape != (self.input_dim,):
            raise DimensionError(f"lstm input has shape {x.data.shape}, expected ({self.input_dim},)")
        h, c = state
        return lstm_cell(x, h, c, self.W, self.b)

    def zero_state(self) -> tuple[Tensor, Tensor]:
        z = np.zeros(self.hidden_dim, dtype=self.W.data.dtype)
        return Tensor(z), Tensor(z.copy())


class StackedLstm(Module):
    """Unidirectional multi-layer LSTM stepped one input at a time."""

    def __init__(self, input_dim: int, hidden_dim: int, layers: int, rng: np.random.Generator, dtype=np.float64):
        super().__init__()
        self.layers: list[LstmLayer] = []
        for k in range(layers):
            layer = LstmLayer(input_dim if k == 0 else hidden_dim, hidden_dim, rng, dtype)
            self.child(f"layer{k}", layer)
            self.layers.append(layer)
        self.hidden_dim = hidden_dim

    def step(self, state: LstmState, x: Tensor) -> LstmState:
        out = []
        inp = x
        for layer, s in zip(self.layers, state):
            h, c = layer.step(s, inp)
            out.append((h, c))
            inp = h
        return out

    def zero_state(self) -> LstmState:
        return [layer.zero_state() for layer in self.layers]


def top(state: Sequence[tuple[Tensor, Tensor]]) -> Tensor:
    return state[-1][0]
