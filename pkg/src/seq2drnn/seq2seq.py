"""Attentional sequential decoder used as the baseline.

Each step attends with the previous decoder state, feeds the previous output
embedding concatenated with the context into the LSTM, and reads a softmax
over the target vocabulary off the new state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import AdditiveAttention, Memory
from .autodiff import Tensor, add, add_n, concat, cross_entropy, glorot, matvec, softmax, take_row
from .layers import LstmState, Module, StackedLstm, top
from .vocab import BOS, EOS, UNK


@dataclass
class SeqLoss:
    total: Tensor
    steps: int
    terminal_nll: float = 0.0
    terminals: int = 0


class SeqDecoder(Module):
    def __init__(self, label_size: int, embed_dim: int, hidden_dim: int, memory_dim: int, attention_dim: int,
                 layers: int, rng: np.random.Generator, dtype=np.float64, output_ids=None):
        super().__init__()
        self.label_size = label_size
        self.embedding = self.param("embedding", glorot(rng, (label_size, embed_dim), dtype))
        self.rnn = self.child("rnn", StackedLstm(embed_dim + memory_dim, hidden_dim, layers, rng, dtype))
        self.U = self.param("U", glorot(rng, (label_size, hidden_dim), dtype))
        self.b = self.param("b", np.zeros(label_size, dtype=dtype))
        self.attention = self.child("attention", AdditiveAttention(hidden_dim, memory_dim, attention_dim, rng, dtype))
        self.set_output_ids(np.array([] if output_ids is None else output_ids, dtype=np.int64))

    def set_output_ids(self, terminal_ids: np.ndarray) -> None:
        """Tokens greedy decoding may emit: terminals, UNK and EOS."""
        self.output_ids = np.unique(np.concatenate([terminal_ids, [UNK, EOS]])).astype(np.int64)
        self.word_ids = self.output_ids[self.output_ids != EOS]

    def decode_step(self, state: LstmState, prev_embedding: Tensor, context: Tensor) -> tuple[LstmState, Tensor]:
        state = self.rnn.step(state, concat([prev_embedding, context]))
        probs = softmax(add(matvec(self.U, top(state)), self.b))
        return state, probs

    def _step(self, state: LstmState, prev_token: int, memory: Memory):
        context, weights = self.attention.attend(top(state), memory)
        state, probs = self.decode_step(state, take_row(self.embedding, prev_token), context)
        return state, probs, weights

    def teacher_forced_loss(self, gold: list[int], memory: Memory, init_state: LstmState,
                            perplexity: bool = False) -> SeqLoss:
        """Summed cross-entropy over the gold tokens followed by EOS."""
        state = init_state
        prev = BOS
        terms = []
        nll, n = 0.0, 0
        for tok in list(gold) + [EOS]:
            state, probs, _ = self._step(state, prev, memory)
            terms.append(cross_entropy(probs, tok))
            if perplexity and tok != EOS:
                restricted = probs.data[self.word_ids]
                p = probs.data[tok] / restricted.sum()
                nll -= float(np.log(max(p, 1e-12)))
                n += 1
            prev = tok
        return SeqLoss(add_n(terms), len(terms), nll, n)

    def greedy_decode(self, memory: Memory, init_state: LstmState, max_len: int = 100):
        """Return ``(tokens, attention rows)``; stops at EOS or ``max_len`` tokens."""
        state = init_state
        prev = BOS
        out: list[int] = []
        weights = []
        while len(out) < max_len:
            state, probs, w = self._step(state, prev, memory)
            tok = int(self.output_ids[np.argmax(probs.data[self.output_ids])])
            if tok == EOS:
                break
            out.append(tok)
            weights.append(w.data)
            prev = tok
        return out, weights
