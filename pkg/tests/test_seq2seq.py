import math

import numpy as np
import pytest

from helpers import scramble, tiny_model
from seq2drnn.autodiff import gradient_check, softmax_array, take_row
from seq2drnn.metrics import perplexity
from seq2drnn.treebank import parse_brackets
from seq2drnn.vocab import BOS, EOS, UNK

TREES = [parse_brackets("(S (NP a) (VP b c))"), parse_brackets("(S (NP d) (VP e))")]


def _model(seed=0):
    model, exs = tiny_model(TREES, sources=[["x", "y", "z"], ["u", "v"]], arch="seq2seq", seed=seed)
    return model, exs


def test_uniform_readout_gives_m_plus_one_log_v():
    model, exs = _model()
    model.decoder.U.data[...] = 0.0
    enc = model.encode_example(exs[0])
    loss = model.loss(enc)
    V = model.vocab.label_size
    assert loss.total.item() == pytest.approx(4 * math.log(V), rel=1e-12)


def test_uniform_perplexity_equals_word_support():
    model, exs = _model()
    model.decoder.U.data[...] = 0.0
    V = len(model.vocab.terminals) + 1  # terminals plus UNK
    assert perplexity(model, exs) == pytest.approx(V, rel=1e-12)


def test_steps_use_previous_token_and_context():
    model, exs = _model(1)
    scramble(model, 3)
    dec = model.decoder
    memory, init = model._memory(model.source_ids(exs[0].source))
    state = init
    ctx, _ = dec.attention.attend(state[-1][0], memory)
    state2, probs = dec.decode_step(state, take_row(dec.embedding, BOS), ctx)
    z = dec.U.data @ state2[-1][0].data + dec.b.data
    np.testing.assert_allclose(probs.data, softmax_array(z), rtol=1e-12)
    layer = dec.rnn.layers[0]
    x = np.concatenate([dec.embedding.data[BOS], ctx.data])
    g = layer.W.data @ np.concatenate([x, init[0][0].data]) + layer.b.data
    H = g.size // 4
    sig = lambda t: 1 / (1 + np.exp(-t))
    c = sig(g[H : 2 * H]) * init[0][1].data + sig(g[:H]) * np.tanh(g[2 * H : 3 * H])
    np.testing.assert_allclose(state2[0][0].data, sig(g[3 * H :]) * np.tanh(c), rtol=1e-12)


def test_eos_first_gives_empty_output():
    model, exs = _model()
    model.decoder.U.data[...] = 0.0
    model.decoder.b.data[...] = 0.0
    model.decoder.b.data[EOS] = 10.0
    tr = model.translate(exs[0].source)
    assert tr.words == [] and tr.tree is None and tr.attention.shape == (3, 0)


def test_greedy_output_is_restricted_and_bounded():
    model, exs = _model()
    dec = model.decoder
    dec.U.data[...] = 0.0
    dec.b.data[...] = 0.0
    dec.b.data[BOS] = 50.0  # never emittable
    dec.b.data[UNK] = 5.0
    ids, rows = dec.greedy_decode(*model._memory(model.source_ids(exs[0].source)), max_len=7)
    assert ids == [UNK] * 7 and len(rows) == 7
    for r in rows:
        assert abs(r.sum() - 1.0) < 1e-12


def test_seq2seq_gradients():
    model, exs = _model(2)
    scramble(model, 4)
    enc = model.encode_example(exs[0])
    errs = gradient_check(lambda: model.loss(enc).total, model.parameters())
    assert max(errs.values()) < 1e-4
