"""BLEU and perplexity."""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

from .autodiff import DomainError


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _stats(hyp: Sequence[str], ref: Sequence[str], max_n: int) -> tuple[list[int], list[int]]:
    matches, totals = [], []
    for n in range(1, max_n + 1):
        h = ngrams(hyp, n)
        r = ngrams(ref, n)
        matches.append(sum((h & r).values()))
        totals.append(max(len(hyp) - n + 1, 0))
    return matches, totals


def _brevity_penalty(hyp_len: int, ref_len: int) -> float:
    if hyp_len == 0:
        return 0.0
    if hyp_len > ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / hyp_len)


def corpus_bleu(hypotheses: Sequence[Sequence[str]], references: Sequence[Sequence[str]], max_n: int = 4) -> float:
    """Corpus BLEU on a 0-100 scale, single reference per sentence.

    Clipped n-gram matches and n-gram totals are summed over the corpus before
    taking the geometric mean of the modified precisions.
    """
    if len(hypotheses) != len(references):
        raise DomainError(f"{len(hypotheses)} hypotheses but {len(references)} references")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        m, t = _stats(hyp, ref, max_n)
        matches = [a + b for a, b in zip(matches, m)]
        totals = [a + b for a, b in zip(totals, t)]
        hyp_len += len(hyp)
        ref_len += len(ref)
    if hyp_len == 0 or min(matches) == 0:
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(matches, totals)) / max_n
    return 100.0 * _brevity_penalty(hyp_len, ref_len) * math.exp(log_p)


def sentence_bleu(hyp: Sequence[str], ref: Sequence[str], max_n: int = 4) -> float:
    """Sentence BLEU with add-one smoothing of the n > 1 precisions."""
    if not hyp:
        return 0.0
    m, t = _stats(hyp, ref, max_n)
    if m[0] == 0:
        return 0.0
    log_p = math.log(m[0] / t[0])
    for n in range(1, max_n):
        log_p += math.log((m[n] + 1) / (t[n] + 1))
    return 100.0 * _brevity_penalty(len(hyp), len(ref)) * math.exp(log_p / max_n)


def perplexity_from_nll(total_nll: float, tokens: int) -> float:
    if tokens <= 0:
        raise DomainError("perplexity needs at least one token")
    return math.exp(total_nll / tokens)


def perplexity(model, examples) -> float:
    """exp of the mean teacher-forced NLL per target word.

    Only terminal predictions count, each under the distribution restricted to
    the labels that may appear at a leaf, so tree and sequence models are
    measured on the same tokens.
    """
    nll, n = 0.0, 0
    for ex in examples:
        enc = model.encode_example(ex)
        out = model.loss(enc, perplexity=True)
        nll += out.terminal_nll
        n += out.terminals
    return perplexity_from_nll(nll, n)
