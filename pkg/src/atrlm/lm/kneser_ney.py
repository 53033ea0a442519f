"""Interpolated modified Kneser-Ney estimation.

The estimator follows the construction used by KenLM's ``lmplz``:

* highest-order n-grams and n-grams starting with ``<s>`` keep their raw
  counts; every other lower-order n-gram is counted by the number of distinct
  words preceding it (continuation count);
* per order, three discounts D1, D2, D3+ are derived from counts-of-counts of
  those adjusted counts;
* each order is interpolated with the next lower one, unigrams with the
  uniform distribution over the vocabulary minus ``<s>``;
* the interpolation weights are written as ARPA back-off weights.
"""

from __future__ import annotations

import logging
import math
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Sequence

from ..errors import InvalidInputError, InvalidParameterError
from ..symbols import BOS, EOS, UNK
from .model import LOG10_ZERO, NGram, NGramModel
from .tokenize import UnitLevel, check_sentence

logger = logging.getLogger(__name__)

MAX_ORDER = 10
DEFAULT_FALLBACK = (0.5, 0.5, 0.5)


class DiscountFallbackWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Discounts:
    d1: float
    d2: float
    d3plus: float
    fallback: bool = False

    def __call__(self, count: int) -> float:
        if count <= 0:
            return 0.0
        if count == 1:
            return self.d1
        if count == 2:
            return self.d2
        return self.d3plus


def count_ngrams(corpus: Sequence[Sequence[str]], order: int) -> list[Counter]:
    """Raw counts of all 1..order-grams in the ``<s>``/``</s>``-padded corpus."""
    counts = [Counter() for _ in range(order)]
    for units in corpus:
        padded = (BOS, *units, EOS)
        for i in range(len(padded)):
            for n in range(1, min(order, len(padded) - i) + 1):
                counts[n - 1][padded[i : i + n]] += 1
    return counts


def adjusted_counts(raw: list[Counter]) -> list[dict[NGram, int]]:
    order = len(raw)
    adjusted: list[dict[NGram, int]] = [dict() for _ in range(order)]
    adjusted[-1] = dict(raw[-1])
    for n in range(order - 1, 0, -1):
        left = Counter(g[1:] for g in raw[n])
        table = adjusted[n - 1]
        for g, c in raw[n - 1].items():
            table[g] = c if g[0] == BOS else left[g]
    adjusted[0].pop((BOS,), None)
    return adjusted


def estimate_discounts(counts: dict[NGram, int], order_label: int,
                       fallback: Sequence[float] = DEFAULT_FALLBACK) -> Discounts:
    """D_k = k - (k+1) Y n_{k+1} / n_k with Y = n1 / (n1 + 2 n2)."""
    n = Counter(c for c in counts.values() if 1 <= c <= 4)
    reason = None
    if any(n[k] == 0 for k in (1, 2, 3, 4)):
        reason = f"counts-of-counts n1..n4 = {[n[k] for k in (1, 2, 3, 4)]}"
    else:
        y = n[1] / (n[1] + 2 * n[2])
        d = [k - (k + 1) * y * n[k + 1] / n[k] for k in (1, 2, 3)]
        if any(not 0.0 <= dk <= k for k, dk in zip((1, 2, 3), d)):
            reason = f"discounts {d} out of range"
        else:
            return Discounts(*d)
    warnings.warn(
        f"{order_label}-gram: {reason}; using fallback discounts {tuple(fallback)}",
        DiscountFallbackWarning,
        stacklevel=3,
    )
    return Discounts(*fallback, fallback=True)


def estimate_kneser_ney(
    corpus: Sequence[Sequence[str]],
    order: int,
    unit_level: UnitLevel | str = UnitLevel.CHARACTER,
    fallback_discounts: Sequence[float] = DEFAULT_FALLBACK,
    discounts: Sequence[Sequence[float]] | None = None,
) -> NGramModel:
    """Train an interpolated modified Kneser-Ney model of the given order.

    ``discounts`` optionally fixes (D1, D2, D3+) for every order instead of
    estimating them from counts-of-counts.
    """
    if not isinstance(order, int) or not 1 <= order <= MAX_ORDER:
        raise InvalidParameterError(f"order must be an integer in [1, {MAX_ORDER}], got {order!r}")
    corpus = [tuple(s) for s in corpus]
    if not corpus:
        raise InvalidInputError("cannot estimate a language model from an empty corpus")
    for i, units in enumerate(corpus, 1):
        check_sentence(units, i)

    raw = count_ngrams(corpus, order)
    adjusted = adjusted_counts(raw)
    if discounts is None:
        discounts = [estimate_discounts(adjusted[n], n + 1, fallback_discounts) for n in range(order)]
    else:
        if len(discounts) != order:
            raise InvalidParameterError(f"expected {order} discount triples, got {len(discounts)}")
        discounts = [Discounts(*map(float, d)) for d in discounts]

    vocab = {g[0] for g in raw[0]} | {EOS, UNK}
    vocab.discard(BOS)

    # Uninterpolated probabilities and interpolation weights per history.
    uninterp: list[dict[NGram, float]] = []
    gamma: dict[NGram, float] = {}
    for n in range(order):
        by_hist: dict[NGram, list[tuple[NGram, int]]] = defaultdict(list)
        for g, c in adjusted[n].items():
            by_hist[g[:-1]].append((g, c))
        disc = discounts[n]
        table = {}
        for hist, items in by_hist.items():
            denom = sum(c for _, c in items)
            mass = sum(disc(c) for _, c in items)
            for g, c in items:
                table[g] = (c - disc(c)) / denom
            gamma[hist] = mass / denom
        uninterp.append(table)

    probs: dict[NGram, float] = {}
    interp: dict[NGram, float] = {}
    uniform = 1.0 / len(vocab)
    g0 = gamma.get((), 1.0)
    for w in sorted(vocab):
        p = uninterp[0].get((w,), 0.0) + g0 * uniform
        interp[(w,)] = p
    for n in range(1, order):
        for g, u in uninterp[n].items():
            interp[g] = u + gamma[g[:-1]] * interp[g[1:]]

    for g, p in interp.items():
        probs[g] = math.log10(p)
    probs[(BOS,)] = LOG10_ZERO

    backoffs: dict[NGram, float] = {}
    if order > 1:
        for g in probs:
            if len(g) < order:
                weight = gamma.get(g)
                if weight is None:
                    backoffs[g] = 0.0
                else:
                    backoffs[g] = math.log10(weight) if weight > 0 else LOG10_ZERO

    logger.debug("estimated %d-gram model, discounts %s", order, discounts)
    return NGramModel(order, probs, backoffs, UnitLevel(unit_level), counts=raw)
