"""Back-off n-gram model and conditional probability queries."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from ..symbols import BOS, EOS, UNK
from .tokenize import UnitLevel

NGram = tuple[str, ...]

# Log10 probability reported for units the model cannot score at all
# (no stored unigram and no <unk>); matches the ARPA convention for <s>.
LOG10_ZERO = -99.0


@dataclass(frozen=True, eq=False)
class NGramModel:
    """Back-off n-gram language model in log10 space.

    ``probs`` maps every stored n-gram (length 1..order) to its log10
    conditional probability; ``backoffs`` maps n-grams below the highest order
    to their log10 back-off weight (missing means 0). ``counts`` holds raw
    corpus counts when the model was estimated rather than parsed.
    """

    order: int
    probs: Mapping[NGram, float]
    backoffs: Mapping[NGram, float]
    unit_level: UnitLevel = UnitLevel.CHARACTER
    counts: Sequence[Counter] | None = field(default=None, repr=False)
    _vocab: frozenset = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "unit_level", UnitLevel(self.unit_level))
        object.__setattr__(self, "_vocab", frozenset(g[0] for g in self.probs if len(g) == 1))

    @property
    def vocabulary(self) -> frozenset[str]:
        return self._vocab

    def ngram_counts(self) -> list[int]:
        """Number of stored n-grams per order, index 0 = unigrams."""
        sizes = [0] * self.order
        for g in self.probs:
            sizes[len(g) - 1] += 1
        return sizes

    def contexts(self) -> list[NGram]:
        """Stored n-grams usable as a history (all orders below the highest)."""
        return [g for g in self.probs if len(g) < self.order]

    def raw_count(self, ngram: Sequence[str]) -> int:
        if self.counts is None:
            raise ValueError("model was not estimated from a corpus; raw counts unavailable")
        ngram = tuple(ngram)
        if not 1 <= len(ngram) <= self.order:
            return 0
        return self.counts[len(ngram) - 1].get(ngram, 0)

    def map_unit(self, unit: str) -> str:
        return unit if unit in self._vocab else UNK

    def state(self, context: Sequence[str]) -> NGram:
        """Shortest history equivalent to ``context`` for future queries.

        Only the longest suffix that is itself a stored n-gram can influence
        a query: an unstored history has no extensions and a zero back-off.
        """
        if self.order == 1:
            return ()
        ctx = tuple(self.map_unit(u) for u in context[len(context) - (self.order - 1) :])
        for start in range(len(ctx)):
            if ctx[start:] in self.probs:
                return ctx[start:]
        return ()

    def log_prob(self, context: Sequence[str], unit: str) -> float:
        """log10 P(unit | context) through the back-off recursion."""
        unit = self.map_unit(unit)
        if self.order > 1:
            ctx = tuple(self.map_unit(u) for u in context[len(context) - (self.order - 1) :])
        else:
            ctx = ()
        probs, backoffs = self.probs, self.backoffs
        acc = 0.0
        for start in range(len(ctx) + 1):
            hist = ctx[start:]
            p = probs.get(hist + (unit,))
            if p is not None:
                return acc + p
            acc += backoffs.get(hist, 0.0)
        return LOG10_ZERO

    def score(self, state: NGram, unit: str) -> tuple[float, NGram]:
        """Log10 probability of ``unit`` after ``state`` plus the next state."""
        lp = self.log_prob(state, unit)
        return lp, self.state(state + (self.map_unit(unit),))

    def sentence_log_prob(self, units: Sequence[str], eos: bool = True) -> float:
        """log10 P(units, </s> | <s>); an empty sequence scores P(</s> | <s>)."""
        history = [BOS]
        total = 0.0
        for u in units:
            total += self.log_prob(history, u)
            history.append(u)
        if eos:
            total += self.log_prob(history, EOS)
        return total

    def perplexity(self, sentences: Sequence[Sequence[str]]) -> float:
        total = 0.0
        n = 0
        for units in sentences:
            total += self.sentence_log_prob(units)
            n += len(units) + 1
        return 10.0 ** (-total / n)

    def same_as(self, other: "NGramModel", tol: float = 0.0) -> bool:
        """Identical n-gram sets and values within ``tol`` (missing back-off = 0)."""
        if self.order != other.order or self.probs.keys() != other.probs.keys():
            return False
        for g, p in self.probs.items():
            if abs(p - other.probs[g]) > tol:
                return False
            if len(g) < self.order:
                if abs(self.backoffs.get(g, 0.0) - other.backoffs.get(g, 0.0)) > tol:
                    return False
        return True


def lm_log_prob(model: NGramModel, context: Sequence[str], unit: str) -> float:
    return model.log_prob(context, unit)


def sentence_log_prob(model: NGramModel, units: Sequence[str]) -> float:
    if not units:
        raise ValueError("sentence_log_prob needs at least one unit")
    return model.sentence_log_prob(units)


def distribution_units(model: NGramModel) -> list[str]:
    """Units a conditional distribution ranges over: everything except <s>."""
    return sorted(u for u in model.vocabulary if u != BOS)
