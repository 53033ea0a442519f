"""CTC best-path decoding and prefix beam search with n-gram shallow fusion.

Beam search keeps, for every hypothesis, the usual pair of blank / non-blank
prefix log-probabilities (merged with log-sum-exp) together with the pair of
best single-path (Viterbi) log-probabilities. Hypotheses are *ranked* by

    combined = log P(prefix) + lm_weight * ln(10) * log10 P_lm(units) + bonus * #units

but *pruned* on the Viterbi variant of the same expression, ties broken by
the token consumed at the current frame. With one hypothesis and no language
model the survivor is therefore always the best path, so ``beam_size=1``
reproduces :func:`greedy_decode` exactly, while a beam wide enough to avoid
pruning yields exact prefix probabilities.
"""

from __future__ import annotations

import heapq
import math
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from itertools import groupby
from typing import Sequence

import numpy as np

from .emissions import EmissionMatrix, TokenTable, log_softmax_frames
from .errors import AtrlmError, ConfigurationError, InvalidParameterError
from .lexicon import Lexicon
from .lm.model import NGramModel
from .lm.tokenize import UnitLevel
from .symbols import BOS, EOS

LN10 = math.log(10.0)
NEG_INF = float("-inf")


class DecodeMode(str, Enum):
    LEXICON_FREE = "lexicon-free"
    CONSTRAINED = "lexicon-constrained"


@dataclass(frozen=True)
class BeamParams:
    """Beam-search settings; ``beam_score_threshold`` is in natural-log units."""

    beam_size: int = 64
    lm_weight: float = 1.5
    unit_insertion_bonus: float = 0.0
    beam_score_threshold: float = 25.0
    mode: DecodeMode = DecodeMode.LEXICON_FREE

    def __post_init__(self):
        object.__setattr__(self, "mode", DecodeMode(self.mode))
        if not isinstance(self.beam_size, int) or self.beam_size < 1:
            raise InvalidParameterError(f"beam_size must be a positive integer, got {self.beam_size!r}")
        if not self.beam_score_threshold >= 0:
            raise InvalidParameterError("beam_score_threshold must be >= 0")
        if not math.isfinite(self.lm_weight) or not math.isfinite(self.unit_insertion_bonus):
            raise InvalidParameterError("lm_weight and unit_insertion_bonus must be finite")


@dataclass
class DecodeResult:
    """One decoded hypothesis.

    ``frame_alignment`` is the per-frame argmax path for greedy decoding and a
    tuple of inclusive ``(first_frame, last_frame)`` spans, one per emitted
    token, for beam search. ``lm_log10`` is the total log10 language-model
    score of ``units`` including the end-of-sentence term.
    """

    text: str
    token_sequence: tuple[int, ...]
    frame_alignment: tuple
    acoustic_log_prob: float
    combined_score: float | None = None
    lm_log10: float = 0.0
    units: tuple[str, ...] = ()
    confidence: float | None = None


def ctc_collapse(path: Sequence[int], blank_index: int) -> list[int]:
    """Merge runs of identical tokens, then drop blanks."""
    return [tok for tok, _ in groupby(path) if tok != blank_index]


def _frame_log_probs(emissions: EmissionMatrix, temperature: float) -> np.ndarray:
    # log-probabilities are treated as logits: log_softmax(logp / T) is the
    # temperature-scaled distribution, and the identity at T = 1.
    return log_softmax_frames(emissions.frames, temperature)


def greedy_decode(
    emissions: EmissionMatrix, table: TokenTable, temperature: float = 1.0
) -> DecodeResult:
    """Best-path decoding: per-frame argmax (lowest index on ties), then collapse."""
    emissions.check_table(table)
    lp = _frame_log_probs(emissions, temperature)
    # argmax of the unscaled scores: temperature cannot merge near-ties
    path = emissions.frames.argmax(axis=1).tolist()
    acoustic = 0.0
    for t, tok in enumerate(path):
        acoustic += float(lp[t, tok])
    tokens = tuple(ctc_collapse(path, table.blank_index))
    return DecodeResult(
        text=table.to_text(tokens),
        token_sequence=tokens,
        frame_alignment=tuple(path),
        acoustic_log_prob=acoustic,
        units=tuple(table.unit(t) for t in tokens),
    )


def ctc_forced_align(log_probs: np.ndarray, tokens: Sequence[int], blank: int) -> tuple:
    """Frame spans of ``tokens`` along the best CTC path that spells them."""
    n_frames = log_probs.shape[0]
    if not tokens:
        return ()
    ext = [blank]
    for tok in tokens:
        ext += [tok, blank]
    ext_arr = np.array(ext)
    s = len(ext)
    # a transition s-2 -> s is allowed when ext[s] is a token differing from ext[s-2]
    skip = np.zeros(s, dtype=bool)
    skip[2:] = (ext_arr[2:] != blank) & (ext_arr[2:] != ext_arr[:-2])
    score = np.full(s, NEG_INF)
    score[0] = log_probs[0, ext[0]]
    score[1] = log_probs[0, ext[1]]
    back = np.zeros((n_frames, s), dtype=np.int8)
    for t in range(1, n_frames):
        stay = score
        step = np.concatenate(([NEG_INF], score[:-1]))
        jump = np.concatenate(([NEG_INF, NEG_INF], score[:-2]))
        jump = np.where(skip, jump, NEG_INF)
        cand = np.stack([stay, step, jump])
        choice = cand.argmax(axis=0)
        score = cand[choice, np.arange(s)] + log_probs[t, ext_arr]
        back[t] = choice
    end = s - 1 if score[s - 1] >= score[s - 2] else s - 2
    states = [0] * n_frames
    for t in range(n_frames - 1, -1, -1):
        states[t] = end
        end -= int(back[t, end])
    spans = []
    for t, st in enumerate(states):
        if st % 2 == 1:
            k = st // 2
            if len(spans) == k:
                spans.append([t, t])
            else:
                spans[k][1] = t
    return tuple(tuple(sp) for sp in spans)


# Conditional LM scores are shared between decodes of the same model.
_LM_CACHES: "weakref.WeakKeyDictionary[NGramModel, dict]" = weakref.WeakKeyDictionary()


def _lm_cache(lm: NGramModel) -> dict:
    cache = _LM_CACHES.get(lm)
    if cache is None:
        cache = _LM_CACHES.setdefault(lm, {})
    return cache


class _Hyp:
    __slots__ = ("tokens", "units", "node", "fusion", "lm_state", "lm10",
                 "pb", "pnb", "vb", "vnb", "tb", "tnb")

    def __init__(self, tokens, units, node, fusion, lm_state, lm10):
        self.tokens = tokens
        self.units = units
        self.node = node
        self.fusion = fusion
        self.lm_state = lm_state
        self.lm10 = lm10
        self.pb = self.pnb = self.vb = self.vnb = NEG_INF
        self.tb = self.tnb = -1

    def clone(self) -> "_Hyp":
        return _Hyp(self.tokens, self.units, self.node, self.fusion, self.lm_state, self.lm10)

    def prune_key(self):
        if self.vb > self.vnb:
            v, tok = self.vb, self.tb
        elif self.vnb > self.vb:
            v, tok = self.vnb, self.tnb
        else:
            v, tok = self.vb, min(self.tb, self.tnb)
        return (-(v + self.fusion), tok, self.tokens, self.units, self.node)


def _logadd(a: float, b: float) -> float:
    if a < b:
        a, b = b, a
    if b == NEG_INF:
        return a
    return a + math.log1p(math.exp(b - a))


class _Fusion:
    """Language-model and insertion-bonus bookkeeping for one decode."""

    def __init__(self, lm: NGramModel | None, params: BeamParams):
        self.lm = lm
        self.scale = params.lm_weight * LN10
        self.bonus = params.unit_insertion_bonus
        self.cache = _lm_cache(lm) if lm is not None else None
        self.initial_state = lm.state((BOS,)) if lm is not None else ()

    def extend(self, hyp: _Hyp, unit: str):
        """(fusion, lm_state, lm10) after emitting ``unit`` from ``hyp``."""
        if self.lm is None:
            return hyp.fusion + self.bonus, (), 0.0
        key = (hyp.lm_state, unit)
        hit = self.cache.get(key)
        if hit is None:
            hit = self.lm.score(hyp.lm_state, unit)
            self.cache[key] = hit
        lp10, state = hit
        return hyp.fusion + self.scale * lp10 + self.bonus, state, hyp.lm10 + lp10

    def finish(self, fusion: float, lm_state, lm10: float):
        if self.lm is None:
            return fusion, lm10
        lp10 = self.lm.log_prob(lm_state, EOS)
        return fusion + self.scale * lp10, lm10 + lp10


def check_decoder_config(table: TokenTable, lm, lexicon, params: BeamParams) -> None:
    if params.mode is DecodeMode.CONSTRAINED:
        if lexicon is None:
            raise ConfigurationError("lexicon-constrained decoding requires a lexicon")
        if lexicon.table.symbols != table.symbols:
            raise ConfigurationError("lexicon was built for a different token table")
        if lm is not None and lm.unit_level is not lexicon.unit_level:
            raise ConfigurationError(
                f"{lm.unit_level.value}-level LM cannot score {lexicon.unit_level.value}-level lexicon units"
            )
    else:
        if lexicon is not None:
            raise ConfigurationError("a lexicon was given but the decoding mode is lexicon-free")
        if lm is not None and lm.unit_level is not UnitLevel.CHARACTER:
            raise ConfigurationError(
                f"lexicon-free decoding needs a character-level LM, got {lm.unit_level.value}-level"
            )


def beam_search_decode(
    emissions: EmissionMatrix,
    table: TokenTable,
    lm: NGramModel | None = None,
    lexicon: Lexicon | None = None,
    params: BeamParams = BeamParams(),
    temperature: float = 1.0,
    nbest: int | None = None,
) -> list[DecodeResult]:
    """CTC prefix beam search with optional n-gram fusion and lexicon constraint.

    Returns hypotheses sorted by ``combined_score`` (best first), at most
    ``nbest`` of them when given.
    """
    emissions.check_table(table)
    check_decoder_config(table, lm, lexicon, params)
    lp_matrix = _frame_log_probs(emissions, temperature)
    blank = table.blank_index
    constrained = params.mode is DecodeMode.CONSTRAINED
    fusion = _Fusion(lm, params)

    if constrained:
        nodes = lexicon.nodes
        root = lexicon.root
        sep = table.space_index if lexicon.unit_level is UnitLevel.WORD else None
    units_of = [table.unit(i) for i in range(len(table))]

    start = _Hyp((), (), 0 if constrained else -1, 0.0, fusion.initial_state, 0.0)
    start.pb = start.vb = 0.0
    start.tb = blank
    if constrained:
        def key_of(h):
            return (h.tokens, h.units, h.node)
    else:
        def key_of(h):
            return h.tokens
    beam = {key_of(start): start}

    threshold = params.beam_score_threshold
    frame_max = lp_matrix.max(axis=1)
    for t in range(lp_matrix.shape[0]):
        lp = lp_matrix[t].tolist()
        if math.isinf(threshold):
            allowed = range(len(lp))
        else:
            allowed = np.flatnonzero(lp_matrix[t] >= frame_max[t] - threshold).tolist()
        allowed_set = set(allowed)
        blank_ok = blank in allowed_set
        nxt: dict = {}

        def add(key, proto: _Hyp, nonblank: bool, p: float, v: float, tok: int):
            h = nxt.get(key)
            if h is None:
                h = proto
                nxt[key] = h
            if nonblank:
                h.pnb = _logadd(h.pnb, p)
                if v > h.vnb or (v == h.vnb and tok < h.tnb):
                    h.vnb, h.tnb = v, tok
            else:
                h.pb = _logadd(h.pb, p)
                if v > h.vb or (v == h.vb and tok < h.tb):
                    h.vb, h.tb = v, tok

        for key, h in beam.items():
            total = _logadd(h.pb, h.pnb)
            vit = max(h.vb, h.vnb)
            last = h.tokens[-1] if h.tokens else -1
            if blank_ok:
                add(key, nxt.get(key) or h.clone(), False, total + lp[blank], vit + lp[blank], blank)
            if last >= 0 and last in allowed_set and h.pnb > NEG_INF:
                add(key, nxt.get(key) or h.clone(), True, h.pnb + lp[last], h.vnb + lp[last], last)
            for c in allowed:
                if c == blank:
                    continue
                if c == last:
                    src, vsrc = h.pb, h.vb
                    if src == NEG_INF:
                        continue
                else:
                    src, vsrc = total, vit
                p, v = src + lp[c], vsrc + lp[c]
                tokens = h.tokens + (c,)
                if not constrained:
                    if tokens in nxt:
                        add(tokens, None, True, p, v, c)
                        continue
                    f, state, lm10 = fusion.extend(h, units_of[c])
                    add(tokens, _Hyp(tokens, h.units + (units_of[c],), -1, f, state, lm10), True, p, v, c)
                    continue
                node = nodes[h.node]
                child = node.children.get(c)
                if child is not None:
                    nkey = (tokens, h.units, child.id)
                    add(nkey, nxt.get(nkey) or _Hyp(tokens, h.units, child.id, h.fusion, h.lm_state, h.lm10),
                        True, p, v, c)
                if node.units:
                    if sep is not None:
                        if c != sep:
                            continue
                        target = root
                    else:
                        target = root.children.get(c)
                        if target is None:
                            continue
                    for u in node.units:
                        units = h.units + (u,)
                        nkey = (tokens, units, target.id)
                        proto = nxt.get(nkey)
                        if proto is None:
                            f, state, lm10 = fusion.extend(h, u)
                            proto = _Hyp(tokens, units, target.id, f, state, lm10)
                        add(nkey, proto, True, p, v, c)

        if len(nxt) > params.beam_size:
            kept = heapq.nsmallest(params.beam_size, nxt.values(), key=_Hyp.prune_key)
            beam = {key_of(h): h for h in kept}
        else:
            beam = nxt

    finals: dict = {}
    for h in beam.values():
        acoustic = _logadd(h.pb, h.pnb)
        for tokens, units, f, state, lm10 in _finalize(h, fusion, lexicon if constrained else None,
                                                      sep if constrained else None):
            f, lm10 = fusion.finish(f, state, lm10)
            combined = acoustic + f
            key = (tokens, units)
            prev = finals.get(key)
            if prev is None or combined > prev[0]:
                finals[key] = (combined, acoustic, lm10)

    ranked = sorted(finals.items(), key=lambda kv: (-kv[1][0], kv[0][0], table.to_text(kv[0][0])))
    if nbest is not None:
        ranked = ranked[:nbest]
    results = []
    for (tokens, units), (combined, acoustic, lm10) in ranked:
        results.append(
            DecodeResult(
                text=table.to_text(tokens),
                token_sequence=tokens,
                frame_alignment=ctc_forced_align(lp_matrix, tokens, blank),
                acoustic_log_prob=acoustic,
                combined_score=combined,
                lm_log10=lm10,
                units=units,
            )
        )
    return results


def _finalize(h: _Hyp, fusion: _Fusion, lexicon: Lexicon | None, sep: int | None):
    """End-of-sequence handling; yields (tokens, units, fusion, lm_state, lm10)."""
    if lexicon is None:
        yield h.tokens, h.units, h.fusion, h.lm_state, h.lm10
        return
    node = lexicon.nodes[h.node]
    if node.depth == 0:
        tokens = h.tokens
        if sep is not None and tokens and tokens[-1] == sep:
            tokens = tokens[:-1]
        yield tokens, h.units, h.fusion, h.lm_state, h.lm10
        return
    # Inside a unit: complete it, or roll back to the deepest accepting ancestor.
    anc = node
    while anc is not None and anc.depth > 0 and not anc.units:
        anc = anc.parent
    if anc is None or anc.depth == 0:
        return
    tokens = h.tokens[: len(h.tokens) - (node.depth - anc.depth)]
    for u in anc.units:
        f, state, lm10 = fusion.extend(h, u)
        yield tokens, h.units + (u,), f, state, lm10


class BatchDecodeError(AtrlmError):
    """Some lines failed; ``results`` holds None at their positions."""

    def __init__(self, failures: dict[str, Exception], results: list):
        self.failures = failures
        self.results = results
        first = next(iter(failures.items()))
        super().__init__(f"{len(failures)} line(s) failed to decode; first: {first[0]}: {first[1]}")


@dataclass(frozen=True)
class DecoderConfig:
    """Shared settings for decoding many lines."""

    table: TokenTable
    lm: NGramModel | None = None
    lexicon: Lexicon | None = None
    params: BeamParams = field(default_factory=BeamParams)
    temperature: float = 1.0
    use_beam: bool | None = None

    @property
    def beam(self) -> bool:
        if self.use_beam is not None:
            return self.use_beam
        return self.lm is not None or self.lexicon is not None

    def decode(self, emissions: EmissionMatrix) -> DecodeResult:
        if not self.beam:
            return greedy_decode(emissions, self.table, self.temperature)
        return beam_search_decode(
            emissions, self.table, self.lm, self.lexicon, self.params, self.temperature, nbest=1
        )[0]


def batch_decode(
    items: Sequence[EmissionMatrix] | Sequence[tuple[str, EmissionMatrix]],
    config: DecoderConfig,
    threads: int = 1,
) -> list[DecodeResult]:
    """Decode lines in input order, optionally on a thread pool.

    Items may be bare matrices or ``(line_id, matrix)`` pairs. Failures do not
    stop other lines; they are collected into a :class:`BatchDecodeError`.
    """
    ids, mats = [], []
    for i, item in enumerate(items):
        if isinstance(item, tuple):
            ids.append(str(item[0]))
            mats.append(item[1])
        else:
            ids.append(str(i))
            mats.append(item)

    def run(m):
        try:
            return config.decode(m), None
        except Exception as exc:  # noqa: BLE001 - reported per line
            return None, exc

    if threads > 1 and len(mats) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, mats))
    else:
        outcomes = [run(m) for m in mats]
    results = [r for r, _ in outcomes]
    failures = {ids[i]: exc for i, (_, exc) in enumerate(outcomes) if exc is not None}
    if failures:
        raise BatchDecodeError(failures, results)
    return results
