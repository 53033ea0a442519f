"""Error rates, relative change and correlation statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import DegenerateInputError, ParseError, UndefinedDeltaError, UndefinedReferenceError


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance with unit costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def cer(reference: str, hypothesis: str) -> float:
    """Character error rate in percent over Unicode code points, spaces included."""
    if not reference:
        raise UndefinedReferenceError("CER is undefined for an empty reference")
    return 100.0 * edit_distance(reference, hypothesis) / len(reference)


def wer(reference: str, hypothesis: str) -> float:
    ref_words = reference.split()
    if not ref_words:
        raise UndefinedReferenceError("WER is undefined for a reference without words")
    return 100.0 * edit_distance(ref_words, hypothesis.split()) / len(ref_words)


def relative_change(before: float, after: float) -> float:
    """Signed relative change in percent, ``100 (after - before) / before``."""
    if before == 0:
        raise UndefinedDeltaError("relative change from a zero baseline is undefined")
    return 100.0 * (after - before) / before


def _t_pvalue(r: float, n: int) -> float:
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(2.0 * stats.t.sf(abs(t), n - 2))


def _prepare(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise DegenerateInputError("correlation needs two vectors of equal length")
    if x.size < 3:
        raise DegenerateInputError("correlation needs at least 3 points")
    return x, y


def pearson(x, y) -> tuple[float, float]:
    """Sample Pearson r and two-tailed p-value from the t approximation."""
    x, y = _prepare(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInputError("correlation is undefined for a constant vector")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    return r, _t_pvalue(r, x.size)


def spearman(x, y) -> tuple[float, float]:
    """Pearson correlation of average ranks (ties share their mean rank)."""
    x, y = _prepare(x, y)
    return pearson(stats.rankdata(x), stats.rankdata(y))


@dataclass
class EvalRecord:
    line_id: str
    reference: str
    hypothesis: str
    confidence: float | None = None


@dataclass
class EvalSummary:
    """Corpus-level error rates (micro-averaged) and per-line rates.

    ``wer`` is None when no reference contains whitespace (unsegmented
    scripts), mirroring how word error rates are omitted for such data.
    """

    cer: float
    wer: float | None
    n_lines: int
    per_line: list[tuple[str, float, float | None]] = field(default_factory=list)
    pearson: tuple[float, float] | None = None
    spearman: tuple[float, float] | None = None

    def as_dict(self) -> dict[str, float | int]:
        out: dict[str, float | int] = {"cer": self.cer}
        if self.wer is not None:
            out["wer"] = self.wer
        if self.pearson is not None:
            out["pearson"], out["p_pearson"] = self.pearson
        if self.spearman is not None:
            out["spearman"], out["p_spearman"] = self.spearman
        out["n"] = self.n_lines
        return out

    def to_keyvalue(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.as_dict().items())


def _fmt(v) -> str:
    return str(v) if isinstance(v, int) else f"{v:.6g}"


def evaluate(records: Sequence[EvalRecord]) -> EvalSummary:
    if not records:
        raise ValueError("nothing to evaluate")
    char_edits = char_total = word_edits = word_total = 0
    with_words = any(len(r.reference.split()) > 1 or " " in r.reference.strip() for r in records)
    per_line = []
    for r in records:
        if not r.reference:
            raise UndefinedReferenceError(f"line {r.line_id}: empty reference")
        ce = edit_distance(r.reference, r.hypothesis)
        char_edits += ce
        char_total += len(r.reference)
        line_wer = None
        ref_words = r.reference.split()
        if with_words and ref_words:
            we = edit_distance(ref_words, r.hypothesis.split())
            word_edits += we
            word_total += len(ref_words)
            line_wer = 100.0 * we / len(ref_words)
        per_line.append((r.line_id, 100.0 * ce / len(r.reference), line_wer))
    summary = EvalSummary(
        cer=100.0 * char_edits / char_total,
        wer=100.0 * word_edits / word_total if with_words and word_total else None,
        n_lines=len(records),
        per_line=per_line,
    )
    if all(r.confidence is not None for r in records) and len(records) >= 3:
        conf = [r.confidence for r in records]
        rate = [1.0 - c / 100.0 for _, c, _ in per_line]
        try:
            summary.pearson = pearson(conf, rate)
            summary.spearman = spearman(conf, rate)
        except DegenerateInputError:
            pass
    return summary


def read_tsv(path, min_fields: int = 2) -> list[list[str]]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) < min_fields:
                raise ParseError(f"expected at least {min_fields} tab-separated fields", path, lineno)
            rows.append(fields)
    return rows


def read_references(path) -> dict[str, str]:
    refs: dict[str, str] = {}
    for lineno, fields in enumerate(read_tsv(path), 1):
        if fields[0] in refs:
            raise ParseError(f"duplicate line id {fields[0]!r}", path)
        refs[fields[0]] = fields[1]
    return refs


def read_predictions(path) -> list[tuple[str, str, float | None]]:
    """``LINE_ID<TAB>HYPOTHESIS[<TAB>CONFIDENCE[<TAB>SPANS]]`` records."""
    out = []
    for fields in read_tsv(path):
        conf = None
        if len(fields) >= 3 and fields[2].strip():
            try:
                conf = float(fields[2])
            except ValueError:
                raise ParseError(f"confidence {fields[2]!r} is not a number", path) from None
        out.append((fields[0], fields[1], conf))
    return out


def mean(values: Iterable[float]) -> float:
    values = list(values)
    return sum(values) / len(values)
