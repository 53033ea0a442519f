"""Emission matrices, token tables and temperature-scaled softmax."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError, InvalidParameterError, ParseError
from .symbols import BLANK, SPACE_MARKER, SPACE_SYMBOLS

PathLike = str | os.PathLike


class EmissionKind(str, Enum):
    LOGITS = "logits"
    LOG_PROBS = "log-probs"


@dataclass(frozen=True)
class TokenTable:
    """Emission vocabulary; position in ``symbols`` is the emission column."""

    symbols: tuple[str, ...]
    blank_index: int
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        symbols = tuple(self.symbols)
        object.__setattr__(self, "symbols", symbols)
        if not symbols:
            raise InvalidInputError("token table is empty")
        index = {}
        for i, sym in enumerate(symbols):
            if not sym or any(ch.isspace() for ch in sym):
                raise InvalidInputError(f"invalid token symbol {sym!r} at index {i}")
            if sym in index:
                raise InvalidInputError(f"duplicate token symbol {sym!r}")
            index[sym] = i
        if not 0 <= self.blank_index < len(symbols):
            raise InvalidInputError(f"blank index {self.blank_index} out of range")
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_symbols(cls, symbols: Iterable[str], blank: str = BLANK) -> "TokenTable":
        symbols = tuple(symbols)
        if blank not in symbols:
            raise InvalidInputError(f"blank symbol {blank!r} not in token table")
        return cls(symbols, symbols.index(blank))

    def __len__(self) -> int:
        return len(self.symbols)

    def index(self, symbol: str) -> int:
        return self._index[symbol]

    def get(self, symbol: str) -> int | None:
        return self._index.get(symbol)

    @property
    def space_index(self) -> int | None:
        for sym in sorted(SPACE_SYMBOLS):
            if sym in self._index:
                return self._index[sym]
        return None

    def char_index(self, char: str) -> int | None:
        """Token index emitting ``char``; spaces map to the space token."""
        if char == " " or char == SPACE_MARKER:
            return self.space_index
        return self._index.get(char)

    def unit(self, index: int) -> str:
        """Language-model unit of a token (space tokens become the marker)."""
        sym = self.symbols[index]
        return SPACE_MARKER if sym in SPACE_SYMBOLS else sym

    def to_text(self, indices: Iterable[int]) -> str:
        return "".join(
            " " if self.symbols[i] in SPACE_SYMBOLS else self.symbols[i] for i in indices
        )


@dataclass(frozen=True)
class EmissionMatrix:
    """T x V frame scores. Read-only numpy array."""

    frames: np.ndarray
    kind: EmissionKind = EmissionKind.LOGITS

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
            raise InvalidInputError(f"emission matrix must be T x V with T, V >= 1, got {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise InvalidInputError("emission matrix contains non-finite values")
        kind = EmissionKind(self.kind)
        if kind is EmissionKind.LOG_PROBS:
            lse = _logsumexp_rows(frames)
            bad = np.flatnonzero(np.abs(lse) > 1e-4)
            if bad.size:
                raise InvalidInputError(
                    f"frame {bad[0]} is not log-normalized (log-sum-exp {lse[bad[0]]:.3g})"
                )
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "kind", kind)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def num_tokens(self) -> int:
        return self.frames.shape[1]

    def check_table(self, table: TokenTable) -> None:
        if self.num_tokens != len(table):
            raise InvalidInputError(
                f"emission matrix has {self.num_tokens} columns, token table has {len(table)} symbols"
            )

    def log_probs(self, temperature: float = 1.0) -> np.ndarray:
        """Per-frame log-softmax of the scores divided by ``temperature``."""
        return log_softmax_frames(self.frames, temperature)

    def probs(self, temperature: float = 1.0) -> np.ndarray:
        return np.exp(self.log_probs(temperature))


def _check_temperature(temperature: float) -> float:
    temperature = float(temperature)
    if not temperature > 0 or not math.isfinite(temperature):
        raise InvalidParameterError(f"temperature must be positive and finite, got {temperature}")
    return temperature


def _logsumexp_rows(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=-1, keepdims=True)))[..., 0]


def _as_finite_vector(logits: Sequence[float] | np.ndarray) -> np.ndarray:
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInputError("expected a non-empty vector of logits")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("logits contain non-finite values")
    return x


def softmax_with_temperature(logits, temperature: float = 1.0) -> np.ndarray:
    """``exp(x_i / T) / sum_j exp(x_j / T)``, max-shifted for stability."""
    temperature = _check_temperature(temperature)
    x = _as_finite_vector(logits) / temperature
    e = np.exp(x - x.max())
    return e / e.sum()


def log_softmax(logits) -> np.ndarray:
    x = _as_finite_vector(logits)
    shifted = x - x.max()
    return shifted - math.log(np.exp(shifted).sum())


def log_softmax_frames(frames: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Row-wise log-softmax of a T x V matrix at the given temperature."""
    temperature = _check_temperature(temperature)
    x = np.asarray(frames, dtype=np.float64) / temperature
    shifted = x - x.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def load_emissions(path: PathLike, kind: EmissionKind | str = EmissionKind.LOGITS) -> EmissionMatrix:
    """Read a text emission file: ``T V`` header, then T rows of V floats.

    ``#`` comment lines are allowed before the header only.
    """
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    lineno = 0
    header = None
    while lineno < len(lines):
        line = lines[lineno]
        lineno += 1
        if line.startswith("#"):
            continue
        header = line
        break
    if header is None:
        raise ParseError("missing 'T V' header", path, lineno or 1)
    parts = header.split(" ")
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise ParseError(f"malformed header {header!r}, expected 'T V'", path, lineno)
    n_frames, n_tokens = int(parts[0]), int(parts[1])
    if n_frames < 1 or n_tokens < 1:
        raise ParseError(f"header declares an empty matrix ({n_frames} x {n_tokens})", path, lineno)
    rows = []
    for t in range(n_frames):
        if lineno >= len(lines):
            raise ParseError(
                f"header declares {n_frames} rows but file ends after {t}", path, lineno + 1
            )
        fields = lines[lineno].split()
        lineno += 1
        if len(fields) != n_tokens:
            raise ParseError(f"expected {n_tokens} values, found {len(fields)}", path, lineno)
        try:
            row = [float(v) for v in fields]
        except ValueError as exc:
            raise ParseError(f"non-numeric field: {exc}", path, lineno) from None
        rows.append(row)
    for extra in lines[lineno:]:
        lineno += 1
        if extra.strip():
            raise ParseError(f"header declares {n_frames} rows but more are present", path, lineno)
    try:
        return EmissionMatrix(np.array(rows), kind)
    except InvalidInputError as exc:
        raise ParseError(str(exc), path) from None


def write_emissions(matrix: EmissionMatrix | np.ndarray, path: PathLike, precision: int = 17) -> None:
    frames = matrix.frames if isinstance(matrix, EmissionMatrix) else np.asarray(matrix)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{frames.shape[0]} {frames.shape[1]}\n")
        for row in frames:
            f.write(" ".join(format(float(v), f".{precision}g") for v in row))
            f.write("\n")


def load_token_table(path: PathLike, blank: str = BLANK) -> TokenTable:
    """Read ``symbol index`` lines; the blank is resolved by name."""
    by_index: dict[int, str] = {}
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 2:
                raise ParseError(f"expected 'symbol index', got {line.strip()!r}", path, lineno)
            sym, idx = fields
            try:
                i = int(idx)
            except ValueError:
                raise ParseError(f"index {idx!r} is not an integer", path, lineno) from None
            if sym in seen:
                raise ParseError(f"duplicate symbol {sym!r}", path, lineno)
            if i in by_index:
                raise ParseError(f"duplicate index {i}", path, lineno)
            if i < 0:
                raise ParseError(f"negative index {i}", path, lineno)
            seen[sym] = lineno
            by_index[i] = sym
    if not by_index:
        raise ParseError("token table is empty", path)
    size = len(by_index)
    missing = [i for i in range(size) if i not in by_index]
    if missing:
        raise ParseError(f"gap in token indices: {missing[0]} is missing", path)
    if blank not in seen:
        raise ParseError(f"blank symbol {blank!r} not found", path)
    return TokenTable.from_symbols((by_index[i] for i in range(size)), blank=blank)


def write_token_table(table: TokenTable, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for i, sym in enumerate(table.symbols):
            f.write(f"{sym} {i}\n")
