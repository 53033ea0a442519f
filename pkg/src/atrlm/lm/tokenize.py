"""Transcript tokenization at character, subword or word level."""

from __future__ import annotations

from enum import Enum
from typing import Collection, Iterable

from ..errors import ConfigurationError, InvalidInputError
from ..symbols import RESERVED_UNITS, SPACE_MARKER


class UnitLevel(str, Enum):
    CHARACTER = "char"
    SUBWORD = "subword"
    WORD = "word"


def tokenize(
    transcript: str,
    level: UnitLevel | str,
    subword_inventory: Collection[str] | None = None,
    space_marker: str = SPACE_MARKER,
) -> list[str]:
    """Split ``transcript`` into language-model units.

    Spaces become ``space_marker`` at character and subword level. Subwords
    are matched greedily, longest first, with single characters as fallback.

    >>> tokenize("ab c", "char")
    ['a', 'b', '▁', 'c']
    >>> tokenize("abc", "subword", {"ab", "c", "a", "b"})
    ['ab', 'c']
    """
    level = UnitLevel(level)
    if level is UnitLevel.WORD:
        return transcript.split()
    text = transcript.replace(" ", space_marker)
    if level is UnitLevel.CHARACTER:
        return list(text)
    if subword_inventory is None:
        raise ConfigurationError("subword tokenization requires a subword inventory")
    inventory = {p.replace(" ", space_marker) for p in subword_inventory if p}
    longest = max((len(p) for p in inventory), default=1)
    units = []
    i = 0
    while i < len(text):
        for size in range(min(longest, len(text) - i), 0, -1):
            piece = text[i : i + size]
            if size == 1 or piece in inventory:
                units.append(piece)
                i += size
                break
    return units


def tokenize_corpus(
    lines: Iterable[str],
    level: UnitLevel | str,
    subword_inventory: Collection[str] | None = None,
) -> list[list[str]]:
    """Tokenize one sentence per line, skipping blank lines."""
    corpus = []
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        units = tokenize(line, level, subword_inventory)
        check_sentence(units, lineno)
        corpus.append(units)
    return corpus


def check_sentence(units: Iterable[str], lineno: int | None = None) -> None:
    for unit in units:
        if unit in RESERVED_UNITS:
            where = f" (sentence {lineno})" if lineno is not None else ""
            raise InvalidInputError(f"reserved unit {unit!r} in corpus{where}")
        if not unit or any(ch.isspace() for ch in unit):
            raise InvalidInputError(f"unit {unit!r} is empty or contains whitespace")


def read_subword_inventory(path) -> set[str]:
    with open(path, encoding="utf-8") as f:
        return {line.split()[0] for line in f if line.strip()}
