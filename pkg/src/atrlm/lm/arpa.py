"""ARPA text format reader and writer."""

from __future__ import annotations

import math
import re

from ..errors import ParseError
from .model import NGramModel
from .tokenize import UnitLevel

_COUNT_RE = re.compile(r"^ngram\s+(\d+)\s*=\s*(\d+)$")
_SECTION_RE = re.compile(r"^\\(\d+)-grams:$")


def format_log10(value: float) -> str:
    """Ten significant digits: re-parsed queries agree well below 1e-6."""
    text = format(value, ".10g")
    return "0" if text == "-0" else text


def write_arpa(model: NGramModel, path) -> None:
    """Serialize ``model``; n-grams sorted per order for byte-stable output."""
    by_order: list[list] = [[] for _ in range(model.order)]
    for g in model.probs:
        by_order[len(g) - 1].append(g)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\\data\\\n")
        for n, grams in enumerate(by_order, 1):
            f.write(f"ngram {n}={len(grams)}\n")
        for n, grams in enumerate(by_order, 1):
            f.write(f"\n\\{n}-grams:\n")
            for g in sorted(grams):
                line = f"{format_log10(model.probs[g])}\t{' '.join(g)}"
                if n < model.order:
                    line += f"\t{format_log10(model.backoffs.get(g, 0.0))}"
                f.write(line + "\n")
        f.write("\n\\end\\\n")


def _number(text: str, what: str, path, lineno: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{what} {text!r} is not a number", path, lineno) from None
    if not math.isfinite(value):
        raise ParseError(f"{what} {text!r} is not finite", path, lineno)
    return value


def parse_arpa(path, unit_level: UnitLevel | str = UnitLevel.CHARACTER) -> NGramModel:
    """Read an ARPA file, checking counts and prefix closure.

    Fields may be separated by tabs or spaces; the back-off column is
    optional below the highest order and forbidden at it.
    """
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()

    i = 0
    n_lines = len(lines)

    def skip_blank(j: int) -> int:
        while j < n_lines and not lines[j].strip():
            j += 1
        return j

    i = skip_blank(i)
    if i >= n_lines or lines[i].strip() != "\\data\\":
        raise ParseError("missing \\data\\ header", path, min(i, n_lines - 1) + 1 if n_lines else 1)
    i += 1
    declared: dict[int, int] = {}
    while i < n_lines:
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        m = _COUNT_RE.match(line)
        if not m:
            break
        n, count = int(m.group(1)), int(m.group(2))
        if n in declared or n != len(declared) + 1:
            raise ParseError(f"unexpected count line {line!r}", path, i + 1)
        declared[n] = count
        i += 1
    if not declared:
        raise ParseError("no 'ngram N=COUNT' lines after \\data\\", path, i + 1)
    order = max(declared)

    probs: dict[tuple[str, ...], float] = {}
    backoffs: dict[tuple[str, ...], float] = {}
    seen_orders = set()
    ended = False
    while i < n_lines:
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if line == "\\end\\":
            ended = True
            i += 1
            break
        m = _SECTION_RE.match(line)
        if not m:
            raise ParseError(f"expected a section header, got {line!r}", path, i + 1)
        n = int(m.group(1))
        if n not in declared or n in seen_orders or n != len(seen_orders) + 1:
            raise ParseError(f"unexpected section \\{n}-grams:", path, i + 1)
        seen_orders.add(n)
        header_line = i + 1
        i += 1
        found = 0
        while i < n_lines:
            line = lines[i].strip()
            if not line or line.startswith("\\"):
                break
            fields = line.split()
            lineno = i + 1
            if len(fields) == n + 1:
                bo = None
            elif len(fields) == n + 2 and n < order:
                bo = _number(fields[-1], "back-off", path, lineno)
            else:
                raise ParseError(
                    f"{n}-gram line has {len(fields)} fields, expected {n + 1}"
                    + (f" or {n + 2}" if n < order else ""),
                    path,
                    lineno,
                )
            prob = _number(fields[0], "log10 probability", path, lineno)
            if prob > 0:
                raise ParseError(f"log10 probability {prob} is positive", path, lineno)
            gram = tuple(fields[1 : n + 1])
            if gram in probs:
                raise ParseError(f"duplicate {n}-gram {' '.join(gram)!r}", path, lineno)
            if n > 1 and gram[:-1] not in probs:
                raise ParseError(
                    f"{n}-gram {' '.join(gram)!r} has no stored prefix {' '.join(gram[:-1])!r}",
                    path,
                    lineno,
                )
            probs[gram] = prob
            if bo is not None:
                backoffs[gram] = bo
            found += 1
            i += 1
        if found != declared[n]:
            raise ParseError(
                f"header declares {declared[n]} {n}-grams, section lists {found}", path, header_line
            )
    if not ended:
        raise ParseError("missing \\end\\ marker", path, n_lines)
    for j in range(i, n_lines):
        if lines[j].strip():
            raise ParseError("content after \\end\\", path, j + 1)
    missing = sorted(set(declared) - seen_orders)
    if missing:
        raise ParseError(f"section \\{missing[0]}-grams: is missing", path, n_lines)
    return NGramModel(order, probs, backoffs, UnitLevel(unit_level))
