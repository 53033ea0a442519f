"""Lexicon of language-model units spelled with emission tokens, plus its trie."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .emissions import TokenTable
from .errors import ConfigurationError, ParseError
from .lm.tokenize import UnitLevel

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class TrieNode:
    id: int
    depth: int
    parent: "TrieNode | None" = field(default=None, repr=False)
    children: dict[int, "TrieNode"] = field(default_factory=dict, repr=False)
    units: tuple[str, ...] = ()

    @property
    def accepting(self) -> bool:
        return bool(self.units)


def trie_advance(node: TrieNode, token: int) -> TrieNode | None:
    return node.children.get(token)


class Lexicon:
    """Units with one or more spellings, indexed by a prefix tree.

    Construction validates every spelling against the token table; the
    instance is not modified afterwards.
    """

    def __init__(
        self,
        entries: Mapping[str, Iterable[Sequence[int]]],
        table: TokenTable,
        unit_level: UnitLevel | str = UnitLevel.WORD,
    ):
        self.table = table
        self.unit_level = UnitLevel(unit_level)
        if self.unit_level is UnitLevel.CHARACTER:
            raise ConfigurationError("character-level decoding does not use a lexicon")
        self.entries: dict[str, tuple[tuple[int, ...], ...]] = {}
        for unit, spellings in entries.items():
            uniq: list[tuple[int, ...]] = []
            for sp in spellings:
                sp = tuple(int(t) for t in sp)
                if not sp:
                    raise ConfigurationError(f"unit {unit!r} has an empty spelling")
                for t in sp:
                    if not 0 <= t < len(table) or t == table.blank_index:
                        raise ConfigurationError(f"unit {unit!r} uses invalid token index {t}")
                if sp not in uniq:
                    uniq.append(sp)
            if uniq:
                self.entries[unit] = tuple(uniq)
        if not self.entries:
            raise ConfigurationError("lexicon is empty")
        self.nodes: list[TrieNode] = [TrieNode(0, 0)]
        for unit in sorted(self.entries):
            for sp in self.entries[unit]:
                node = self.root
                for t in sp:
                    nxt = node.children.get(t)
                    if nxt is None:
                        nxt = TrieNode(len(self.nodes), node.depth + 1, node)
                        self.nodes.append(nxt)
                        node.children[t] = nxt
                    node = nxt
                if unit not in node.units:
                    node.units = node.units + (unit,)

    @property
    def root(self) -> TrieNode:
        return self.nodes[0]

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, unit: str) -> bool:
        return unit in self.entries

    def walk(self, spelling: Sequence[int]) -> TrieNode | None:
        node: TrieNode | None = self.root
        for t in spelling:
            node = trie_advance(node, t)
            if node is None:
                return None
        return node

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for unit in sorted(self.entries):
                for sp in self.entries[unit]:
                    f.write(" ".join([unit, *(self.table.symbols[t] for t in sp)]) + "\n")


def spell(unit: str, table: TokenTable) -> tuple[int, ...] | None:
    """Character decomposition of ``unit`` as token indices, None if impossible."""
    out = []
    for ch in unit:
        idx = table.char_index(ch)
        if idx is None or idx == table.blank_index:
            return None
        out.append(idx)
    return tuple(out)


def build_lexicon_from_corpus(
    corpus: Iterable[Sequence[str]],
    table: TokenTable,
    unit_level: UnitLevel | str = UnitLevel.WORD,
) -> tuple[Lexicon, int]:
    """Lexicon of all distinct corpus units; returns it with the dropped-unit count.

    Units containing characters the token table cannot emit are skipped.
    """
    entries: dict[str, list[tuple[int, ...]]] = {}
    dropped: set[str] = set()
    for units in corpus:
        for u in units:
            if u in entries or u in dropped:
                continue
            sp = spell(u, table)
            if sp is None or not sp:
                dropped.add(u)
            else:
                entries[u] = [sp]
    if dropped:
        logger.warning(
            "dropped %d unit(s) not spellable with the token table: %s",
            len(dropped),
            ", ".join(sorted(dropped)[:10]),
        )
    return Lexicon(entries, table, unit_level), len(dropped)


def parse_lexicon_file(path, table: TokenTable, unit_level: UnitLevel | str = UnitLevel.WORD) -> Lexicon:
    """Read ``UNIT TOK1 TOK2 ...`` lines; repeated units add alternative spellings."""
    entries: dict[str, list[tuple[int, ...]]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) < 2:
                raise ParseError(f"unit {fields[0]!r} has no spelling", path, lineno)
            unit, symbols = fields[0], fields[1:]
            sp = []
            for sym in symbols:
                idx = table.get(sym)
                if idx is None:
                    raise ParseError(f"unknown token symbol {sym!r}", path, lineno)
                if idx == table.blank_index:
                    raise ParseError("spelling uses the blank token", path, lineno)
                sp.append(idx)
            entries.setdefault(unit, []).append(tuple(sp))
    if not entries:
        raise ParseError("lexicon file is empty", path)
    return Lexicon(entries, table, unit_level)
