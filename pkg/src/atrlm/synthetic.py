"""Synthetic text sources and emission renderers for experiments and benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .emissions import EmissionMatrix, TokenTable
from .symbols import BLANK

DEFAULT_ALPHABET = "abcdeilmnorst"


@dataclass
class MarkovTextSource:
    """Word-bigram Markov source over a fixed random vocabulary.

    Transition rows are sparse (each word has a handful of likely successors)
    so the text carries enough structure for an n-gram model to exploit.
    """

    words: list[str]
    start: np.ndarray
    transitions: np.ndarray
    stop_prob: float = 0.25
    max_words: int = 6

    @classmethod
    def random(
        cls,
        seed: int = 0,
        n_words: int = 40,
        alphabet: str = DEFAULT_ALPHABET,
        successors: int = 4,
        min_len: int = 2,
        max_len: int = 6,
    ) -> "MarkovTextSource":
        rng = np.random.default_rng(seed)
        words: list[str] = []
        seen = set()
        while len(words) < n_words:
            length = int(rng.integers(min_len, max_len + 1))
            w = "".join(rng.choice(list(alphabet), size=length))
            if w not in seen:
                seen.add(w)
                words.append(w)
        start = rng.dirichlet(np.full(n_words, 0.5))
        transitions = np.zeros((n_words, n_words))
        for i in range(n_words):
            nxt = rng.choice(n_words, size=successors, replace=False)
            transitions[i, nxt] = rng.dirichlet(np.ones(successors))
        return cls(words, start, transitions)

    def sample(self, rng: np.random.Generator) -> str:
        w = int(rng.choice(len(self.words), p=self.start))
        out = [self.words[w]]
        while len(out) < self.max_words and (len(out) < 2 or rng.random() > self.stop_prob):
            w = int(rng.choice(len(self.words), p=self.transitions[w]))
            out.append(self.words[w])
        return " ".join(out)

    def sample_many(self, n: int, seed: int) -> list[str]:
        rng = np.random.default_rng(seed)
        return [self.sample(rng) for _ in range(n)]


def char_token_table(alphabet: str = DEFAULT_ALPHABET, space: bool = True) -> TokenTable:
    symbols = [BLANK, *alphabet]
    if space:
        symbols.append("<space>")
    return TokenTable.from_symbols(symbols)


def text_to_path(text: str, table: TokenTable, blank_frames: int = 1) -> list[int]:
    """Frame-level path spelling ``text``: each character then blank frames."""
    path = []
    for ch in text:
        idx = table.char_index(ch)
        if idx is None:
            raise KeyError(f"character {ch!r} not in token table")
        path.append(idx)
        path.extend([table.blank_index] * blank_frames)
    return path or [table.blank_index]


def render_emissions(
    text: str,
    table: TokenTable,
    rng: np.random.Generator,
    noise: float = 0.0,
    peak: float = 5.0,
    blank_frames: int = 1,
) -> EmissionMatrix:
    """One-hot logits (``peak`` on the target token) plus Gaussian noise."""
    path = text_to_path(text, table, blank_frames)
    logits = np.zeros((len(path), len(table)))
    logits[np.arange(len(path)), path] = peak
    if noise > 0:
        logits += rng.normal(0.0, noise, size=logits.shape)
    return EmissionMatrix(logits)


def saturated_calibration_set(
    n_lines: int = 60,
    line_length: int = 20,
    seed: int = 0,
    alphabet: str = "abc",
    margin_range: tuple[float, float] = (4.6, 5.69),
) -> tuple[TokenTable, list[EmissionMatrix], list[str]]:
    """Lines whose softmax confidence saturates near 0.97-0.99 at T = 1.

    Line ``i`` has a latent quality ``q`` in [0, 1]; every frame has logit
    margin ``lo + q (hi - lo)`` over the other tokens and the number of
    substituted characters falls linearly with ``q``. Returns the token
    table, emissions and reference texts.
    """
    rng = np.random.default_rng(seed)
    table = TokenTable.from_symbols([BLANK, *alphabet])
    letters = list(alphabet)
    lo, hi = margin_range
    emissions, references = [], []
    for i in range(n_lines):
        q = i / (n_lines - 1)
        margin = lo + q * (hi - lo)
        n_errors = int(round((1.0 - q) * 0.5 * line_length))
        ref = "".join(rng.choice(letters, size=line_length))
        wrong = set(rng.choice(line_length, size=n_errors, replace=False).tolist())
        hyp = [
            letters[(letters.index(c) + 1) % len(letters)] if k in wrong else c
            for k, c in enumerate(ref)
        ]
        path = text_to_path("".join(hyp), table)
        logits = np.zeros((len(path), len(table)))
        logits[np.arange(len(path)), path] = margin
        emissions.append(EmissionMatrix(logits))
        references.append(ref)
    return table, emissions, references
