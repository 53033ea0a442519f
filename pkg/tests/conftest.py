"""Shared fixtures and independent oracles."""

import itertools
import math
import warnings
from pathlib import Path

import numpy as np
import pytest
from scipy.special import logsumexp

from atrlm.emissions import TokenTable
from atrlm.lm import estimate_kneser_ney
from atrlm.lm.kneser_ney import DiscountFallbackWarning

DATA = Path(__file__).parent / "data"


@pytest.fixture
def abc_table():
    return TokenTable.from_symbols(["<ctc>", "a", "b", "c"])


def quiet_kn(corpus, order, level="char", **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DiscountFallbackWarning)
        return estimate_kneser_ney(corpus, order, level, **kw)


def random_char_bigram(rng, alphabet="abc", n_sentences=6):
    """KN bigram over random character sentences."""
    corpus = []
    for _ in range(n_sentences):
        length = int(rng.integers(1, 5))
        corpus.append(list(rng.choice(list(alphabet), size=length)))
    return quiet_kn(corpus, 2)


def frame_log_softmax(frames, temperature=1.0):
    x = np.asarray(frames, dtype=np.float64) / temperature
    return x - logsumexp(x, axis=1, keepdims=True)


def collapse(path, blank):
    out = []
    prev = None
    for tok in path:
        if tok != prev and tok != blank:
            out.append(tok)
        prev = tok
    return tuple(out)


def enumerate_labelings(frames, blank, temperature=1.0):
    """All labelings reachable by some path, with their summed log-probability."""
    lp = frame_log_softmax(frames, temperature)
    n_frames, v = lp.shape
    scores = {}
    for path in itertools.product(range(v), repeat=n_frames):
        s = sum(lp[t, tok] for t, tok in enumerate(path))
        scores.setdefault(collapse(path, blank), []).append(s)
    return {lab: float(logsumexp(ss)) for lab, ss in scores.items()}


def brute_force_best(frames, table, lm, lm_weight, bonus=0.0):
    """Highest acoustic + fused score over all labelings, ties to the smaller token tuple."""
    best = None
    for lab, ac in enumerate_labelings(frames, table.blank_index).items():
        units = [table.unit(t) for t in lab]
        score = ac + bonus * len(units)
        if lm is not None:
            score += lm_weight * math.log(10) * lm.sentence_log_prob(units)
        cand = (-score, lab)
        if best is None or cand < best:
            best = cand
    return best[1], -best[0]


ACCEPTANCE: dict[int, str] = {}


def record_criterion(number, name, ok, detail):
    """Remember one acceptance line for the terminal summary and echo it."""
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
