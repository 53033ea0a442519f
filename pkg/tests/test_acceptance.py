"""Acceptance criteria, one test each; every test records a PASS/FAIL line."""

import itertools
import math
import random
import time
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
import pytest

from atrlm.cli import main, parse_bench_table
from atrlm.confidence import ConfidenceMethod, confidence, grid_search_temperature, line_confidences
from atrlm.decoder import BeamParams, DecoderConfig, batch_decode, beam_search_decode, greedy_decode
from atrlm.emissions import EmissionMatrix, TokenTable, write_emissions, write_token_table
from atrlm.errors import ParseError
from atrlm.lm import parse_arpa, write_arpa
from atrlm.lm.model import distribution_units
from atrlm.metrics import EvalRecord, edit_distance, evaluate, pearson, relative_change, spearman
from atrlm.synthetic import MarkovTextSource, char_token_table, render_emissions, saturated_calibration_set

import arpa_cases
from conftest import DATA, brute_force_best, quiet_kn, random_char_bigram, record_criterion

mpmath.mp.dps = 50


@dataclass(frozen=True)
class Row:
    dataset: str
    cer_no: float
    cer_lm: float
    cer_delta: float
    wer_no: float | None
    wer_lm: float | None
    wer_delta: float | None


# CER and WER without and with the 6-gram LM, and the printed relative changes.
PUBLISHED = [
    Row("Himanis", 9.87, 8.87, -10.13, 29.25, 24.37, -16.68),
    Row("HOME-Alcar", 8.35, 7.85, -5.99, 26.15, 23.20, -11.28),
    Row("NewsEye", 1.82, 1.77, -2.75, 7.77, 7.01, -9.78),
    Row("NorHand v1", 7.94, 6.55, -17.51, 24.04, 18.20, -24.29),
    Row("NorHand v2", 9.72, 8.23, -15.33, 27.78, 21.65, -22.07),
    Row("NorHand v3", 7.52, 6.36, -15.43, 22.99, 18.11, -21.23),
    Row("Belfort", 10.54, 9.52, -9.68, 28.12, 23.73, -15.61),
    Row("Esposalles", 0.76, 1.04, 36.84, 2.62, 3.38, 29.01),
    Row("POPP", 16.49, 16.09, -5.70, 36.26, 34.52, -8.23),
    Row("RIMES", 4.55, 3.82, -16.04, 14.39, 10.53, -26.82),
    Row("IAM", 8.44, 7.50, -11.14, 24.51, 20.98, -14.40),
    Row("CASIA", 4.61, 1.53, -66.81, None, None, None),
]
REPORTED_MEAN_CER_REDUCTION = 11.9
REPORTED_MEAN_WER_REDUCTION = 12.9


def finish(number, name, ok, detail, start, budget):
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < budget
    record_criterion(number, name, ok, f"{detail}; {elapsed:.2f}s (limit {budget:g}s)")
    return ok


def test_c01_delta_arithmetic():
    start = time.perf_counter()
    bad = []
    for row in PUBLISHED:
        got = relative_change(row.cer_no, row.cer_lm)
        if abs(got - row.cer_delta) > 0.02:
            bad.append(f"{row.dataset} {row.cer_no}->{row.cer_lm} gives {got:.2f}, printed {row.cer_delta}")
    detail = f"{len(PUBLISHED) - len(bad)}/{len(PUBLISHED)} CER deltas within 0.02" + (f" ({'; '.join(bad)})" if bad else "")
    assert finish(1, "delta arithmetic", not bad, detail, start, 1.0), detail


def test_c02_average_improvement():
    start = time.perf_counter()
    cer_rows = [r.cer_delta for r in PUBLISHED if r.cer_no is not None and r.cer_lm is not None]
    wer_rows = [r.wer_delta for r in PUBLISHED if r.wer_no is not None and r.wer_lm is not None]
    mean_cer = -sum(cer_rows) / len(cer_rows)
    mean_wer = -sum(wer_rows) / len(wer_rows)
    recomputed_cer = -np.mean([relative_change(r.cer_no, r.cer_lm) for r in PUBLISHED])
    ok = (
        abs(mean_cer - REPORTED_MEAN_CER_REDUCTION) <= 0.3
        and abs(mean_wer - REPORTED_MEAN_WER_REDUCTION) <= 0.3
    )
    detail = (
        f"mean CER reduction {mean_cer:.2f}% over {len(cer_rows)} rows (target 11.9), "
        f"WER {mean_wer:.2f}% over {len(wer_rows)} rows (target 12.9); "
        f"from recomputed pairs CER would be {recomputed_cer:.2f}%"
    )
    assert finish(2, "average improvement", ok, detail, start, 1.0), detail


def test_c03_kn_normalization():
    start = time.perf_counter()
    source = MarkovTextSource.random(seed=3)
    corpus = [list(s.replace(" ", "▁")) for s in source.sample_many(200, seed=4)]
    worst = 0.0
    n_contexts = 0
    for order in range(2, 7):
        model = quiet_kn(corpus, order)
        units = distribution_units(model)
        for ctx in [(), *model.contexts()]:
            total = math.fsum(10.0 ** model.log_prob(ctx, u) for u in units)
            worst = max(worst, abs(total - 1.0))
            n_contexts += 1
    ok = worst <= 1e-6
    detail = f"{n_contexts} contexts over orders 2-6, max |sum - 1| = {worst:.2e}"
    assert finish(3, "KN normalization", ok, detail, start, 30.0), detail


def test_c04_exhaustive_decoder_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    weights = (0.0, 0.5, 1.5)
    mismatches = []
    for i in range(500):
        v = int(rng.integers(2, 5))
        n_frames = int(rng.integers(1, 5))
        letters = "abc"[: v - 1]
        table = TokenTable.from_symbols(["<ctc>", *letters])
        lm = random_char_bigram(rng, letters)
        weight = weights[i % 3]
        frames = rng.normal(0, 2, size=(n_frames, v))
        params = BeamParams(beam_size=v**n_frames, lm_weight=weight, beam_score_threshold=math.inf)
        got = beam_search_decode(EmissionMatrix(frames), table, lm, params=params, nbest=1)[0]
        lab, score = brute_force_best(frames, table, lm, weight)
        if got.text != table.to_text(lab) or abs(got.combined_score - score) > 1e-9:
            mismatches.append(i)
    detail = f"{500 - len(mismatches)}/500 instances match text and score"
    assert finish(4, "exhaustive decoder oracle", not mismatches, detail, start, 60.0), detail


def test_c05_greedy_beam_degeneracy():
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    table = char_token_table("abcd")
    bad = 0
    for _ in range(1000):
        em = EmissionMatrix(rng.normal(0, 2, size=(int(rng.integers(1, 30)), len(table))))
        beam = beam_search_decode(em, table, params=BeamParams(beam_size=1), nbest=1)[0]
        bad += beam.text != greedy_decode(em, table).text
    detail = f"{1000 - bad}/1000 beam-1 texts equal greedy"
    assert finish(5, "greedy/beam degeneracy", bad == 0, detail, start, 30.0), detail


def test_c06_temperature_invariance():
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    table = char_token_table("abcd")
    temps = (0.5, 1.0, 2.0, 4.0, 6.0)
    changed = out_of_range = 0
    for _ in range(1000):
        em = EmissionMatrix(rng.normal(0, 3, size=(int(rng.integers(1, 20)), len(table))))
        base = greedy_decode(em, table, 1.0)
        for t in temps:
            r = greedy_decode(em, table, t)
            argmax = np.argmax(em.probs(t), axis=1)
            changed += r.text != base.text or r.frame_alignment != base.frame_alignment
            changed += not np.array_equal(argmax, np.argmax(em.frames, axis=1))
            for method in ConfidenceMethod:
                c = confidence(em, method, t, table.blank_index)
                out_of_range += not 0.0 <= c <= 1.0
    ok = changed == 0 and out_of_range == 0
    detail = f"{changed} text/argmax changes, {out_of_range} confidences outside [0,1] over 1000 x {len(temps)} runs"
    assert finish(6, "temperature invariance", ok, detail, start, 30.0), detail


def test_c07_calibration_direction():
    start = time.perf_counter()
    table, mats, refs = saturated_calibration_set()
    conf_t1 = line_confidences(mats, ConfidenceMethod.MEAN_AFTER_CTC, 1.0, table.blank_index)
    saturated = bool(np.all((conf_t1 >= 0.97) & (conf_t1 <= 0.99)))
    report = grid_search_temperature(list(zip(mats, refs)), table, ConfidenceMethod.MEAN_AFTER_CTC, "1:6:0.5")
    r1 = report.point(1.0).pearson_r
    rc = report.point(report.chosen_T).pearson_r
    # direct recomputation of both correlations
    rates = [1 - edit_distance(ref, greedy_decode(m, table).text) / len(ref) for m, ref in zip(mats, refs)]
    direct = [pearson(line_confidences(mats, ConfidenceMethod.MEAN_AFTER_CTC, t, 0), rates)[0]
              for t in (1.0, report.chosen_T)]
    consistent = abs(direct[0] - r1) < 1e-9 and abs(direct[1] - rc) < 1e-9
    ok = saturated and report.chosen_T > 1.0 and rc > r1 and consistent
    detail = (
        f"T=1 confidences in [{conf_t1.min():.3f}, {conf_t1.max():.3f}], chosen T={report.chosen_T:g}, "
        f"Pearson {r1:.4f} -> {rc:.4f}"
    )
    assert finish(7, "calibration direction", ok, detail, start, 30.0), detail


CHANNEL_NOISE = 1.5
CHANNEL_BEAM = BeamParams(beam_size=6, lm_weight=1.5, beam_score_threshold=10.0)


def channel_run(seed, n_test=2000):
    source = MarkovTextSource.random(seed=seed)
    train = source.sample_many(500, seed * 1000 + 1)
    test = source.sample_many(n_test, seed * 1000 + 2)
    table = char_token_table()
    lm = quiet_kn([list(s.replace(" ", "▁")) for s in train], 6)
    rng = np.random.default_rng(seed * 1000 + 3)
    mats = [render_emissions(s, table, rng, noise=CHANNEL_NOISE) for s in test]
    greedy = batch_decode(mats, DecoderConfig(table))
    fused = batch_decode(mats, DecoderConfig(table, lm, params=CHANNEL_BEAM))
    cer_g = evaluate([EvalRecord(str(i), ref, r.text) for i, (ref, r) in enumerate(zip(test, greedy))]).cer
    cer_b = evaluate([EvalRecord(str(i), ref, r.text) for i, (ref, r) in enumerate(zip(test, fused))]).cer
    return cer_g, cer_b


@pytest.mark.slow
def test_c08_lm_helps_direction():
    start = time.perf_counter()
    runs = [channel_run(seed) for seed in range(1, 6)]
    greedy = [g for g, _ in runs]
    fused = [b for _, b in runs]
    in_band = all(8.0 <= g <= 20.0 for g in greedy)
    ok = in_band and np.mean(fused) < np.mean(greedy)
    detail = (
        f"greedy CER per seed {', '.join(f'{g:.2f}' for g in greedy)}; "
        f"mean greedy {np.mean(greedy):.2f} vs LM {np.mean(fused):.2f}"
    )
    assert finish(8, "LM helps direction", ok, detail, start, 300.0), detail


def test_c09_arpa_interoperability(tmp_path):
    start = time.perf_counter()
    ref_path = DATA / "kenlm_char_o3.arpa"
    first = parse_arpa(ref_path)
    write_arpa(first, tmp_path / "again.arpa")
    second = parse_arpa(tmp_path / "again.arpa")
    units = sorted(first.vocabulary)
    queries = [(ctx, u) for ctx in [(), *first.contexts(), ("x", "y")] for u in units]
    worst = max(abs(first.log_prob(c, u) - second.log_prob(c, u)) for c, u in queries)

    rejected = 0
    for name, lines, lineno in arpa_cases.MALFORMED:
        p = tmp_path / f"{name}.arpa"
        p.write_text(arpa_cases.text(lines), encoding="utf-8")
        try:
            parse_arpa(p)
        except ParseError as exc:
            rejected += exc.lineno == lineno and str(exc).startswith(f"{p}:{lineno}: ")
    ok = worst <= 1e-6 and rejected == len(arpa_cases.MALFORMED) >= 10
    detail = (
        f"{len(queries)} queries, max |diff| {worst:.1e}; "
        f"{rejected}/{len(arpa_cases.MALFORMED)} malformed files rejected at the right line"
    )
    assert finish(9, "ARPA interoperability", ok, detail, start, 5.0), detail


def test_c10_speed_direction(tmp_path, capsys):
    start = time.perf_counter()
    source = MarkovTextSource.random(seed=10)
    table = char_token_table()
    write_token_table(table, tmp_path / "syms.txt")
    (tmp_path / "corpus.txt").write_text("\n".join(source.sample_many(500, 1)) + "\n", encoding="utf-8")
    assert main(["train-lm", str(tmp_path / "corpus.txt"), "--out", str(tmp_path / "lm.arpa")]) == 0
    (tmp_path / "emis").mkdir()
    rng = np.random.default_rng(10)
    for i, text in enumerate(source.sample_many(100, 2)):
        write_emissions(render_emissions(text, table, rng, noise=CHANNEL_NOISE).frames, tmp_path / "emis" / f"{i:03d}.emis")
    capsys.readouterr()
    argv = ["bench", str(tmp_path / "emis"), "--syms", str(tmp_path / "syms.txt"), "--lm", str(tmp_path / "lm.arpa")]
    assert main(argv + ["--out", str(tmp_path / "bench.tsv")]) == 0
    table_out = parse_bench_table((tmp_path / "bench.tsv").read_text())
    greedy, lm = table_out["greedy"], table_out["lm_beam64"]
    ok = greedy > 0 and lm > greedy
    detail = f"greedy {greedy * 1e3:.2f} ms/line, LM beam 64 {lm * 1e3:.2f} ms/line ({lm / greedy:.0f}x)"
    assert finish(10, "speed direction", ok, detail, start, 120.0), detail


def naive_distance(a, b):
    @lru_cache(maxsize=None)
    def d(i, j):
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        return min(d(i + 1, j) + 1, d(i, j + 1) + 1, d(i + 1, j + 1) + (a[i] != b[j]))

    return d(0, 0)


def mp_correlation(x, y):
    x = [mpmath.mpf(float(v)) for v in x]
    y = [mpmath.mpf(float(v)) for v in y]
    n = len(x)
    mx, my = mpmath.fsum(x) / n, mpmath.fsum(y) / n
    r = mpmath.fsum((a - mx) * (b - my) for a, b in zip(x, y)) / mpmath.sqrt(
        mpmath.fsum((a - mx) ** 2 for a in x) * mpmath.fsum((b - my) ** 2 for b in y)
    )
    df = n - 2
    if abs(r) == 1:
        return float(r), 0.0
    t2 = r * r * df / (1 - r * r)
    return float(r), float(mpmath.betainc(mpmath.mpf(df) / 2, 0.5, 0, df / (df + t2), regularized=True))


def mp_ranks(x):
    return [sum(1 for w in x if w < v) + (sum(1 for w in x if w == v) + 1) / 2 for v in x]


def test_c11_metric_properties():
    start = time.perf_counter()
    strings = ["".join(p) for n in range(6) for p in itertools.product("abc", repeat=n)]
    d = {}
    axiom_failures = 0
    for a in strings:
        for b in strings:
            v = edit_distance(a, b)
            d[a, b] = v
            axiom_failures += v != naive_distance(a, b) or v < 0 or (v == 0) != (a == b)
    for a, b in itertools.combinations(strings, 2):
        axiom_failures += d[a, b] != d[b, a]
    short = [s for s in strings if len(s) <= 3]
    for a, b, c in itertools.product(short, repeat=3):
        axiom_failures += d[a, c] > d[a, b] + d[b, c]
    sample = random.Random(11)
    for _ in range(100_000):
        a, b, c = sample.choice(strings), sample.choice(strings), sample.choice(strings)
        axiom_failures += d[a, c] > d[a, b] + d[b, c]

    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(3, 40))
        x = rng.normal(size=n)
        y = rng.normal(size=n) + rng.uniform(-1, 1) * x
        if rng.random() < 0.3:
            x = np.round(x, 0)
        got = (*pearson(x, y), *spearman(x, y))
        want = (*mp_correlation(x, y), *mp_correlation(mp_ranks(list(x)), mp_ranks(list(y))))
        worst = max(worst, max(abs(g - w) for g, w in zip(got, want)))
    ok = axiom_failures == 0 and worst <= 1e-9
    detail = (
        f"{len(strings) ** 2} pairs checked, {axiom_failures} axiom failures; "
        f"max correlation/p-value error {worst:.1e} over 100 vectors"
    )
    assert finish(11, "metric properties", ok, detail, start, 60.0), detail
