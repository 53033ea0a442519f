"""``atrlm`` command line: train-lm, decode, calibrate, evaluate, bench.

Exit codes: 0 success, 1 decode failures, 2 usage or parse errors,
3 degenerate data.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
import warnings
from pathlib import Path
from typing import Sequence

from .confidence import DEFAULT_GRID, RECOMMENDED_TEMPERATURE, ConfidenceMethod, confidence, grid_search_temperature
from .decoder import (
    BatchDecodeError,
    BeamParams,
    DecodeMode,
    DecodeResult,
    DecoderConfig,
    batch_decode,
    check_decoder_config,
)
from .emissions import EmissionKind, EmissionMatrix, TokenTable, load_emissions, load_token_table
from .errors import AtrlmError, DegenerateInputError, ParseError, UndefinedDeltaError
from .lexicon import Lexicon, build_lexicon_from_corpus, parse_lexicon_file
from .lm import UnitLevel, estimate_kneser_ney, parse_arpa, tokenize_corpus, write_arpa
from .lm.kneser_ney import DiscountFallbackWarning
from .lm.tokenize import read_subword_inventory
from .metrics import EvalRecord, evaluate, read_predictions, read_references, relative_change

EXIT_OK = 0
EXIT_DECODE_FAILURE = 1
EXIT_USAGE = 2
EXIT_DEGENERATE = 3

EMISSION_SUFFIXES = (".emis", ".txt")

logger = logging.getLogger("atrlm")


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not (value > 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
    return value


def _order(text: str) -> int:
    value = _positive_int(text)
    if value > 10:
        raise argparse.ArgumentTypeError(f"order must be at most 10, got {value}")
    return value


# ---------------------------------------------------------------- inputs


def list_emission_files(source: str) -> list[Path]:
    """A directory (files sorted by name) or a text file listing one path per line."""
    path = Path(source)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.is_file() and p.suffix in EMISSION_SUFFIXES)
        if not files:
            raise UsageError(f"no emission files ({', '.join(EMISSION_SUFFIXES)}) in {source}")
        return files
    if path.is_file():
        base = path.parent
        files = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line and not line.startswith("#"):
                    p = Path(line)
                    files.append(p if p.is_absolute() else base / p)
        if not files:
            raise UsageError(f"emission list {source} is empty")
        return files
    raise UsageError(f"emission source {source} does not exist")


def _load_table(args) -> TokenTable:
    return load_token_table(args.syms, blank=args.blank)


def _read_corpus(path, level: UnitLevel, subwords) -> list[list[str]]:
    inventory = read_subword_inventory(subwords) if subwords else None
    with open(path, encoding="utf-8") as f:
        return tokenize_corpus(f, level, inventory)


def _load_lexicon(args, table: TokenTable) -> Lexicon | None:
    level = UnitLevel(args.level)
    if args.lexicon:
        return parse_lexicon_file(args.lexicon, table, level)
    if args.lexicon_from_corpus:
        corpus = _read_corpus(args.lexicon_from_corpus, level, args.subwords)
        lexicon, dropped = build_lexicon_from_corpus(corpus, table, level)
        if dropped:
            print(f"lexicon: dropped {dropped} unit(s) not spellable with the token table", file=sys.stderr)
        return lexicon
    return None


def _spans_text(result: DecodeResult, blank: int) -> str:
    if result.frame_alignment and isinstance(result.frame_alignment[0], int):
        spans = []
        start = None
        path = result.frame_alignment
        for t, tok in enumerate(path):
            if start is not None and tok != path[start]:
                spans.append((start, t - 1))
                start = None
            if start is None and tok != blank:
                start = t
        if start is not None:
            spans.append((start, len(path) - 1))
    else:
        spans = list(result.frame_alignment)
    return " ".join(f"{a}-{b}" for a, b in spans)


# ---------------------------------------------------------------- train-lm


def cmd_train_lm(args) -> int:
    level = UnitLevel(args.level)
    corpus = _read_corpus(args.corpus, level, args.subwords)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DiscountFallbackWarning)
        model = estimate_kneser_ney(corpus, args.order, level, fallback_discounts=tuple(args.discount_fallback))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    write_arpa(model, args.out)
    vocab = model.vocabulary
    print(f"sentences={len(corpus)}")
    print(f"vocabulary={len(vocab)}")
    for n, count in enumerate(model.ngram_counts(), 1):
        print(f"ngram {n}={count}")
    if args.dev:
        dev = _read_corpus(args.dev, level, args.subwords)
        if dev:
            print(f"dev_perplexity={model.perplexity(dev):.6g}")
    return EXIT_OK


# ---------------------------------------------------------------- decode


def _decoder_config(args, table: TokenTable) -> DecoderConfig:
    lm = parse_arpa(args.lm, args.level) if args.lm else None
    lexicon = _load_lexicon(args, table)
    if lexicon is None and UnitLevel(args.level) is not UnitLevel.CHARACTER and lm is not None:
        raise UsageError(f"--level {args.level} needs --lexicon or --lexicon-from-corpus")
    mode = DecodeMode.CONSTRAINED if lexicon is not None else DecodeMode.LEXICON_FREE
    params = BeamParams(
        beam_size=args.beam,
        lm_weight=args.lm_weight,
        unit_insertion_bonus=args.bonus,
        beam_score_threshold=args.beam_threshold,
        mode=mode,
    )
    if lm is not None or lexicon is not None:
        check_decoder_config(table, lm, lexicon, params)
    return DecoderConfig(table, lm, lexicon, params, args.decode_temperature)


def _load_all(files: Sequence[Path], kind) -> tuple[list, dict[str, Exception]]:
    items, failures = [], {}
    for p in files:
        try:
            items.append((p.stem, load_emissions(p, kind)))
        except (OSError, AtrlmError) as exc:
            failures[p.stem] = exc
            items.append((p.stem, None))
    return items, failures


def cmd_decode(args) -> int:
    table = _load_table(args)
    config = _decoder_config(args, table)
    files = list_emission_files(args.emissions)
    items, failures = _load_all(files, args.kind)
    loaded = [(i, m) for i, m in items if m is not None]
    try:
        results = batch_decode(loaded, config, args.threads)
    except BatchDecodeError as exc:
        results = exc.results
        failures.update(exc.failures)
    by_id = {line_id: r for (line_id, _), r in zip(loaded, results)}
    mats = dict(loaded)

    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for line_id, _ in items:
            r = by_id.get(line_id)
            if r is None:
                continue
            fields = [line_id, r.text]
            if args.confidence or args.alignments:
                conf = ""
                if args.confidence:
                    conf = f"{confidence(mats[line_id], args.confidence, args.temperature, table.blank_index):.6f}"
                fields.append(conf)
            if args.alignments:
                fields.append(_spans_text(r, table.blank_index))
            out.write("\t".join(fields) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    for line_id, exc in failures.items():
        print(f"error: {line_id}: {exc}", file=sys.stderr)
    if failures and len(failures) == len(items):
        return EXIT_DECODE_FAILURE
    return EXIT_OK


# ---------------------------------------------------------------- calibrate


def cmd_calibrate(args) -> int:
    table = _load_table(args)
    refs = read_references(args.references)
    files = list_emission_files(args.emissions)
    validation = []
    missing = []
    for p in files:
        if p.stem not in refs:
            missing.append(p.stem)
            continue
        validation.append((load_emissions(p, args.kind), refs[p.stem]))
    if missing:
        raise UsageError(f"{len(missing)} emission file(s) without reference: {', '.join(missing[:10])}")
    report = grid_search_temperature(validation, table, args.method, args.grid)
    sys.stdout.write(report.to_table())
    if args.out:
        Path(args.out).write_text(report.to_keyvalue(), encoding="utf-8")
    print(f"chosen_T={report.chosen_T:g}")
    return EXIT_OK


# ---------------------------------------------------------------- evaluate


def _records(pred_path, refs: dict[str, str]) -> list[EvalRecord]:
    preds = read_predictions(pred_path)
    unmatched = [pid for pid, _, _ in preds if pid not in refs]
    if unmatched:
        raise UsageError(
            f"{len(unmatched)} prediction line id(s) in {pred_path} have no reference: "
            + ", ".join(unmatched[:10])
        )
    return [EvalRecord(pid, refs[pid], hyp, conf) for pid, hyp, conf in preds]


def cmd_evaluate(args) -> int:
    refs = read_references(args.references)
    summary = evaluate(_records(args.predictions, refs))
    values = summary.as_dict()
    if args.baseline:
        base = evaluate(_records(args.baseline, refs)).as_dict()
        for key in ("cer", "wer"):
            if key in values and key in base:
                values[f"baseline_{key}"] = base[key]
                try:
                    values[f"delta_{key}"] = relative_change(base[key], values[key])
                except UndefinedDeltaError:
                    values[f"delta_{key}"] = math.nan
    lines = [f"{k}={v}" if isinstance(v, int) else f"{k}={v:.4f}" for k, v in values.items()]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------- bench


def time_decoding(mats: Sequence[EmissionMatrix], config: DecoderConfig, threads: int = 1) -> float:
    """Wall-clock seconds per line for decoding ``mats`` with ``config``."""
    start = time.perf_counter()
    batch_decode(mats, config, threads)
    return (time.perf_counter() - start) / len(mats)


def cmd_bench(args) -> int:
    table = _load_table(args)
    files = list_emission_files(args.emissions)
    mats = [load_emissions(p, args.kind) for p in files]
    if len(mats) < 10:
        print(f"warning: only {len(mats)} line(s); timings will be noisy", file=sys.stderr)
    rows = [("greedy", time_decoding(mats, DecoderConfig(table, temperature=args.temperature), args.threads))]
    if args.lm:
        lm = parse_arpa(args.lm, UnitLevel.CHARACTER)
        for beam in args.beam or [64]:
            params = BeamParams(beam_size=beam, lm_weight=args.lm_weight)
            config = DecoderConfig(table, lm, None, params, args.temperature)
            rows.append((f"lm_beam{beam}", time_decoding(mats, config, args.threads)))
    text = "config\tseconds_per_line\n" + "".join(f"{name}\t{sec:.6g}\n" for name, sec in rows)
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


def parse_bench_table(text: str) -> dict[str, float]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split("\t") != ["config", "seconds_per_line"]:
        raise ValueError("not a bench table")
    return {name: float(sec) for name, sec in (ln.split("\t") for ln in lines[1:])}


# ---------------------------------------------------------------- parser


def _add_emission_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("emissions", help="directory of emission files (*.emis, *.txt) or a file listing their paths")
    p.add_argument("--syms", required=True, help="token table file ('symbol index' per line)")
    p.add_argument("--blank", default="<ctc>", help="blank symbol name (default: %(default)s)")
    p.add_argument(
        "--kind",
        choices=[k.value for k in EmissionKind],
        default=EmissionKind.LOGITS.value,
        help="emission values are raw logits or log-probabilities (default: %(default)s)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atrlm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-lm", help="estimate a modified Kneser-Ney n-gram model, write ARPA")
    p.add_argument("corpus", help="one sentence per line, UTF-8")
    p.add_argument("--out", required=True, help="output ARPA path")
    p.add_argument("--order", type=_order, default=6, help="n-gram order (default: %(default)s)")
    p.add_argument("--level", choices=[u.value for u in UnitLevel], default="char", help="unit level (default: %(default)s)")
    p.add_argument("--subwords", help="subword inventory file for --level subword")
    p.add_argument("--dev", help="held-out corpus; prints its perplexity")
    p.add_argument(
        "--discount-fallback",
        type=float,
        nargs=3,
        default=[0.5, 0.5, 0.5],
        metavar=("D1", "D2", "D3"),
        help="discounts used when counts-of-counts cannot estimate them (artifact default: 0.5 0.5 0.5)",
    )
    p.set_defaults(func=cmd_train_lm)

    p = sub.add_parser("decode", help="decode emission files into a predictions file")
    _add_emission_args(p)
    p.add_argument("--lm", help="ARPA language model; enables beam search")
    lex = p.add_mutually_exclusive_group()
    lex.add_argument("--lexicon", help="lexicon file ('UNIT TOK1 TOK2 ...'); enables constrained decoding")
    lex.add_argument("--lexicon-from-corpus", help="build the lexicon from this corpus")
    p.add_argument("--level", choices=[u.value for u in UnitLevel], default="char", help="LM unit level (default: %(default)s)")
    p.add_argument("--subwords", help="subword inventory for --lexicon-from-corpus at subword level")
    p.add_argument("--lm-weight", type=float, default=1.5, help="fusion weight (default: %(default)s)")
    p.add_argument("--beam", type=_positive_int, default=64, help="beam size (artifact default: %(default)s)")
    p.add_argument("--bonus", type=float, default=0.0, help="unit insertion bonus (artifact default: %(default)s)")
    p.add_argument(
        "--beam-threshold", type=float, default=25.0, help="per-frame token pruning margin, natural log (artifact default: %(default)s)"
    )
    p.add_argument(
        "--temperature",
        type=_positive_float,
        default=RECOMMENDED_TEMPERATURE,
        help="temperature for the confidence column (default: %(default)s)",
    )
    p.add_argument(
        "--decode-temperature",
        type=_positive_float,
        default=1.0,
        help="temperature applied to frames before decoding; the LM weight is tuned for 1.0 (artifact default: %(default)s)",
    )
    p.add_argument("--confidence", choices=[m.value for m in ConfidenceMethod], help="add a confidence column")
    p.add_argument("--alignments", action="store_true", help="add a column of per-token frame spans 'first-last'")
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--out", help="predictions file (default: standard output)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("calibrate", help="grid-search the confidence temperature")
    _add_emission_args(p)
    p.add_argument("--references", required=True, help="'LINE_ID<TAB>REFERENCE' file; ids are emission file stems")
    p.add_argument(
        "--method",
        choices=[m.value for m in ConfidenceMethod],
        default=ConfidenceMethod.MEAN_AFTER_CTC.value,
        help="confidence method (artifact default: %(default)s)",
    )
    lo, hi, step = DEFAULT_GRID
    p.add_argument("--grid", default=f"{lo:g}:{hi:g}:{step:g}", help="lo:hi:step or comma list (default: %(default)s)")
    p.add_argument("--out", help="write the key-value report here")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="CER/WER (and correlations) of predictions against references")
    p.add_argument("predictions")
    p.add_argument("references")
    p.add_argument("--baseline", help="other predictions; adds relative-change columns")
    p.add_argument("--out", help="write the key-value summary here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="seconds per line for greedy and LM decoding")
    _add_emission_args(p)
    p.add_argument("--lm", help="character ARPA model for the LM configurations")
    p.add_argument("--beam", type=_positive_int, action="append", help="beam size, repeatable (default: 64)")
    p.add_argument("--lm-weight", type=float, default=1.5)
    p.add_argument("--temperature", type=_positive_float, default=1.0)
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--out", help="write the table here")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except DegenerateInputError as exc:
        print(f"error: degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (UsageError, ParseError, AtrlmError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
