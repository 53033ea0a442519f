"""Decoding-side toolkit for CTC text recognition: n-gram fusion, confidences, metrics."""

from .confidence import CalibrationReport, ConfidenceMethod, confidence, grid_search_temperature
from .decoder import (
    BeamParams,
    DecodeMode,
    DecodeResult,
    DecoderConfig,
    batch_decode,
    beam_search_decode,
    ctc_collapse,
    greedy_decode,
)
from .emissions import (
    EmissionKind,
    EmissionMatrix,
    TokenTable,
    load_emissions,
    load_token_table,
    log_softmax,
    softmax_with_temperature,
)
from .lexicon import Lexicon, build_lexicon_from_corpus, parse_lexicon_file, trie_advance
from .lm import NGramModel, UnitLevel, estimate_kneser_ney, parse_arpa, write_arpa
from .metrics import cer, edit_distance, evaluate, pearson, relative_change, spearman, wer

__version__ = "0.1.0"

__all__ = [
    "BeamParams",
    "CalibrationReport",
    "ConfidenceMethod",
    "DecodeMode",
    "DecodeResult",
    "DecoderConfig",
    "EmissionKind",
    "EmissionMatrix",
    "Lexicon",
    "NGramModel",
    "TokenTable",
    "UnitLevel",
    "batch_decode",
    "beam_search_decode",
    "build_lexicon_from_corpus",
    "cer",
    "confidence",
    "ctc_collapse",
    "edit_distance",
    "estimate_kneser_ney",
    "evaluate",
    "greedy_decode",
    "grid_search_temperature",
    "load_emissions",
    "load_token_table",
    "log_softmax",
    "parse_arpa",
    "parse_lexicon_file",
    "pearson",
    "relative_change",
    "softmax_with_temperature",
    "spearman",
    "trie_advance",
    "wer",
    "write_arpa",
]
