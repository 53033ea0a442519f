"""N-gram language models: tokenization, Kneser-Ney training, ARPA I/O."""

from .arpa import parse_arpa, write_arpa
from .kneser_ney import DiscountFallbackWarning, count_ngrams, estimate_kneser_ney
from .model import NGramModel, lm_log_prob, sentence_log_prob
from .tokenize import UnitLevel, tokenize, tokenize_corpus

__all__ = [
    "DiscountFallbackWarning",
    "NGramModel",
    "UnitLevel",
    "count_ngrams",
    "estimate_kneser_ney",
    "lm_log_prob",
    "parse_arpa",
    "sentence_log_prob",
    "tokenize",
    "tokenize_corpus",
    "write_arpa",
]
