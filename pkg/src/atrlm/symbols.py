"""Reserved symbols shared by the token table, language models and lexica."""

BLANK = "<ctc>"
BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
RESERVED_UNITS = frozenset({BOS, EOS, UNK})

# Visible stand-in for a literal space: ARPA, lexicon and token-table files
# are whitespace-delimited, so " " itself cannot be a unit.
SPACE_MARKER = "▁"
SPACE_SYMBOLS = frozenset({"<space>", SPACE_MARKER})
