"""Unicode-aware tokenizer shared by the lexical index and text truncation.

Pipeline: NFC-normalize, locate maximal word-character runs, then split any
Han/Hiragana/Katakana/Hangul/Thai characters inside a run into single-character
tokens. Token values are casefolded; boundaries are found before folding so
that offsets stay valid for truncation.
"""

from __future__ import annotations

import re
import unicodedata
from bisect import bisect_right

from .errors import UsageError

# Word runs: alphanumeric sequences, underscore excluded.
_WORD_RUN = re.compile(r"[^\W_]+", re.UNICODE)

# Character blocks tokenized as single-character unigrams. Scripts without
# whitespace word boundaries: Han (plus extensions/compatibility), Hiragana,
# Katakana (plus phonetic extensions), Hangul (syllables and jamo), Thai.
_UNIGRAM_BLOCKS = sorted(
    [
        (0x0E00, 0x0E7F),  # Thai
        (0x1100, 0x11FF),  # Hangul jamo
        (0x3040, 0x309F),  # Hiragana
        (0x30A0, 0x30FF),  # Katakana
        (0x3130, 0x318F),  # Hangul compatibility jamo
        (0x31F0, 0x31FF),  # Katakana phonetic extensions
        (0x3400, 0x4DBF),  # CJK extension A
        (0x4E00, 0x9FFF),  # CJK unified ideographs
        (0xA960, 0xA97F),  # Hangul jamo extended-A
        (0xAC00, 0xD7AF),  # Hangul syllables
        (0xD7B0, 0xD7FF),  # Hangul jamo extended-B
        (0xF900, 0xFAFF),  # CJK compatibility ideographs
        (0x20000, 0x2A6DF),  # CJK extension B
    ]
)
_BLOCK_STARTS = [lo for lo, _ in _UNIGRAM_BLOCKS]
_BLOCK_ENDS = [hi for _, hi in _UNIGRAM_BLOCKS]


def _is_unigram_char(ch: str) -> bool:
    cp = ord(ch)
    i = bisect_right(_BLOCK_STARTS, cp) - 1
    return i >= 0 and cp <= _BLOCK_ENDS[i]


def token_spans(text: str) -> list[tuple[int, int]]:
    """Token boundaries as (start, end) offsets into the NFC form of text.

    The caller must pass NFC-normalized text for the offsets to be meaningful.
    """
    spans: list[tuple[int, int]] = []
    for match in _WORD_RUN.finditer(text):
        base = match.start()
        run = match.group()
        piece_start = 0
        for j, ch in enumerate(run):
            if _is_unigram_char(ch):
                if piece_start < j:
                    spans.append((base + piece_start, base + j))
                spans.append((base + j, base + j + 1))
                piece_start = j + 1
        if piece_start < len(run):
            spans.append((base + piece_start, base + len(run)))
    return spans


def tokenize(text: str) -> list[str]:
    """Casefolded engine tokens of `text`."""
    nfc = unicodedata.normalize("NFC", text)
    return [nfc[s:e].casefold() for s, e in token_spans(nfc)]


def truncate_text(text: str, budget: int) -> str:
    """Longest prefix of (the NFC form of) `text` with at most `budget` tokens.

    Under-budget text is returned unchanged. The cut lands at the end of the
    budget-th token, so trailing separators are dropped along with the excess.
    """
    if budget < 1:
        raise UsageError(f"truncation budget must be >= 1, got {budget}")
    nfc = unicodedata.normalize("NFC", text)
    spans = token_spans(nfc)
    if len(spans) <= budget:
        return text
    out = nfc[: spans[budget - 1][1]]
    # Cutting cannot create tokens, but re-check in case normalization of the
    # prefix interacts with the boundary; trims again if it ever does.
    while len(token_spans(unicodedata.normalize("NFC", out))) > budget:
        out = unicodedata.normalize("NFC", out)
        out = out[: token_spans(out)[budget - 1][1]]
    return out
