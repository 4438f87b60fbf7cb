"""Model-side tokenization.

The engine applies its own proxy token budget; this module is the sidecar's
independent, model-native equivalent: NFKC + casefold, word runs, and
single-character units for scripts written without spaces.  Truncation takes
a prefix of the token stream, so a text and its prefix containing the same
leading tokens encode identically.
"""

import hashlib
import re
import unicodedata

_WORD_RUN = re.compile(r"[^\W_]+")
# Han, Kana, Hangul, Thai: one token per character
_SINGLE_CHAR = re.compile(r"[一-鿿぀-ヿ가-힣ก-๛]")


def model_tokens(text: str, max_tokens: int | None = None) -> list[str]:
    folded = unicodedata.normalize("NFKC", text).casefold()
    out: list[str] = []
    for run in _WORD_RUN.findall(folded):
        buf = ""
        for ch in run:
            if _SINGLE_CHAR.match(ch):
                if buf:
                    out.append(buf)
                    buf = ""
                out.append(ch)
            else:
                buf += ch
        if buf:
            out.append(buf)
        if max_tokens is not None and len(out) >= max_tokens:
            return out[:max_tokens]
    return out


def stable_bucket(token: str, buckets: int, salt: str = "") -> int:
    """Hash-seed independent token bucket (sha256, not Python hash())."""
    digest = hashlib.sha256((salt + token).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % buckets


def stable_sign(token: str, salt: str = "") -> float:
    digest = hashlib.sha256((salt + "#sign#" + token).encode("utf-8")).digest()
    return 1.0 if digest[8] % 2 == 0 else -1.0
