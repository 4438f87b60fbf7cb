"""Batch document translation into the corpus file's translated_text field.

The deployment-scale path wraps a beam-search NMT model named by
``TranslationSpec.model``; the in-repo backend is a lexicon lookup good
enough to exercise every contract: passthrough languages are copied
byte-for-byte, covered documents get token-by-token translations, and a
document the backend cannot handle is recorded as a failure without
stopping the batch.  A failed document is emitted with no translated_text;
the failure list is the flag.
"""

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError, UsageError
from .formats import (
    atomic_write_text,
    load_corpus_records,
    write_corpus_records,
    write_manifest,
)
from .textproc import model_tokens

PASSTHROUGH_LANGUAGES = ("en", "simple-en")


@dataclass(frozen=True)
class TranslationSpec:
    model: str = "lexicon"
    beam_width: int = 5
    max_input_tokens: int = 1200
    passthrough_languages: tuple[str, ...] = PASSTHROUGH_LANGUAGES

    def __post_init__(self):
        if self.beam_width < 1:
            raise UsageError(f"beam width must be >= 1, got {self.beam_width}")
        if self.max_input_tokens < 1:
            raise UsageError(
                f"max input tokens must be >= 1, got {self.max_input_tokens}"
            )


def load_lexicon(path: str | Path) -> dict[str, dict[str, str]]:
    """JSON object: language code -> {source token -> translation}."""
    with open(path, encoding="utf-8") as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: malformed lexicon: {exc}") from None
    if not isinstance(raw, dict):
        raise DataError(f"{path}: lexicon must be an object keyed by language")
    lexicon: dict[str, dict[str, str]] = {}
    for lang, table in raw.items():
        if not isinstance(table, dict):
            raise DataError(f"{path}: entry for {lang!r} must be an object")
        lexicon[lang] = {str(k): str(v) for k, v in table.items()}
    return lexicon


def translate_records(
    records: list[dict],
    spec: TranslationSpec,
    lexicon: dict[str, dict[str, str]],
) -> tuple[list[dict], list[dict]]:
    """Returns (output records, failures); failures are {doc_id, error}."""
    out: list[dict] = []
    failures: list[dict] = []
    for record in records:
        doc = dict(record)
        if doc["lang"] in spec.passthrough_languages:
            doc["translated_text"] = doc["text"]  # byte-identical copy
            out.append(doc)
            continue
        tokens = model_tokens(doc["text"], spec.max_input_tokens)
        table = lexicon.get(doc["lang"], {})
        covered = [t for t in tokens if t in table]
        if not tokens or not covered:
            doc.pop("translated_text", None)
            out.append(doc)
            failures.append(
                {
                    "doc_id": doc["doc_id"],
                    "error": f"no lexicon coverage for language {doc['lang']!r}",
                }
            )
            continue
        doc["translated_text"] = " ".join(table.get(t, t) for t in tokens)
        out.append(doc)
    return out, failures


def translate_file(
    corpus_path: str,
    out_path: str,
    spec: TranslationSpec,
    lexicon_path: str,
) -> tuple[int, int]:
    """Translate a corpus file; returns (documents written, failures)."""
    records = load_corpus_records(corpus_path)
    lexicon = load_lexicon(lexicon_path)
    out, failures = translate_records(records, spec, lexicon)
    write_corpus_records(out_path, out)
    lines = [json.dumps(f, sort_keys=True) for f in failures]
    atomic_write_text(
        Path(out_path + ".failures.jsonl"), "\n".join(lines) + ("\n" if lines else "")
    )
    write_manifest(out_path, spec.model, None, out_path)
    return len(out), len(failures)
