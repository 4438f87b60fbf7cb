"""Neural helpers for the clirkit engine.

Everything here talks to the engine through its file formats (see
FORMATS.md at the repository root); nothing imports engine code.
"""

from .encoder import EncoderSpec, TinyEncoder, embed_records, embed_texts
from .errors import DataError, SidecarError, UsageError
from .losses import infonce_loss, word_contrastive_loss
from .translate import TranslationSpec, translate_records

__all__ = [
    "DataError",
    "EncoderSpec",
    "SidecarError",
    "TinyEncoder",
    "TranslationSpec",
    "UsageError",
    "embed_records",
    "embed_texts",
    "infonce_loss",
    "translate_records",
    "word_contrastive_loss",
]
