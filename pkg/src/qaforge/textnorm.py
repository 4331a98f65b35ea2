"""Text normalization shared by filtering, leakage checks, and dedup."""
from __future__ import annotations

import re
import unicodedata

# Languages written without case distinctions. Containment checks on these
# scripts stay raw: there is no case to fold and whitespace is meaningful
# segmentation, not layout.
UNCASED_LANGUAGES = frozenset({"ja", "zh", "ko", "th"})

_WS = re.compile(r"\s+")


def normalize_term(raw: str) -> str:
    """Canonical surface form of a dump term: underscores to spaces, NFC,
    single internal spaces, no surrounding whitespace."""
    term = unicodedata.normalize("NFC", raw.replace("_", " "))
    return _WS.sub(" ", term).strip()


def is_cased(language: str) -> bool:
    return language not in UNCASED_LANGUAGES


def match_key(text: str, language: str) -> str:
    """Normalized form used for duplicate and containment comparisons.

    Cased scripts additionally casefold; unsegmented scripts are only
    NFC-normalized so that raw substring semantics are preserved.
    """
    text = unicodedata.normalize("NFC", text)
    if is_cased(language):
        return _WS.sub(" ", text).strip().casefold()
    return text


def contains_term(text: str, term: str, language: str) -> bool:
    """True if `term` occurs inside `text` under the language's match rules."""
    return match_key(term, language) in match_key(text, language)
