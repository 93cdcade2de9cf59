"""Shared constants for the planted-signal channel in synthetic corpora.

Synthetic texts carry graded mood-intensity marker tokens; the offline mock
evaluator reads them back to recover the planted severity. The marker
characters are deliberately rare so they never collide with lexicon entries
or filler vocabulary.
"""

from __future__ import annotations

import hashlib

# Grade ladder: index = intensity level 0 (calm) .. 9 (maximal distress).
MARKER_LADDER = (
    "零愫", "壹愫", "贰愫", "叁愫", "肆愫",
    "伍愫", "陆愫", "柒愫", "捌愫", "玖愫",
)

_MARKER_GRADE = {tok: g for g, tok in enumerate(MARKER_LADDER)}


def read_marker_level(text: str) -> float | None:
    """Mean marker grade in ``text`` mapped to [0, 1]; None if no markers."""
    total = 0
    count = 0
    for token, grade in _MARKER_GRADE.items():
        hits = text.count(token)
        if hits:
            total += grade * hits
            count += hits
    if count == 0:
        return None
    return total / (count * (len(MARKER_LADDER) - 1))


def text_noise(text: str, salt: str) -> float:
    """Deterministic pseudo-uniform value in [0, 1) derived from (salt, text)."""
    digest = hashlib.blake2b(f"{salt}|{text}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2**64
