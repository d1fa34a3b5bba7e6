"""Sentence and word segmentation shared by cleaning, statistics and the PU prior."""

from __future__ import annotations

import re

ABBREVIATIONS = frozenset(
    {
        "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "vs.",
        "e.g.", "i.e.", "inc.", "ltd.", "co.", "fig.", "approx.", "dept.",
        "u.s.", "u.k.", "a.m.", "p.m.",
    }
)

# Terminal punctuation, optional closing quotes/brackets, then whitespace.
_BOUNDARY = re.compile(r"[.!?]+[\"'”’)\]]*\s+")


def sentence_spans(text: str, abbreviations=ABBREVIATIONS) -> list[tuple[int, int]]:
    """Return ``(start, end)`` offsets of each sentence, surrounding whitespace excluded."""
    spans = []
    start = 0
    for m in _BOUNDARY.finditer(text):
        punct_end = m.end() - len(m.group()) + len(m.group().rstrip())
        piece = text[start:punct_end]
        words = piece.split()
        if words and words[-1].lower() in abbreviations:
            continue
        spans.append((start, punct_end))
        start = m.end()
    spans.append((start, len(text)))

    out = []
    for s, e in spans:
        chunk = text[s:e]
        stripped = chunk.strip()
        if not stripped:
            continue
        lead = len(chunk) - len(chunk.lstrip())
        out.append((s + lead, s + lead + len(stripped)))
    return out


def split_sentences(text: str) -> list[str]:
    """Split on ``. ! ?`` followed by whitespace; a trailing fragment counts as a sentence."""
    return [text[s:e] for s, e in sentence_spans(text)]


def split_words(text: str) -> list[str]:
    """Whitespace tokens; punctuation stays attached."""
    return text.split()


def normalize_sentence(sentence: str) -> str:
    """Identity key used for duplicate-sentence detection."""
    return " ".join(sentence.split()).lower()
