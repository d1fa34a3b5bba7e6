"""Rule-based text cleaning.

Rules run in a fixed order: hyperlinks, boilerplate lines, escape sequences
and numeric-only lines, special characters, whitespace, duplicate sentences.
The pass repeats until the text stops changing, so cleaning is idempotent.
Multilingual mode keeps escape sequences and every non-control code point.
"""

from __future__ import annotations

import enum
import re
import string
import unicodedata
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

from mgtd.text import normalize_sentence, sentence_spans


class CleaningMode(str, enum.Enum):
    ENGLISH = "english"
    MULTILINGUAL = "multilingual"


RULES = (
    "hyperlinks",
    "boilerplate_lines",
    "escape_sequences",
    "numeric_lines",
    "special_characters",
    "whitespace",
    "duplicate_sentences",
)

HYPERLINK = re.compile(r"(?:(?:https?|ftp)://|www\.)\S+", re.IGNORECASE)

ESCAPE = re.compile(
    r"\\(?:u[0-9a-fA-F]{4}|U[0-9a-fA-F]{8}|x[0-9a-fA-F]{2}|[nrtbfv0\"'\\])"
    r"|&(?:#[0-9]+|#[xX][0-9a-fA-F]+|[a-zA-Z]+);"
)

DEFAULT_BOILERPLATE = (
    r"^\s*share\b",
    r"\bshare (this|on|via|with your)\b",
    r"\b(take|complete|fill out) (our|the|this|a) (short )?survey\b",
    r"\b(leave|post|add|write) a comment\b",
    r"^\s*\d*\s*comments?\s*:?\s*$",
    r"^\s*(advertisement|sponsored( content)?|ads?)\s*:?\s*$",
    r"\bterms of (use|service)\b",
    r"\bprivacy policy\b",
    r"\bcopyright\b",
    r"©",
    r"\ball rights reserved\b",
)

ENGLISH_ALLOWED = frozenset(string.ascii_letters + string.digits + string.punctuation + " \t\n\r")
_KEPT_CONTROLS = frozenset("\t\n\r")
_LINE_BREAK = re.compile(r"(\r\n|\r|\n)")
_HSPACE = re.compile(r"[ \t]+")


def compile_patterns(patterns: Iterable[str]) -> tuple[re.Pattern, ...]:
    return tuple(re.compile(p, re.IGNORECASE) for p in patterns)


def load_boilerplate(path) -> tuple[re.Pattern, ...]:
    """One regular expression per line; blank lines and ``#`` comments ignored."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return compile_patterns(l.strip() for l in lines if l.strip() and not l.lstrip().startswith("#"))


DEFAULT_BOILERPLATE_PATTERNS = compile_patterns(DEFAULT_BOILERPLATE)


@dataclass
class CleaningReport:
    counts: dict = field(default_factory=lambda: dict.fromkeys(RULES, 0))
    documents_emptied: int = 0

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def __add__(self, other: "CleaningReport") -> "CleaningReport":
        counts = {r: self.counts.get(r, 0) + other.counts.get(r, 0) for r in RULES}
        return CleaningReport(counts, self.documents_emptied + other.documents_emptied)


def _drop_lines(text: str, predicate) -> tuple[str, int]:
    parts = _LINE_BREAK.split(text)
    # parts alternates line, separator, line, ...
    lines, seps = parts[0::2], parts[1::2] + [""]
    out, dropped = [], 0
    for line, sep in zip(lines, seps):
        if line.strip() and predicate(line):
            dropped += 1
            continue
        out.append(line + sep)
    return "".join(out), dropped


def _is_numeric_line(line: str) -> bool:
    return any(c.isdigit() for c in line) and not any(c.isalpha() for c in line)


def _strip_special(text: str, mode: CleaningMode, allowed) -> tuple[str, int]:
    out, n = [], 0
    for ch in text:
        if mode is CleaningMode.MULTILINGUAL:
            if unicodedata.category(ch) == "Cc" and ch not in _KEPT_CONTROLS:
                n += 1
                continue
        elif ch not in allowed:
            n += 1
            if ch.isspace():
                out.append(" ")
            continue
        out.append(ch)
    return "".join(out), n


def _collapse_whitespace(text: str) -> tuple[str, int]:
    n = text.count("\r")
    raw_lines = _LINE_BREAK.split(text)[0::2]
    lines = []
    for line in raw_lines:
        for m in _HSPACE.finditer(line):
            if m.group() != " " or m.start() == 0 or m.end() == len(line):
                n += 1
        line = _HSPACE.sub(" ", line).strip(" \t")
        if line:
            lines.append(line)
    n += len(raw_lines) - max(len(lines), 1)
    return "\n".join(lines), n


def _dedup_sentences(text: str) -> tuple[str, int]:
    seen = set()
    removed = 0
    lines = []
    for line in text.split("\n"):
        kept = []
        changed = False
        for s, e in sentence_spans(line):
            sentence = line[s:e]
            key = normalize_sentence(sentence)
            if key in seen:
                removed += 1
                changed = True
                continue
            seen.add(key)
            kept.append(sentence)
        if changed:
            line = " ".join(kept)
        if line:
            lines.append(line)
    return "\n".join(lines), removed


def _single_pass(text: str, mode: CleaningMode, boilerplate, allowed) -> tuple[str, dict]:
    counts = dict.fromkeys(RULES, 0)

    text, counts["hyperlinks"] = HYPERLINK.subn("", text)
    text, counts["boilerplate_lines"] = _drop_lines(text, lambda l: any(p.search(l) for p in boilerplate))
    if mode is CleaningMode.ENGLISH:
        text, counts["escape_sequences"] = ESCAPE.subn("", text)
    text, counts["numeric_lines"] = _drop_lines(text, _is_numeric_line)
    text, counts["special_characters"] = _strip_special(text, mode, allowed)
    text, counts["whitespace"] = _collapse_whitespace(text)
    text, counts["duplicate_sentences"] = _dedup_sentences(text)
    return text, counts


def clean_text(
    text: str,
    mode: CleaningMode = CleaningMode.ENGLISH,
    boilerplate: Optional[Sequence[re.Pattern]] = None,
    allowed=ENGLISH_ALLOWED,
) -> tuple[str, dict]:
    """Clean one string; returns the text and per-rule firing counts."""
    mode = CleaningMode(mode)
    if boilerplate is None:
        boilerplate = DEFAULT_BOILERPLATE_PATTERNS
    totals = dict.fromkeys(RULES, 0)
    # Each changing pass shrinks the text or normalizes whitespace, so this terminates.
    for _ in range(len(text) + 2):
        new, counts = _single_pass(text, mode, boilerplate, allowed)
        if new == text:
            break
        for rule, n in counts.items():
            totals[rule] += n
        text = new
    return text, totals


def clean_document(doc, mode=CleaningMode.ENGLISH, boilerplate=None, allowed=ENGLISH_ALLOWED):
    text, counts = clean_text(doc.text, mode, boilerplate, allowed)
    report = CleaningReport(counts, int(not text))
    if text != doc.text:
        doc = replace(doc, text=text, provenance=doc.provenance + ("cleaned",))
    return doc, report


def clean_corpus(docs, mode=CleaningMode.ENGLISH, boilerplate=None, allowed=ENGLISH_ALLOWED):
    """Clean every document, dropping those left empty; survivor order preserved."""
    out = []
    report = CleaningReport()
    for doc in docs:
        cleaned, r = clean_document(doc, mode, boilerplate, allowed)
        report = report + r
        if cleaned.text:
            out.append(cleaned)
    return out, report
