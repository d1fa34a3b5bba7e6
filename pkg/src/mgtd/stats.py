"""Per-split corpus statistics: sentences and words per document, share of long documents."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Mapping, Optional, Sequence

from mgtd.text import split_sentences, split_words

LONG_DOC_WORDS = 512


@dataclass(frozen=True)
class StatsRow:
    n_docs: int
    avg_sent: Optional[float]
    avg_sent_len: Optional[float]
    frac_over_512: Optional[float]


def sentence_count(text: str, splitter: Callable[[str], list] = split_sentences) -> int:
    return len(splitter(text)) if text.strip() else 0


def word_count(text: str, tokenizer: Callable[[str], list] = split_words) -> int:
    return len(tokenizer(text))


def corpus_stats(
    docs: Sequence,
    splitter: Callable[[str], list] = split_sentences,
    tokenizer: Callable[[str], list] = split_words,
    threshold: int = LONG_DOC_WORDS,
) -> StatsRow:
    """Means over documents; an empty corpus yields ``None`` for every mean."""
    n = len(docs)
    if n == 0:
        return StatsRow(0, None, None, None)
    sents = [sentence_count(d.text, splitter) for d in docs]
    words = [word_count(d.text, tokenizer) for d in docs]
    return StatsRow(
        n_docs=n,
        avg_sent=math.fsum(sents) / n,
        avg_sent_len=math.fsum(words) / n,
        frac_over_512=sum(w > threshold for w in words) / n,
    )


def merge_rows(rows: Sequence[StatsRow]) -> StatsRow:
    """Count-weighted combination of rows computed on disjoint shards."""
    total = sum(r.n_docs for r in rows)
    if total == 0:
        return StatsRow(0, None, None, None)

    def wmean(attr):
        return math.fsum(getattr(r, attr) * r.n_docs for r in rows if r.n_docs) / total

    return StatsRow(total, wmean("avg_sent"), wmean("avg_sent_len"), wmean("frac_over_512"))


def _fmt(value, pct=False):
    if value is None:
        return "n/a"
    return f"{100 * value:.1f}%" if pct else f"{value:.1f}"


def format_table(rows: Mapping[tuple[str, str], StatsRow]) -> str:
    """Aligned text table, one column per (track, split)."""
    keys = list(rows)
    header = ["statistic"] + [f"{t}/{s}" for t, s in keys]
    body = [
        ["n-docs"] + [str(rows[k].n_docs) for k in keys],
        ["avg-sent"] + [_fmt(rows[k].avg_sent) for k in keys],
        ["avg-sent-len"] + [_fmt(rows[k].avg_sent_len) for k in keys],
        [f"sent-len>{LONG_DOC_WORDS}"] + [_fmt(rows[k].frac_over_512, pct=True) for k in keys],
    ]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))) for r in [header] + body]
    return "\n".join(lines) + "\n"


def to_records(rows: Mapping[tuple[str, str], StatsRow]) -> str:
    """JSONL, one record per (track, split)."""
    out = []
    for (track, split), row in rows.items():
        out.append(json.dumps({"track": track, "split": split, **asdict(row)}, sort_keys=True))
    return "\n".join(out) + ("\n" if out else "")
