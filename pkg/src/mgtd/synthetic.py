"""Synthetic corpora for desk-scale experiments.

Each class draws words from a shared Zipfian vocabulary mixed with a
class-specific vocabulary, so the classes differ only in token distribution.
"""

from __future__ import annotations

import random
from typing import Optional

from mgtd.corpus import SUBTASK_B_CLASSES, Document


def _zipf_weights(n: int) -> list[float]:
    return [1.0 / (i + 1) for i in range(n)]


class _Vocab:
    def __init__(self, prefix: str, size: int):
        self.words = [f"{prefix}{i:03d}" for i in range(size)]
        self.weights = _zipf_weights(size)

    def draw(self, rng: random.Random, k: int) -> list[str]:
        return rng.choices(self.words, weights=self.weights, k=k)


def _sentence(rng, shared: _Vocab, own: _Vocab, signal: float) -> str:
    n = rng.randint(5, 14)
    words = [own.draw(rng, 1)[0] if rng.random() < signal else shared.draw(rng, 1)[0] for _ in range(n)]
    words[0] = words[0].capitalize()
    return " ".join(words) + "."


def _document(rng, shared, own, signal, short: bool) -> str:
    n = rng.randint(1, 3) if short else rng.randint(4, 16)
    return " ".join(_sentence(rng, shared, own, signal) for _ in range(n))


def make_corpus(
    n_docs: int,
    n_classes: int = 2,
    seed: int = 0,
    short_fraction: float = 0.3,
    signal: float = 0.25,
    shared_size: int = 400,
    class_vocab_size: int = 120,
    id_prefix: str = "doc",
    sources: Optional[tuple] = None,
) -> list[Document]:
    """Balanced labeled documents; ``short_fraction`` of them have 1-3 sentences."""
    rng = random.Random(seed)
    shared = _Vocab("w", shared_size)
    own = [_Vocab(f"c{c}x", class_vocab_size) for c in range(n_classes)]
    if sources is None:
        sources = ("human", "machine") if n_classes == 2 else tuple(SUBTASK_B_CLASSES[:n_classes])
    docs = []
    for i in range(n_docs):
        label = i % n_classes
        short = rng.random() < short_fraction
        text = _document(rng, shared, own[label], signal, short)
        docs.append(Document(id=f"{id_prefix}{i:05d}", text=text, language="en", label=label, source=sources[label]))
    rng.shuffle(docs)
    return docs


def make_detection_split(n_train: int = 2000, n_dev: int = 500, seed: int = 0, short_fraction: float = 0.3,
                         n_classes: int = 2, **kwargs) -> tuple[list[Document], list[Document]]:
    """Train and dev drawn from the same distributions with disjoint ids."""
    train = make_corpus(n_train, n_classes, seed=seed, short_fraction=short_fraction, id_prefix="train", **kwargs)
    dev = make_corpus(n_dev, n_classes, seed=seed + 10_000, short_fraction=short_fraction, id_prefix="dev", **kwargs)
    return train, dev
