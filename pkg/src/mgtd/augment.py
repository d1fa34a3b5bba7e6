"""Back-translation of non-English training documents into English."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import httpx

from mgtd.corpus import Document
from mgtd.errors import ConfigError, TranslationError

logger = logging.getLogger(__name__)

BACK_TRANSLATED = "back-translated"

ISO_639_1 = frozenset(
    """aa ab ae af ak am an ar as av ay az ba be bg bh bi bm bn bo br bs ca ce ch co cr cs cu cv cy
    da de dv dz ee el en eo es et eu fa ff fi fj fo fr fy ga gd gl gn gu gv ha he hi ho hr ht hu hy
    hz ia id ie ig ii ik io is it iu ja jv ka kg ki kj kk kl km kn ko kr ks ku kv kw ky la lb lg li
    ln lo lt lu lv mg mh mi mk ml mn mr ms mt my na nb nd ne ng nl nn no nr nv ny oc oj om or os pa
    pi pl ps pt qu rm rn ro ru rw sa sc sd se sg si sk sl sm sn so sq sr ss st su sv sw ta te tg th
    ti tk tl tn to tr ts tt tw ty ug uk ur uz ve vi vo wa wo xh yi yo za zh zu""".split()
)


@dataclass(frozen=True)
class TranslationRoute:
    source_languages: frozenset = frozenset({"zh", "id", "ur", "bg"})
    target_language: str = "en"

    def __post_init__(self):
        object.__setattr__(self, "source_languages", frozenset(self.source_languages))
        if self.target_language in self.source_languages:
            raise ConfigError(f"target language {self.target_language!r} is also a source language")


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class TranslationCache:
    """(language, sha256(text)) -> translation, persisted as an append-only JSONL log."""

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[tuple[str, str], str] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        if self.path is not None and self.path.exists():
            with self.path.open("r", encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        rec = json.loads(line)
                        self._entries[(rec["language"], rec["hash"])] = rec["translation"]

    def __len__(self):
        return len(self._entries)

    def get(self, language: str, text: str) -> Optional[str]:
        key = (language, text_hash(text))
        with self._lock:
            value = self._entries.get(key)
            if value is None:
                self.misses += 1
            else:
                self.hits += 1
            return value

    def put(self, language: str, text: str, translation: str) -> None:
        key = (language, text_hash(text))
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = translation
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as f:
                    rec = {"language": language, "hash": key[1], "translation": translation}
                    f.write(json.dumps(rec, ensure_ascii=False) + "\n")


class Translator(Protocol):
    def translate(self, text: str, source: str, target: str) -> str: ...


class FakeTranslator:
    """Deterministic offline stand-in: reverses the token order and tags the result."""

    def __init__(self, fail_on: Sequence[str] = (), delay: float = 0.0):
        self.fail_on = set(fail_on)
        self.delay = delay
        self.calls = 0
        self.max_concurrent = 0
        self._active = 0
        self._lock = threading.Lock()

    def translate(self, text: str, source: str, target: str) -> str:
        with self._lock:
            self.calls += 1
            self._active += 1
            self.max_concurrent = max(self.max_concurrent, self._active)
        try:
            if self.delay:
                time.sleep(self.delay)
            if text in self.fail_on:
                raise RuntimeError("simulated service failure")
            return "[MT] " + " ".join(reversed(text.split()))
        finally:
            with self._lock:
                self._active -= 1


class HttpTranslator:
    """Client for a JSON translation endpoint.

    Request body ``{"source_language", "target_language", "text"}``; the
    response carries ``{"translated_text"}``. The API key, when set, is sent
    as a bearer token.
    """

    ENV_ENDPOINT = "MGTD_TRANSLATE_ENDPOINT"
    ENV_API_KEY = "MGTD_TRANSLATE_API_KEY"
    ENV_MIN_INTERVAL = "MGTD_TRANSLATE_MIN_INTERVAL"

    def __init__(self, endpoint: str, api_key: Optional[str] = None, min_interval: float = 0.0,
                 timeout: float = 30.0, transport: Optional[httpx.BaseTransport] = None):
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.endpoint = endpoint
        self.min_interval = min_interval
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)
        self._lock = threading.Lock()
        self._next_slot = 0.0

    @classmethod
    def from_env(cls, environ=os.environ, **kwargs) -> "HttpTranslator":
        endpoint = environ.get(cls.ENV_ENDPOINT)
        if not endpoint:
            raise ConfigError(f"set {cls.ENV_ENDPOINT} to the translation endpoint URL")
        return cls(
            endpoint,
            api_key=environ.get(cls.ENV_API_KEY),
            min_interval=float(environ.get(cls.ENV_MIN_INTERVAL, "0")),
            **kwargs,
        )

    def _wait_for_slot(self):
        if self.min_interval <= 0:
            return
        with self._lock:
            now = time.monotonic()
            wait = self._next_slot - now
            self._next_slot = max(now, self._next_slot) + self.min_interval
        if wait > 0:
            time.sleep(wait)

    def translate(self, text: str, source: str, target: str) -> str:
        self._wait_for_slot()
        resp = self._client.post(
            self.endpoint,
            json={"source_language": source, "target_language": target, "text": text},
        )
        resp.raise_for_status()
        return resp.json()["translated_text"]

    def close(self):
        self._client.close()


def _call_with_retries(fn: Callable[[], str], attempts: int, backoff: float, sleep) -> str:
    for attempt in range(attempts):
        try:
            return fn()
        except Exception:
            if attempt == attempts - 1:
                raise
            sleep(backoff * 2 ** attempt)
    raise AssertionError("unreachable")


def back_translate(
    doc: Document,
    route: TranslationRoute,
    cache: TranslationCache,
    client: Translator,
    attempts: int = 3,
    backoff: float = 0.5,
    sleep=time.sleep,
) -> Document:
    """Translate ``doc`` into the target language if its language is on the route."""
    lang = doc.language
    if lang not in route.source_languages:
        if lang != route.target_language and lang not in ISO_639_1:
            return doc.with_provenance(f"warning:unknown-language:{lang}")
        return doc

    translated = cache.get(lang, doc.text)
    if translated is None:
        try:
            translated = _call_with_retries(
                lambda: client.translate(doc.text, lang, route.target_language), attempts, backoff, sleep
            )
        except Exception as e:
            raise TranslationError(doc.id, f"{type(e).__name__}: {e}") from e
        cache.put(lang, doc.text, translated)
    return replace(
        doc,
        text=translated,
        language=route.target_language,
        provenance=doc.provenance + (BACK_TRANSLATED,),
    )


@dataclass
class BatchResult:
    documents: list = field(default_factory=list)
    failures: list = field(default_factory=list)  # (doc id, message)


def translate_batch(
    docs: Sequence[Document],
    route: TranslationRoute,
    cache: TranslationCache,
    client: Translator,
    max_in_flight: int = 4,
    fail_fast: bool = False,
    attempts: int = 3,
    backoff: float = 0.5,
    sleep=time.sleep,
) -> BatchResult:
    """Back-translate ``docs`` with at most ``max_in_flight`` outstanding requests.

    Successful documents come back in input order. Failures are collected
    unless ``fail_fast`` is set, in which case the first one is raised.
    """
    if max_in_flight < 1:
        raise ValueError("max_in_flight must be >= 1")

    def work(doc):
        return back_translate(doc, route, cache, client, attempts, backoff, sleep)

    results: list = [None] * len(docs)
    errors: dict[int, TranslationError] = {}
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        futures = [pool.submit(work, d) for d in docs]
        for i, fut in enumerate(futures):
            try:
                results[i] = fut.result()
            except TranslationError as e:
                if fail_fast:
                    for other in futures[i + 1:]:
                        other.cancel()
                    raise
                errors[i] = e

    out = BatchResult()
    for i, doc in enumerate(results):
        if i in errors:
            out.failures.append((docs[i].id, str(errors[i])))
            logger.warning("%s", errors[i])
        else:
            out.documents.append(doc)
    return out
