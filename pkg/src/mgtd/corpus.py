"""Documents, label schemas, JSONL I/O and dataset-version construction."""

from __future__ import annotations

import json
import logging
import random
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from mgtd.errors import CorpusError, ParseError, ValidationError
from mgtd.text import normalize_sentence

logger = logging.getLogger(__name__)

TASKS = ("subtaskA-mono", "subtaskA-multi", "subtaskB")
SUBTASK_A_CLASSES = ("human", "machine")
SUBTASK_B_CLASSES = ("human", "chatGPT", "cohere", "davinci", "bloomz", "dolly")

MONO, MULTI, SUBTASK_B = TASKS


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    language: Optional[str] = None
    label: Optional[int] = None
    source: Optional[str] = None
    provenance: tuple[str, ...] = ()

    def with_provenance(self, tag: str) -> "Document":
        return replace(self, provenance=self.provenance + (tag,))

    def to_record(self) -> dict:
        record = {"id": self.id, "text": self.text}
        if self.language is not None:
            record["language"] = self.language
        if self.label is not None:
            record["label"] = self.label
        if self.source is not None:
            record["source"] = self.source
        if self.provenance:
            record["provenance"] = list(self.provenance)
        return record


@dataclass(frozen=True)
class LabelSchema:
    task: str
    classes: tuple[str, ...]

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        expected = 6 if self.task == SUBTASK_B else 2
        if len(self.classes) != expected:
            raise ValueError(f"{self.task} needs exactly {expected} classes, got {len(self.classes)}")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("class names must be unique")

    @classmethod
    def for_task(cls, task: str) -> "LabelSchema":
        classes = SUBTASK_B_CLASSES if task == SUBTASK_B else SUBTASK_A_CLASSES
        return cls(task, classes)

    @property
    def class_to_id(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.classes)}

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def validate_label(self, label) -> int:
        """Map an integer, numeric string or class name to a class id."""
        if isinstance(label, bool):
            raise ValidationError(f"label {label!r} is not a class id")
        if isinstance(label, str):
            if label in self.class_to_id:
                return self.class_to_id[label]
            try:
                label = int(label)
            except ValueError:
                raise ValidationError(f"unknown class name {label!r} for {self.task}") from None
        if not isinstance(label, int):
            raise ValidationError(f"label {label!r} is not a class id")
        if not 0 <= label < self.num_classes:
            raise ValidationError(
                f"label {label} outside {self.task} label set 0..{self.num_classes - 1}"
            )
        return label


# --------------------------------------------------------------------------
# JSONL I/O
# --------------------------------------------------------------------------


def load_corpus(path, schema: Optional[LabelSchema] = None, default_language=None) -> list[Document]:
    """Read one Document per JSONL line, in file order.

    Blank lines are skipped. Labels are validated against ``schema`` when given.
    """
    path = Path(path)
    docs = []
    seen = set()
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(path, lineno, f"invalid JSON: {e.msg}") from e
            if not isinstance(raw, dict):
                raise ParseError(path, lineno, "record is not a JSON object")
            for key in ("id", "text"):
                if key not in raw:
                    raise ParseError(path, lineno, f"missing field {key!r}")
            doc_id = str(raw["id"])
            text = raw["text"]
            if not doc_id:
                raise ValidationError(f"{path}:{lineno}: empty id")
            if not isinstance(text, str) or not text.strip():
                raise ValidationError(f"{path}:{lineno}: empty text for id {doc_id!r}")
            if doc_id in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate id {doc_id!r}")
            seen.add(doc_id)

            label = raw.get("label")
            if label is not None:
                if schema is not None:
                    try:
                        label = schema.validate_label(label)
                    except ValidationError as e:
                        raise ValidationError(f"{path}:{lineno}: {e}") from None
                elif not isinstance(label, int) or isinstance(label, bool):
                    raise ValidationError(f"{path}:{lineno}: label {label!r} is not an integer")
            docs.append(
                Document(
                    id=doc_id,
                    text=text,
                    language=raw.get("language", default_language),
                    label=label,
                    source=raw.get("source"),
                    provenance=tuple(raw.get("provenance", ())),
                )
            )
    return docs


def _write_lines(records: Iterable[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(json.dumps(record, ensure_ascii=False))
            f.write("\n")


def write_documents(docs: Sequence[Document], path) -> None:
    _check_unique(d.id for d in docs)
    _write_lines((d.to_record() for d in docs), path)


def write_predictions(predictions: Sequence[tuple[str, int]], path, schema: Optional[LabelSchema] = None) -> None:
    """Write submission records carrying exactly ``id`` and ``label``."""
    _check_unique(pid for pid, _ in predictions)
    records = []
    for pid, label in predictions:
        label = int(label)
        if schema is not None:
            schema.validate_label(label)
        records.append({"id": str(pid), "label": label})
    _write_lines(records, path)


def read_predictions(path) -> list[tuple[str, int]]:
    path = Path(path)
    out = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                out.append((str(raw["id"]), int(raw["label"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ParseError(path, lineno, f"bad prediction record: {e}") from e
    return out


def _check_unique(ids: Iterable[str]) -> None:
    counts = Counter(ids)
    dupes = sorted(k for k, n in counts.items() if n > 1)
    if dupes:
        raise ValidationError(f"duplicate ids: {', '.join(dupes[:10])}")


# --------------------------------------------------------------------------
# Label surgery
# --------------------------------------------------------------------------


def relabel_multiclass(docs: Sequence[Document], tagmap: Mapping[str, int]) -> list[Document]:
    """Replace each label by ``tagmap[doc.source]``."""
    missing = sorted({str(d.source) for d in docs if d.source not in tagmap})
    if missing:
        raise ValidationError(f"source tags without a class mapping: {', '.join(missing)}")
    return [replace(d, label=int(tagmap[d.source])) for d in docs]


def rebalance(docs: Sequence[Document], cap: int, seed: int) -> list[Document]:
    """Downsample every class above ``cap`` to exactly ``cap`` documents.

    Survivors keep their input order.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    by_class = defaultdict(list)
    for i, d in enumerate(docs):
        if d.label is None:
            raise ValidationError(f"document {d.id!r} has no label")
        by_class[d.label].append(i)

    rng = random.Random(seed)
    keep = set()
    for label in sorted(by_class):
        indices = by_class[label]
        if len(indices) > cap:
            indices = rng.sample(indices, cap)
        keep.update(indices)
    return [d for i, d in enumerate(docs) if i in keep]


# --------------------------------------------------------------------------
# Dataset versions
# --------------------------------------------------------------------------


@dataclass
class LineageStep:
    name: str
    details: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


@dataclass
class CorpusVersion:
    name: str
    splits: dict  # (track, split) -> list[Document]
    lineage: list = field(default_factory=list)

    def get(self, track: str, split: str) -> list[Document]:
        return self.splits.get((track, split), [])

    def sizes(self) -> dict[tuple[str, str], int]:
        return {key: len(docs) for key, docs in sorted(self.splits.items())}

    def leaked_ids(self, track: str) -> set[str]:
        """Ids present in both the train and dev split of ``track``."""
        train = {d.id for d in self.get(track, "train")}
        return train & {d.id for d in self.get(track, "dev")}


# Step names recorded in CorpusVersion.lineage.
OVERLAP_REMOVAL = "mono-dev-overlap-removal"
TRANSLATION_MERGE = "back-translation-merge"
CLEANING = "cleaning"
DEV_MERGE = "multilingual-dev-merge"


def _track_mode(track: str):
    from mgtd.cleaning import CleaningMode

    return CleaningMode.MULTILINGUAL if track == MULTI else CleaningMode.ENGLISH


def remove_overlap(docs: Sequence[Document], overlap: Sequence[Document]) -> tuple[list[Document], dict]:
    """Drop documents whose id matches an overlap id; unmatched overlap docs fall back to text equality."""
    overlap_ids = {d.id for d in overlap}
    present = {d.id for d in docs}
    fallback_texts = {normalize_sentence(d.text) for d in overlap if d.id not in present}

    kept, by_id, by_text = [], 0, 0
    for d in docs:
        if d.id in overlap_ids:
            by_id += 1
        elif fallback_texts and normalize_sentence(d.text) in fallback_texts:
            by_text += 1
        else:
            kept.append(d)
    return kept, {"supplied": len(overlap_ids), "removed_by_id": by_id, "removed_by_text": by_text}


def build_version(v1: CorpusVersion, plan: str, translated: Optional[Sequence[Document]], boilerplate=None) -> CorpusVersion:
    """Derive v2 (or v3) from the official v1 release.

    v2: monolingual dev removed from multilingual train, translated documents
    appended to monolingual train, every split cleaned. v3: v2 plus the
    multilingual dev split merged into both subtask-A train splits.
    """
    from mgtd.cleaning import clean_corpus

    if plan not in ("v2", "v3"):
        raise ValueError(f"plan must be 'v2' or 'v3', got {plan!r}")
    if translated is None:
        raise CorpusError(f"building {plan} requires back-translated documents for v2")

    splits = {key: list(docs) for key, docs in v1.splits.items()}
    lineage = []

    mono_dev = splits.get((MONO, "dev"), [])
    multi_train, info = remove_overlap(splits.get((MULTI, "train"), []), mono_dev)
    step = LineageStep(OVERLAP_REMOVAL, info)
    removed = info["removed_by_id"] + info["removed_by_text"]
    if info["supplied"] and removed == 0:
        step.warnings.append("overlap ids were supplied but matched no multilingual training document")
    splits[(MULTI, "train")] = multi_train
    lineage.append(step)

    # Overlapping translations would leak monolingual dev into monolingual train.
    mono_train = splits.get((MONO, "train"), [])
    existing = {d.id for d in mono_train}
    dev_ids = {d.id for d in mono_dev}
    appended, skipped_dupe, skipped_dev = [], 0, 0
    for d in translated:
        if d.id in dev_ids:
            skipped_dev += 1
        elif d.id in existing:
            skipped_dupe += 1
        else:
            existing.add(d.id)
            appended.append(d)
    splits[(MONO, "train")] = mono_train + appended
    lineage.append(
        LineageStep(
            TRANSLATION_MERGE,
            {"appended": len(appended), "skipped_duplicate_id": skipped_dupe, "skipped_dev_overlap": skipped_dev},
        )
    )

    totals = {}
    emptied = 0
    for key in sorted(splits):
        cleaned, report = clean_corpus(splits[key], _track_mode(key[0]), boilerplate=boilerplate)
        splits[key] = cleaned
        emptied += report.documents_emptied
        for rule, n in report.counts.items():
            totals[rule] = totals.get(rule, 0) + n
    lineage.append(LineageStep(CLEANING, {"rule_counts": totals, "documents_emptied": emptied}))

    if plan == "v2":
        return CorpusVersion("v2", splits, lineage)

    multi_dev = splits.get((MULTI, "dev"), [])
    merged_counts = {}
    for track in (MONO, MULTI):
        train = splits.get((track, "train"), [])
        ids = {d.id for d in train}
        extra = [d for d in multi_dev if d.id not in ids]
        splits[(track, "train")] = train + extra
        merged_counts[track] = len(extra)
    lineage.append(LineageStep(DEV_MERGE, {"merged": merged_counts}))
    return CorpusVersion("v3", splits, lineage)


def save_version(version: CorpusVersion, directory) -> None:
    """Write ``<dir>/<track>/<split>.jsonl`` plus ``lineage.json``."""
    directory = Path(directory)
    for (track, split), docs in sorted(version.splits.items()):
        write_documents(docs, directory / track / f"{split}.jsonl")
    meta = {"name": version.name, "lineage": [asdict(s) for s in version.lineage]}
    (directory / "lineage.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_version(directory, name: str = "v1") -> CorpusVersion:
    directory = Path(directory)
    splits = {}
    for track in TASKS:
        schema = LabelSchema.for_task(track)
        for path in sorted((directory / track).glob("*.jsonl")):
            splits[(track, path.stem)] = load_corpus(path, schema)
    lineage = []
    meta_path = directory / "lineage.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        name = meta.get("name", name)
        lineage = [LineageStep(**s) for s in meta.get("lineage", [])]
    if not splits:
        raise CorpusError(f"no <track>/<split>.jsonl files under {directory}")
    return CorpusVersion(name, splits, lineage)
