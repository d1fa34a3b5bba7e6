"""Accuracy evaluation and the ablation runner."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from mgtd.corpus import SUBTASK_B, LabelSchema
from mgtd.ensemble import collect_logits, stack_predict, stack_train
from mgtd.errors import ConfigError, ValidationError
from mgtd.modeling.encoder import ReferenceEncoder, load_checkpoint, save_checkpoint
from mgtd.modeling.lora import LoraConfig, lora_inject
from mgtd.modeling.mpu import MpuConfig
from mgtd.modeling.ovr import ovr_predict_batch, ovr_train
from mgtd.modeling.training import TrainConfig, accuracy, fine_tune

logger = logging.getLogger(__name__)

METHODS = ("fine-tune", "fine-tune+lora", "mpu", "ovr", "stacking")


def evaluate(predictions: Sequence[tuple[str, int]], gold: Sequence[tuple[str, int]]) -> float:
    """Share of gold ids predicted correctly; a missing prediction counts as wrong."""
    if not gold:
        raise ValidationError("gold set is empty")
    gold_map = dict(gold)
    pred_map = dict(predictions)
    if len(gold_map) != len(gold):
        raise ValidationError("duplicate ids in gold labels")
    if len(pred_map) != len(predictions):
        raise ValidationError("duplicate ids in predictions")
    unknown = set(pred_map) - set(gold_map)
    if unknown:
        raise ValidationError(f"{len(unknown)} predicted ids are not in the gold set, e.g. {sorted(unknown)[0]!r}")
    correct = sum(1 for i, label in gold_map.items() if i in pred_map and pred_map[i] == label)
    return correct / len(gold_map)


@dataclass
class RunConfig:
    """One end-to-end configuration.

    ``encoder``, ``train``, ``mpu``, ``lora`` and ``stack`` hold keyword
    overrides for the corresponding config objects; ``members`` names the
    runs whose models a stacking run combines.
    """

    label: str
    method: str
    seed: int = 0
    task: str = "subtaskA-mono"
    version: str = "v1"
    encoder: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    mpu: dict = field(default_factory=dict)
    lora: dict = field(default_factory=dict)
    stack: dict = field(default_factory=dict)
    members: list = field(default_factory=list)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.method == "stacking" and not self.members:
            raise ConfigError(f"stacking run {self.label!r} lists no members")

    def schema(self) -> LabelSchema:
        return LabelSchema.for_task(self.task)

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.seed, **self.train)

    def key(self) -> str:
        """Hash of everything that determines the trained model (the label excluded)."""
        payload = asdict(self)
        payload.pop("label")
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


DEFAULT_ABLATION = (
    RunConfig("base", "fine-tune"),
    RunConfig("base+LoRA", "fine-tune+lora"),
    RunConfig("base+MPU", "mpu"),
    RunConfig("stacking", "stacking", members=["base+LoRA", "base+MPU"]),
)


def default_ablation(seed: int = 0, **overrides) -> list[RunConfig]:
    return [RunConfig(c.label, c.method, seed=seed, members=list(c.members), **overrides) for c in DEFAULT_ABLATION]


def build_model(config: RunConfig):
    num_classes = config.schema().num_classes
    model = ReferenceEncoder(num_classes=num_classes, seed=config.seed, **config.encoder)
    if config.method == "fine-tune+lora":
        model = lora_inject(model, LoraConfig(seed=config.seed, **config.lora))
    return model


def train_run(config: RunConfig, train, dev):
    """Train the single model behind a non-stacking, non-OvR run."""
    loss = MpuConfig(**config.mpu) if config.method == "mpu" else None
    model, _ = fine_tune(build_model(config), train, dev, config.train_config(), loss)
    return model


def _data_key(docs) -> str:
    h = hashlib.sha256()
    for d in docs:
        h.update(f"{d.id}\t{d.label}\t{d.text}\n".encode("utf-8"))
    return h.hexdigest()[:16]


class ModelCache:
    """Trained models keyed by run config and data; optionally mirrored to disk."""

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else None
        self._models: dict = {}
        self.trained = 0

    def get(self, config: RunConfig, train, dev):
        key = f"{config.key()}-{_data_key(train)}-{_data_key(dev)}"
        if key in self._models:
            return self._models[key]
        path = self.directory / f"{key}.safetensors" if self.directory else None
        if path is not None and path.exists():
            model, _ = load_checkpoint(path)
        else:
            model = train_run(config, train, dev)
            self.trained += 1
            if path is not None:
                save_checkpoint(model, path, run=asdict(config))
        self._models[key] = model
        return model


@dataclass
class AblationRow:
    label: str
    method: str
    accuracy: Optional[float] = None
    error: Optional[str] = None


@dataclass
class AblationTable:
    rows: list

    def best(self) -> Optional[str]:
        scored = [r for r in self.rows if r.accuracy is not None]
        if not scored:
            return None
        return max(scored, key=lambda r: r.accuracy).label

    def format(self) -> str:
        best = self.best()
        width = max([len("method")] + [len(r.label) for r in self.rows])
        lines = [f"{'method'.ljust(width)}  result"]
        for r in self.rows:
            value = f"{r.accuracy:.3f}" if r.accuracy is not None else f"error: {r.error}"
            mark = " *" if r.label == best else ""
            lines.append(f"{r.label.ljust(width)}  {value}{mark}")
        return "\n".join(lines) + "\n"

    def to_records(self) -> str:
        return "".join(json.dumps(asdict(r), sort_keys=True) + "\n" for r in self.rows)


def run_one(config: RunConfig, by_label: dict, train, dev, cache: ModelCache) -> float:
    if config.method == "ovr":
        ovr = ovr_train(train, dev, config.schema(), config.train_config(), MpuConfig(**config.mpu) if config.mpu else None)
        return evaluate(list(zip([d.id for d in dev], ovr_predict_batch(ovr, dev))), [(d.id, d.label) for d in dev])
    if config.method != "stacking":
        return accuracy(cache.get(config, train, dev), dev)

    members = []
    for name in config.members:
        if name not in by_label:
            raise ConfigError(f"stacking member {name!r} is not a configured run")
        member = by_label[name]
        if member.method in ("stacking", "ovr"):
            raise ConfigError(f"stacking member {name!r} must be a single-model run")
        members.append((name, cache.get(member, train, dev)))
    # The meta-learner trains on dev-set logits and keeps its best dev epoch.
    features = collect_logits(members, dev)
    default_epochs = 3000 if config.task == SUBTASK_B else 1000
    opts = {"epochs": default_epochs, **config.stack}
    stack = stack_train(features, features, seed=config.seed, **opts)
    preds = stack_predict(stack, features)
    return evaluate(list(zip(features.ids, preds)), [(d.id, d.label) for d in dev])


def run_ablation(configs: Sequence[RunConfig], train, dev, cache_dir=None) -> AblationTable:
    """Run every configuration on a shared dev split; failures are recorded per row."""
    if not configs:
        raise ConfigError("no ablation configurations given")
    by_label = {c.label: c for c in configs}
    if len(by_label) != len(configs):
        raise ConfigError("ablation labels must be unique")
    cache = ModelCache(cache_dir)
    rows = []
    for config in configs:
        try:
            acc = run_one(config, by_label, train, dev, cache)
            rows.append(AblationRow(config.label, config.method, acc))
        except Exception as e:  # one broken configuration must not sink the others
            logger.exception("ablation run %r failed", config.label)
            rows.append(AblationRow(config.label, config.method, None, f"{type(e).__name__}: {e}"))
    return AblationTable(rows)
