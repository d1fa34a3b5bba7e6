"""Stacking: a linear layer over the concatenated logits of several base models."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from mgtd.errors import ValidationError
from mgtd.modeling.encoder import LogitsMatrix, predict

logger = logging.getLogger(__name__)

FEATURES_FORMAT = "mgtd-stack-features/1"
STACK_FORMAT = "mgtd-stack-model/1"


@dataclass
class StackFeatures:
    values: np.ndarray  # N x (M * C), base-model blocks in ``model_ids`` order
    model_ids: list
    num_classes: int
    ids: list
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.model_ids) * self.num_classes:
            raise ValidationError(
                f"feature matrix of shape {self.values.shape} does not match "
                f"{len(self.model_ids)} models x {self.num_classes} classes"
            )
        if len(self.ids) != self.values.shape[0]:
            raise ValidationError("one id per feature row required")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def block(self, m: int) -> np.ndarray:
        c = self.num_classes
        return self.values[:, m * c:(m + 1) * c]

    def manifest(self) -> dict:
        return {"models": list(self.model_ids), "num_classes": self.num_classes}

    def save(self, path) -> None:
        """Columnar JSON: one column per (model, class) plus ids and labels."""
        columns = {}
        for m, name in enumerate(self.model_ids):
            for c in range(self.num_classes):
                columns[f"{name}:{c}"] = self.values[:, m * self.num_classes + c].tolist()
        doc = {
            "format": FEATURES_FORMAT,
            "manifest": self.manifest(),
            "ids": list(self.ids),
            "labels": None if self.labels is None else self.labels.tolist(),
            "columns": columns,
        }
        Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "StackFeatures":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("format") != FEATURES_FORMAT:
            raise ValidationError(f"{path}: not a stack feature file")
        manifest = doc["manifest"]
        names = [f"{m}:{c}" for m in manifest["models"] for c in range(manifest["num_classes"])]
        values = np.array([doc["columns"][n] for n in names], dtype=np.float64).T.reshape(len(doc["ids"]), len(names))
        return cls(values, manifest["models"], manifest["num_classes"], doc["ids"], doc["labels"])


def features_from_logits(logits: Sequence[LogitsMatrix], model_ids: Sequence[str], labels=None) -> StackFeatures:
    if len(logits) != len(model_ids) or not logits:
        raise ValidationError("need one model id per logits matrix, and at least one matrix")
    widths = {lm.num_classes for lm in logits}
    if len(widths) != 1:
        raise ValidationError(f"base models disagree on the label schema: class counts {sorted(widths)}")
    ids = list(logits[0].ids)
    for lm in logits[1:]:
        if list(lm.ids) != ids:
            raise ValidationError("logits matrices cover different documents or orders")
    return StackFeatures(np.concatenate([lm.values for lm in logits], axis=1), list(model_ids), widths.pop(), ids, labels)


def collect_logits(models: Sequence[tuple[str, object]], docs: Sequence) -> StackFeatures:
    """Concatenate ``predict`` outputs of ``(name, model)`` pairs, in the given order."""
    if not docs:
        raise ValidationError("no documents to collect logits for")
    classes = {m.num_classes for _, m in models}
    if len(classes) != 1:
        raise ValidationError(f"base models disagree on the label schema: class counts {sorted(classes)}")
    labels = [d.label for d in docs]
    labels = None if any(l is None for l in labels) else labels
    return features_from_logits([predict(m, docs) for _, m in models], [n for n, _ in models], labels)


@dataclass
class StackModel:
    weight: np.ndarray  # C x (M * C)
    bias: np.ndarray
    model_ids: list
    num_classes: int
    history: list = field(default_factory=list)
    best_epoch: int = 0

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        expected = (self.num_classes, len(self.model_ids) * self.num_classes)
        if self.weight.shape != expected or self.bias.shape != (self.num_classes,):
            raise ValidationError(f"stack weights of shape {self.weight.shape} do not match {expected}")

    def scores(self, features: StackFeatures) -> np.ndarray:
        if features.width != self.weight.shape[1]:
            raise ValidationError(f"feature width {features.width} != stack input width {self.weight.shape[1]}")
        if list(features.model_ids) != list(self.model_ids):
            raise ValidationError(f"feature model order {features.model_ids} != stack manifest {self.model_ids}")
        return features.values @ self.weight.T + self.bias

    def save(self, path) -> None:
        doc = {
            "format": STACK_FORMAT,
            "manifest": {"models": list(self.model_ids), "num_classes": self.num_classes},
            "weight": self.weight.tolist(),
            "bias": self.bias.tolist(),
            "history": self.history,
            "best_epoch": self.best_epoch,
        }
        Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "StackModel":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("format") != STACK_FORMAT:
            raise ValidationError(f"{path}: not a stack model file")
        m = doc["manifest"]
        return cls(doc["weight"], doc["bias"], m["models"], m["num_classes"], doc["history"], doc["best_epoch"])


def _accuracy(layer: torch.nn.Linear, x: torch.Tensor, y: torch.Tensor) -> float:
    with torch.no_grad():
        return float((layer(x).argmax(dim=1) == y).double().mean())


def stack_train(features: StackFeatures, dev: StackFeatures, epochs: int = 1000, learning_rate: float = 1e-4,
                seed: int = 0, batch_size: int = 64) -> StackModel:
    """Fit the linear meta-learner; keep the epoch with the best dev accuracy (earliest on ties)."""
    if features.labels is None or dev.labels is None:
        raise ValidationError("stack training needs labels on both training and dev features")
    if dev.width != features.width or list(dev.model_ids) != list(features.model_ids):
        raise ValidationError("training and dev features have different layouts")
    if len(np.unique(features.labels)) < 2:
        warnings.warn("stack training labels contain a single class", RuntimeWarning, stacklevel=2)

    c = features.num_classes
    x = torch.from_numpy(features.values)
    y = torch.from_numpy(features.labels)
    dx = torch.from_numpy(dev.values)
    dy = torch.from_numpy(dev.labels)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        layer = torch.nn.Linear(features.width, c).double()
    gen = torch.Generator().manual_seed(seed)
    optimizer = torch.optim.Adam(layer.parameters(), lr=learning_rate)

    history = []
    best_acc, best_epoch, best = -1.0, 0, None
    for epoch in range(1, epochs + 1):
        order = torch.randperm(len(y), generator=gen)
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            loss = F.cross_entropy(layer(x[idx]), y[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        acc = _accuracy(layer, dx, dy)
        history.append(acc)
        if acc > best_acc:
            best_acc, best_epoch = acc, epoch
            best = (layer.weight.detach().clone().numpy(), layer.bias.detach().clone().numpy())
    logger.info("stacking: best dev accuracy %.4f at epoch %d", best_acc, best_epoch)
    return StackModel(best[0], best[1], list(features.model_ids), c, history, best_epoch)


def stack_predict(stack: StackModel, features: StackFeatures) -> list[int]:
    """Row-wise argmax of the linear map; lowest class index on ties."""
    return [int(i) for i in np.argmax(stack.scores(features), axis=1)]
