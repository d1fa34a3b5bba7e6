"""One-vs-rest attribution over the six generator classes."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from mgtd.corpus import LabelSchema
from mgtd.errors import ValidationError
from mgtd.modeling.encoder import EncoderModel, ReferenceEncoder, binary_score, predict
from mgtd.modeling.training import Loss, TrainConfig, fine_tune


@dataclass
class OvRModel:
    schema: LabelSchema
    classifiers: list
    histories: list = field(default_factory=list)


def one_vs_rest_labels(docs: Sequence, positive_class: int) -> list:
    return [replace(d, label=int(d.label == positive_class)) for d in docs]


def ovr_train(train: Sequence, dev: Sequence, schema: LabelSchema, tc: TrainConfig, loss: Loss = None,
              model_factory: Optional[Callable[[], EncoderModel]] = None) -> OvRModel:
    """Fine-tune one single-score classifier per class on class-vs-rest labels."""
    present = {d.label for d in train}
    for class_id, name in enumerate(schema.classes):
        if class_id not in present:
            raise ValidationError(f"class {name!r} ({class_id}) has no training documents")
    if model_factory is None:
        model_factory = lambda: ReferenceEncoder(num_classes=1, seed=tc.seed)

    classifiers, histories = [], []
    for class_id in range(schema.num_classes):
        model = model_factory()
        if model.num_classes != 1:
            raise ValueError("one-vs-rest classifiers need a single-score head")
        best, history = fine_tune(model, one_vs_rest_labels(train, class_id), one_vs_rest_labels(dev, class_id),
                                  tc, loss, positive_label=1)
        classifiers.append(best)
        histories.append(history)
    return OvRModel(schema, classifiers, histories)


def ovr_scores(ovr: OvRModel, docs: Sequence) -> np.ndarray:
    """N x K matrix of raw positive-class scores."""
    cols = [binary_score(torch.from_numpy(predict(model, docs).values)).double().numpy() for model in ovr.classifiers]
    return np.stack(cols, axis=1) if cols else np.zeros((len(docs), 0))


def ovr_confidences(ovr: OvRModel, docs: Sequence) -> np.ndarray:
    """Positive-class probabilities; ``sigmoid`` of ``ovr_scores``."""
    return 1.0 / (1.0 + np.exp(-ovr_scores(ovr, docs)))


def decide(confidences) -> int:
    """Index of the highest confidence; lowest index on ties."""
    return int(np.argmax(np.asarray(confidences)))


def ovr_predict(ovr: OvRModel, doc) -> int:
    # Raw scores rank classes exactly like their sigmoid, without saturation ties.
    return decide(ovr_scores(ovr, [doc])[0])


def ovr_predict_batch(ovr: OvRModel, docs: Sequence) -> list[int]:
    return [decide(row) for row in ovr_scores(ovr, docs)]
