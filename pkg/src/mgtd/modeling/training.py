"""Seeded mini-batch fine-tuning with best-on-dev checkpoint selection."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import torch
import torch.nn.functional as F

from mgtd.errors import ConfigError, TrainingError
from mgtd.modeling.encoder import EncoderModel, binary_score, predict, predicted_labels
from mgtd.modeling.mpu import MpuConfig, mpu_batch_loss, mpu_prior, multiscale_views

logger = logging.getLogger(__name__)

Loss = Union[None, str, MpuConfig]


@dataclass(frozen=True)
class TrainConfig:
    seed: int
    learning_rate: float = 1e-4
    epochs: int = 3
    batch_size: int = 16

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass
class Example:
    tokens: list
    label: Optional[int] = None
    role: Optional[str] = None
    prior: float = 0.0


def _is_mpu(loss: Loss) -> bool:
    return isinstance(loss, MpuConfig)


def make_examples(model: EncoderModel, docs: Sequence, loss: Loss, seed=0, positive_label: int = 1,
                  _token_cache: Optional[dict] = None) -> list[Example]:
    """Training examples for one epoch; under MPU each document expands into its views."""
    cache = {} if _token_cache is None else _token_cache

    def toks(text):
        if text not in cache:
            cache[text] = model.tokenize(text)
        return cache[text]

    if not _is_mpu(loss):
        return [Example(toks(d.text), label=d.label) for d in docs]
    out = []
    for d in docs:
        for k, (text, role) in enumerate(multiscale_views(d, loss, seed, positive_label)):
            label = d.label if k == 0 else None
            out.append(Example(toks(text), label=label, role=role, prior=mpu_prior(text, loss)))
    return out


def batch_loss(model: EncoderModel, batch: Sequence[Example], loss: Loss) -> torch.Tensor:
    ids, mask = model.collate([e.tokens for e in batch])
    logits = model(ids, mask)
    if not _is_mpu(loss):
        return _supervised_loss(logits, [e.label for e in batch])
    # Supervised term on the original documents plus the PU risk over every view.
    priors = torch.tensor([e.prior for e in batch], dtype=logits.dtype)
    total = loss.pu_weight * mpu_batch_loss(binary_score(logits), [e.role for e in batch], priors)
    labeled = [i for i, e in enumerate(batch) if e.label is not None]
    if loss.supervised_weight and labeled:
        total = total + loss.supervised_weight * _supervised_loss(logits[labeled], [batch[i].label for i in labeled])
    return total


def _supervised_loss(logits: torch.Tensor, labels: Sequence[int]) -> torch.Tensor:
    target = torch.tensor(labels, dtype=torch.long)
    if logits.shape[1] == 1:
        return F.binary_cross_entropy_with_logits(logits[:, 0], target.to(logits.dtype))
    return F.cross_entropy(logits, target)


def accuracy(model: EncoderModel, docs: Sequence) -> float:
    if not docs:
        raise ValueError("accuracy of an empty document list")
    pred = predicted_labels(predict(model, docs).values)
    gold = np.array([d.label for d in docs])
    return float((pred == gold).mean())


def fine_tune(model: EncoderModel, train: Sequence, dev: Sequence, tc: TrainConfig, loss: Loss = None,
              positive_label: int = 1):
    """Train a copy of ``model``; return the best-dev-epoch weights and the dev accuracy history.

    Ties in dev accuracy keep the earlier epoch.
    """
    if not train:
        raise ValueError("empty training set")
    if not dev:
        raise ValueError("empty dev set")
    if any(d.label is None for d in list(train) + list(dev)):
        raise ValueError("every train/dev document needs a label")
    if _is_mpu(loss) and model.num_classes > 2:
        raise ConfigError("the PU objective needs a binary (1- or 2-logit) model")

    model = copy.deepcopy(model)
    # Dropout-bearing backends draw from the global generator; seed it without leaking state.
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(tc.seed)
        return _train(model, train, dev, tc, loss, positive_label)


def _train(model, train, dev, tc, loss, positive_label):
    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(params, lr=tc.learning_rate)
    gen = torch.Generator().manual_seed(tc.seed)
    token_cache: dict = {}

    history, train_losses = [], []
    best_acc, best_epoch, best_state = -1.0, 0, None
    for epoch in range(1, tc.epochs + 1):
        model.train()
        examples = make_examples(model, train, loss, seed=(tc.seed, epoch), positive_label=positive_label,
                                 _token_cache=token_cache)
        order = torch.randperm(len(examples), generator=gen).tolist()
        total = 0.0
        for b, start in enumerate(range(0, len(order), tc.batch_size), start=1):
            batch = [examples[i] for i in order[start:start + tc.batch_size]]
            value = batch_loss(model, batch, loss)
            if not torch.isfinite(value):
                raise TrainingError(f"non-finite loss {value.item()} at epoch {epoch}, batch {b}")
            optimizer.zero_grad()
            value.backward()
            optimizer.step()
            total += value.item() * len(batch)
        train_losses.append(total / len(examples))

        acc = accuracy(model, dev)
        history.append(acc)
        logger.info("epoch %d: train loss %.4f, dev accuracy %.4f", epoch, train_losses[-1], acc)
        if acc > best_acc:
            best_acc, best_epoch = acc, epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}

    model.load_state_dict(best_state)
    model.eval()
    model.history = history
    model.train_losses = train_losses
    model.best_epoch = best_epoch
    return model, history


def select_best(history: Sequence[float]) -> int:
    """1-based epoch of the maximum, earliest on ties."""
    best = max(history)
    return next(i for i, v in enumerate(history, start=1) if v == best)
