"""Multiscale positive-unlabeled training objective.

Machine-generated text is the positive class. The class prior of each
positive example grows with its sentence count and saturates at
``prior_max``; short sentence-prefix views of machine text join the
unlabeled pool because short fragments are ambiguous.

Training minimises ``supervised_weight * CE(original documents) +
pu_weight * nnPU risk(all views)``; ``supervised_weight=0`` leaves the pure
PU estimator.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn.functional as F

from mgtd.errors import ConfigError
from mgtd.stats import sentence_count
from mgtd.text import split_sentences

POSITIVE = "positive"
UNLABELED = "unlabeled"


@dataclass(frozen=True)
class MpuConfig:
    prior_max: float = 0.5
    length_scale: float = 10.0
    keep_prob: float = 0.5
    views: int = 2
    pu_weight: float = 0.4
    supervised_weight: float = 1.0

    def __post_init__(self):
        if not 0 < self.prior_max <= 1:
            raise ConfigError("prior_max must lie in (0, 1]")
        if self.length_scale <= 0:
            raise ConfigError("length_scale must be > 0")
        if not 0 <= self.keep_prob <= 1:
            raise ConfigError("keep_prob must lie in [0, 1]")
        if self.views < 0:
            raise ConfigError("views must be >= 0")
        if self.pu_weight < 0 or self.supervised_weight < 0 or self.pu_weight + self.supervised_weight == 0:
            raise ConfigError("loss weights must be >= 0 and not both zero")


def mpu_prior(doc, config: MpuConfig) -> float:
    """``prior_max * min(1, sentences / length_scale)``, counting at least one sentence."""
    text = doc if isinstance(doc, str) else doc.text
    n = max(1, sentence_count(text))
    return config.prior_max * min(1.0, n / config.length_scale)


def multiscale_views(doc, config: MpuConfig, seed, positive_label: int = 1) -> list[tuple[str, str]]:
    """The document under its own role plus up to ``views`` shorter sentence prefixes.

    A prefix always keeps the first sentence and extends one sentence at a
    time with probability ``keep_prob``. Prefixes as long as the document are
    discarded.
    """
    role = POSITIVE if doc.label == positive_label else UNLABELED
    out = [(doc.text, role)]
    sentences = split_sentences(doc.text)
    if config.views == 0 or len(sentences) <= 1:
        return out
    rng = random.Random(f"{seed}:{doc.id}")
    for _ in range(config.views):
        n = 1
        while n < len(sentences) and rng.random() < config.keep_prob:
            n += 1
        if n < len(sentences):
            out.append((" ".join(sentences[:n]), UNLABELED))
    return out


def positive_loss(score: torch.Tensor) -> torch.Tensor:
    """Logistic loss of a score toward the positive class."""
    return F.softplus(-score)


def negative_loss(score: torch.Tensor) -> torch.Tensor:
    return F.softplus(score)


def nn_pu_risk(pos_loss_pos, pos_loss_neg, unl_loss_neg, priors, clamp: bool = True) -> torch.Tensor:
    """``mean_P[pi * l+] + max(0, mean_U[l-] - mean_P[pi * l-])``; empty groups contribute zero."""
    if pos_loss_pos.numel() == 0 and unl_loss_neg.numel() == 0:
        raise ValueError("PU risk needs at least one positive or unlabeled example")
    zero = unl_loss_neg.new_zeros(()) if unl_loss_neg.numel() else pos_loss_pos.new_zeros(())
    if pos_loss_pos.numel():
        positive_risk = (priors * pos_loss_pos).mean()
        positive_as_negative = (priors * pos_loss_neg).mean()
    else:
        positive_risk = positive_as_negative = zero
    unlabeled_risk = unl_loss_neg.mean() if unl_loss_neg.numel() else zero
    negative_risk = unlabeled_risk - positive_as_negative
    if clamp:
        negative_risk = torch.clamp(negative_risk, min=0.0)
    return positive_risk + negative_risk


def mpu_loss(positive: Sequence[tuple[float, float]], unlabeled: Sequence[float], priors: Sequence[float],
             clamp: bool = True) -> float:
    """Scalar form of ``nn_pu_risk`` over precomputed per-example losses.

    ``positive`` holds ``(loss toward positive, loss toward negative)`` pairs,
    ``priors`` one prior per positive example.
    """
    if len(priors) != len(positive):
        raise ValueError("need one prior per positive example")
    pos = torch.tensor(list(positive), dtype=torch.float64).reshape(-1, 2)
    risk = nn_pu_risk(
        pos[:, 0],
        pos[:, 1],
        torch.tensor(list(unlabeled), dtype=torch.float64),
        torch.tensor(list(priors), dtype=torch.float64),
        clamp=clamp,
    )
    return float(risk)


def mpu_batch_loss(scores: torch.Tensor, roles: Sequence[str], priors: torch.Tensor, clamp: bool = True) -> torch.Tensor:
    is_pos = torch.tensor([r == POSITIVE for r in roles], dtype=torch.bool)
    pos_scores = scores[is_pos]
    unl_scores = scores[~is_pos]
    return nn_pu_risk(
        positive_loss(pos_scores),
        negative_loss(pos_scores),
        negative_loss(unl_scores),
        priors[is_pos].to(scores.dtype),
        clamp=clamp,
    )
