"""Sequence classifiers behind one interface, plus prediction and checkpoint I/O."""

from __future__ import annotations

import json
import re
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from safetensors import safe_open
from safetensors.torch import load_file, save_file
from torch import nn

MAX_TOKENS = 512
CHECKPOINT_FORMAT = "mgtd-encoder/1"


class HashingTokenizer:
    """Lowercased word/punctuation tokens hashed into ``vocab_size - 1`` buckets; 0 is padding."""

    _TOKEN = re.compile(r"\w+|[^\w\s]")

    def __init__(self, vocab_size: int):
        if vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        self.vocab_size = vocab_size

    def __call__(self, text: str) -> list[int]:
        return [1 + zlib.crc32(t.encode("utf-8")) % (self.vocab_size - 1) for t in self._TOKEN.findall(text.lower())]


class EncoderModel(nn.Module):
    """Text -> token ids -> ``num_classes`` raw scores.

    Subclasses implement ``tokenize``, ``forward(ids, mask)`` and
    ``architecture``. Modules listed in ``head_names`` stay trainable when
    adapters freeze the rest of the network.
    """

    head_names: tuple = ("head",)

    def __init__(self, num_classes: int, max_tokens: int = MAX_TOKENS):
        super().__init__()
        if num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        self.num_classes = num_classes
        self.max_tokens = max_tokens
        self.lora_config = None

    def tokenize(self, text: str) -> list[int]:
        raise NotImplementedError

    def architecture(self) -> dict:
        raise NotImplementedError

    def collate(self, token_lists: Sequence[Sequence[int]]) -> tuple[torch.Tensor, torch.Tensor]:
        """Truncate to ``max_tokens`` and right-pad with zeros."""
        token_lists = [list(t[: self.max_tokens]) for t in token_lists]
        width = max([len(t) for t in token_lists] + [1])
        ids = torch.zeros((len(token_lists), width), dtype=torch.long)
        mask = torch.zeros((len(token_lists), width), dtype=torch.bool)
        for i, toks in enumerate(token_lists):
            if toks:
                ids[i, : len(toks)] = torch.tensor(toks, dtype=torch.long)
                mask[i, : len(toks)] = True
        return ids, mask

    def logits_for(self, texts: Sequence[str]) -> torch.Tensor:
        ids, mask = self.collate([self.tokenize(t) for t in texts])
        return self(ids, mask)


class ReferenceEncoder(EncoderModel):
    """Small trainable encoder: hashed embeddings, masked mean pooling, tanh mixing layers, linear head."""

    def __init__(self, num_classes: int = 2, vocab_size: int = 2048, dim: int = 32, hidden: int = 64,
                 n_mix: int = 2, max_tokens: int = MAX_TOKENS, seed: int = 0):
        super().__init__(num_classes, max_tokens)
        self._arch = dict(num_classes=num_classes, vocab_size=vocab_size, dim=dim, hidden=hidden,
                          n_mix=n_mix, max_tokens=max_tokens, seed=seed)
        self.tokenizer = HashingTokenizer(vocab_size)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.embed = nn.Embedding(vocab_size, dim)
            sizes = [dim] + [hidden] * n_mix
            self.mix = nn.ModuleList(nn.Linear(a, b) for a, b in zip(sizes[:-1], sizes[1:]))
            self.head = nn.Linear(sizes[-1], num_classes)

    def tokenize(self, text: str) -> list[int]:
        return self.tokenizer(text)

    def architecture(self) -> dict:
        return {"kind": "reference", **self._arch}

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        m = mask.unsqueeze(-1).to(self.embed.weight.dtype)
        pooled = (self.embed(ids) * m).sum(1) / m.sum(1).clamp(min=1.0)
        h = pooled
        for layer in self.mix:
            h = torch.tanh(layer(h))
        return self.head(h)


@dataclass
class LogitsMatrix:
    """Raw scores, one row per document."""

    ids: list
    values: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.values.shape[1]

    def labels(self) -> np.ndarray:
        return predicted_labels(self.values)


def binary_score(logits: torch.Tensor) -> torch.Tensor:
    """Single detection score: the raw score itself, or machine-minus-human for two columns."""
    if logits.shape[-1] == 1:
        return logits[..., 0]
    if logits.shape[-1] == 2:
        return logits[..., 1] - logits[..., 0]
    raise ValueError(f"binary score needs 1 or 2 logits, got {logits.shape[-1]}")


def predicted_labels(values) -> np.ndarray:
    values = np.asarray(values)
    if values.shape[1] == 1:
        return (values[:, 0] > 0).astype(np.int64)
    return values.argmax(axis=1)


@torch.no_grad()
def encode(model: EncoderModel, text: str) -> np.ndarray:
    model.eval()
    return model.logits_for([text])[0].detach().cpu().numpy()


@torch.no_grad()
def predict(model: EncoderModel, docs: Sequence, batch_size: int = 64) -> LogitsMatrix:
    model.eval()
    rows = []
    for start in range(0, len(docs), batch_size):
        chunk = docs[start:start + batch_size]
        rows.append(model.logits_for([d.text for d in chunk]).detach().cpu().numpy())
    values = np.concatenate(rows) if rows else np.zeros((0, model.num_classes), dtype=np.float32)
    return LogitsMatrix([d.id for d in docs], values)


def build_encoder(architecture: dict) -> EncoderModel:
    arch = dict(architecture)
    kind = arch.pop("kind")
    if kind == "reference":
        return ReferenceEncoder(**arch)
    if kind == "hf":
        from mgtd.modeling.hf import HFEncoder

        return HFEncoder(**arch)
    raise ValueError(f"unknown encoder kind {kind!r}")


def save_checkpoint(model: EncoderModel, path, **metadata) -> None:
    """Write parameters and a JSON description (architecture, adapters, extra metadata)."""

    meta = {
        "format": CHECKPOINT_FORMAT,
        "architecture": model.architecture(),
        "lora": asdict(model.lora_config) if model.lora_config is not None else None,
        "history": getattr(model, "history", None),
        "best_epoch": getattr(model, "best_epoch", None),
        **metadata,
    }
    tensors = {k: v.detach().cpu().contiguous().clone() for k, v in model.state_dict().items()}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_file(tensors, str(path), metadata={"mgtd": json.dumps(meta, sort_keys=True, default=_jsonable)})


def _jsonable(obj):
    if hasattr(obj, "__dataclass_fields__"):

        return asdict(obj)
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def read_checkpoint_metadata(path) -> dict:

    with safe_open(str(path), framework="pt") as f:
        return json.loads(f.metadata()["mgtd"])


def load_checkpoint(path) -> tuple[EncoderModel, dict]:
    from mgtd.modeling.lora import LoraConfig, lora_inject

    meta = read_checkpoint_metadata(path)
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not an encoder checkpoint")
    model = build_encoder(meta["architecture"])
    if meta.get("lora"):
        cfg = meta["lora"]
        cfg["targets"] = tuple(cfg["targets"])
        model = lora_inject(model, LoraConfig(**cfg))
    model.load_state_dict(load_file(str(path)))
    model.history = meta.get("history")
    model.best_epoch = meta.get("best_epoch")
    return model, meta
