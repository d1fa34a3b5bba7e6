"""Low-rank adapters on frozen linear layers."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn

from mgtd.errors import ConfigError


@dataclass(frozen=True)
class LoraConfig:
    rank: int = 4
    alpha: float = 8.0
    targets: tuple = ("mix.0", "mix.1")
    init_std: float = 0.01
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.rank < 1:
            raise ConfigError("LoRA rank must be >= 1")

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank


class LoRALinear(nn.Module):
    """``base(x) + (alpha / r) * x A^T B^T`` with ``B`` zero-initialised."""

    def __init__(self, base: nn.Linear, rank: int, scaling: float, init_std: float, generator: torch.Generator):
        super().__init__()
        self.base = base
        self.scaling = scaling
        dtype = base.weight.dtype
        a = torch.randn((rank, base.in_features), generator=generator, dtype=torch.float64) * init_std
        self.lora_A = nn.Parameter(a.to(dtype))
        self.lora_B = nn.Parameter(torch.zeros((base.out_features, rank), dtype=dtype))

    @property
    def in_features(self):
        return self.base.in_features

    @property
    def out_features(self):
        return self.base.out_features

    def forward(self, x):
        return self.base(x) + (x @ self.lora_A.t() @ self.lora_B.t()) * self.scaling


def _check_rank(name: str, layer: nn.Linear, rank: int):
    limit = min(layer.in_features, layer.out_features)
    if rank >= limit:
        raise ConfigError(f"LoRA rank {rank} must be < min(d_in, d_out) = {limit} for {name!r}")


def _resolve_linear(model: nn.Module, name: str) -> nn.Linear:
    try:
        module = model.get_submodule(name)
    except AttributeError:
        raise ConfigError(f"LoRA target {name!r} not found in model") from None
    if not isinstance(module, nn.Linear):
        raise ConfigError(f"LoRA target {name!r} is a {type(module).__name__}, not a linear layer")
    return module


def lora_inject(model, config: LoraConfig):
    """Return a copy of ``model`` with adapters on every target and everything but adapters and head frozen."""
    if model.lora_config is not None:
        raise ConfigError("model already carries LoRA adapters")
    for name in config.targets:
        _check_rank(name, _resolve_linear(model, name), config.rank)

    model = copy.deepcopy(model)
    gen = torch.Generator().manual_seed(config.seed)
    for name in config.targets:
        layer = _resolve_linear(model, name)
        parent_name, _, child = name.rpartition(".")
        parent = model.get_submodule(parent_name) if parent_name else model
        setattr(parent, child, LoRALinear(layer, config.rank, config.scaling, config.init_std, gen))

    for p in model.parameters():
        p.requires_grad_(False)
    for module in model.modules():
        if isinstance(module, LoRALinear):
            module.lora_A.requires_grad_(True)
            module.lora_B.requires_grad_(True)
    for head in model.head_names:
        try:
            for p in model.get_submodule(head).parameters():
                p.requires_grad_(True)
        except AttributeError:
            continue
    model.lora_config = config
    return model


@dataclass(frozen=True)
class ModelDims:
    targets: dict  # name -> (d_out, d_in)
    head_params: int = 0
    base_params: Optional[int] = None


def model_dims(model, targets=()) -> ModelDims:
    """Shapes needed for ``lora_param_count``, read from an un-adapted model."""
    shapes = {}
    for name in targets:
        layer = _resolve_linear(model, name)
        shapes[name] = (layer.out_features, layer.in_features)
    head = 0
    for name in model.head_names:
        try:
            head += sum(p.numel() for p in model.get_submodule(name).parameters())
        except AttributeError:
            continue
    return ModelDims(shapes, head, sum(p.numel() for p in model.parameters()))


def lora_param_count(dims: ModelDims, config: LoraConfig) -> tuple[int, int, float]:
    """(trainable, total, trainable/total) after injecting ``config`` into a model of shape ``dims``."""
    adapter = 0
    for name in config.targets:
        if name not in dims.targets:
            raise ConfigError(f"LoRA target {name!r} not in model dims")
        d_out, d_in = dims.targets[name]
        adapter += config.rank * (d_in + d_out)
    trainable = adapter + dims.head_params
    base = dims.base_params
    if base is None:
        base = sum(d_out * d_in for d_out, d_in in dims.targets.values()) + dims.head_params
    total = base + adapter
    return trainable, total, (trainable / total if total else 0.0)
