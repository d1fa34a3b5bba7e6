"""Classifiers, adapters, the PU objective and one-vs-rest attribution."""

from mgtd.modeling.encoder import (
    EncoderModel,
    HashingTokenizer,
    LogitsMatrix,
    ReferenceEncoder,
    encode,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from mgtd.modeling.lora import LoraConfig, ModelDims, lora_inject, lora_param_count, model_dims
from mgtd.modeling.mpu import MpuConfig, mpu_loss, mpu_prior, multiscale_views
from mgtd.modeling.ovr import OvRModel, ovr_predict, ovr_train
from mgtd.modeling.training import TrainConfig, accuracy, fine_tune

__all__ = [
    "EncoderModel", "HashingTokenizer", "LogitsMatrix", "ReferenceEncoder", "encode", "load_checkpoint",
    "predict", "save_checkpoint", "LoraConfig", "ModelDims", "lora_inject", "lora_param_count", "model_dims",
    "MpuConfig", "mpu_loss", "mpu_prior", "multiscale_views", "OvRModel", "ovr_predict", "ovr_train",
    "TrainConfig", "accuracy", "fine_tune",
]
