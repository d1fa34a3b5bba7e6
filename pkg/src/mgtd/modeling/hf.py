"""Adapter exposing a Hugging Face sequence classifier as an ``EncoderModel``."""

from __future__ import annotations

from mgtd.modeling.encoder import MAX_TOKENS, EncoderModel


class HFEncoder(EncoderModel):
    """Wraps ``AutoModelForSequenceClassification`` loaded from a hub id or local directory."""

    head_names = ("model.classifier", "model.score")

    def __init__(self, name_or_path: str, num_classes: int = 2, max_tokens: int = MAX_TOKENS):
        from transformers import AutoModelForSequenceClassification, AutoTokenizer

        super().__init__(num_classes, max_tokens)
        self.name_or_path = name_or_path
        self.tokenizer = AutoTokenizer.from_pretrained(name_or_path)
        self.model = AutoModelForSequenceClassification.from_pretrained(name_or_path, num_labels=num_classes)

    def tokenize(self, text: str) -> list[int]:
        return self.tokenizer(text, truncation=True, max_length=self.max_tokens)["input_ids"]

    def architecture(self) -> dict:
        return {"kind": "hf", "name_or_path": self.name_or_path, "num_classes": self.num_classes,
                "max_tokens": self.max_tokens}

    def forward(self, ids, mask):
        return self.model(input_ids=ids, attention_mask=mask.long()).logits
