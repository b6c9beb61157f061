"""Pluggable text, image, and face encoders.

The hashing encoders are dependency-free and fully deterministic, which makes
exports reproducible byte-for-byte; the pretrained encoders (BERT, ResNet50)
are available by name when their weights are installed. Every encoder reports
a name and version that the manifest records.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

_TOKEN_RE = re.compile(r"[^\W_]+(?:'[^\W_]+)*")


class EncoderError(RuntimeError):
    """Raised when one item cannot be encoded (caller may skip it)."""


class HashingTextEncoder:
    """Averaged token embeddings where each token's vector is derived from a
    cryptographic hash of the token, so identical texts encode identically."""

    name = "hashing-text"
    version = "1"

    def __init__(self, dim: int = 64):
        self.dim = dim
        self._cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        cached = self._cache.get(token)
        if cached is None:
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            seed = int.from_bytes(digest[:8], "little")
            vec = np.random.default_rng(seed).standard_normal(self.dim)
            cached = vec / np.linalg.norm(vec)
            self._cache[token] = cached
        return cached

    def encode(self, text: str) -> np.ndarray:
        tokens = [t.casefold() for t in _TOKEN_RE.findall(text)]
        if not tokens:
            raise EncoderError("text has no tokens to embed")
        return np.mean([self._token_vector(t) for t in tokens], axis=0)


class BertTextEncoder:
    """Averaged final-layer token embeddings from a pretrained BERT model."""

    name = "bert-base-uncased"
    version = "transformers"

    def __init__(self, model_name: str = "bert-base-uncased"):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as err:
            raise EncoderError(f"transformers/torch not installed: {err}") from err
        self._torch = torch
        self.name = model_name
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_name)
            self.model = AutoModel.from_pretrained(model_name)
        except Exception as err:
            raise EncoderError(f"cannot load pretrained weights for {model_name}: {err}") from err
        self.model.eval()
        import transformers

        self.version = transformers.__version__

    def encode(self, text: str) -> np.ndarray:
        if not text.strip():
            raise EncoderError("empty text")
        with self._torch.no_grad():
            batch = self.tokenizer(text, return_tensors="pt", truncation=True)
            hidden = self.model(**batch).last_hidden_state[0]
        return hidden.mean(dim=0).numpy().astype(np.float64)


class HashingImageEncoder:
    """Downsampled grayscale pixel features plus a brightness channel;
    deterministic, no model weights. The brightness channel is offset so no
    image (not even a uniform black one) encodes to the zero vector."""

    name = "hashing-image"
    version = "2"

    def __init__(self, side: int = 8):
        self.side = side
        self.dim = side * side + 1

    def encode(self, image) -> np.ndarray:
        from PIL import Image

        if not isinstance(image, Image.Image):
            raise EncoderError(f"expected a PIL image, got {type(image).__name__}")
        gray = image.convert("L").resize((self.side, self.side), Image.BILINEAR)
        pixels = np.asarray(gray, dtype=np.float64).reshape(-1) / 255.0
        mean = pixels.mean()
        return np.concatenate([pixels - mean, [mean + 0.5]])


class Resnet50ImageEncoder:
    """Pooled ResNet50 features (the layer before the classification head)."""

    name = "resnet50"
    version = "torchvision"

    def __init__(self):
        try:
            import torch
            from torchvision.models import ResNet50_Weights, resnet50
        except ImportError as err:
            raise EncoderError(f"torchvision not installed: {err}") from err
        self._torch = torch
        try:
            weights = ResNet50_Weights.DEFAULT
            model = resnet50(weights=weights)
        except Exception as err:
            raise EncoderError(f"cannot load ResNet50 weights: {err}") from err
        self.preprocess = weights.transforms()
        model.fc = torch.nn.Identity()
        model.eval()
        self.model = model
        import torchvision

        self.version = torchvision.__version__

    def encode(self, image) -> np.ndarray:
        with self._torch.no_grad():
            batch = self.preprocess(image.convert("RGB")).unsqueeze(0)
            return self.model(batch)[0].numpy().astype(np.float64)


TEXT_ENCODERS = {
    "hashing": HashingTextEncoder,
    "bert": BertTextEncoder,
}

IMAGE_ENCODERS = {
    "hashing": HashingImageEncoder,
    "resnet50": Resnet50ImageEncoder,
}

# face embeddings default to the image encoder applied to the face crop; a
# FaceNet-style encoder plugs in here by name when its weights are available
FACE_ENCODERS = dict(IMAGE_ENCODERS)


def make_encoder(registry: dict, name: str, **kwargs):
    try:
        factory = registry[name]
    except KeyError:
        raise EncoderError(f"unknown encoder {name!r}; choose from {sorted(registry)}") from None
    return factory(**kwargs)
