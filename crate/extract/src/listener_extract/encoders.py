"""Frame and text encoders, looked up by model id.

Model ids have the form ``family:dim``. Two deterministic families ship with
the package so stores can be built without downloading weights:

``projection``
    Joint image/text space. Frames are resized to 32x32 RGB and projected
    with a fixed Gaussian matrix; texts are bags of hashed character
    trigrams projected into the same dimension. Rows are L2-normalized.
``contrast``
    Per-frame regressor of facial-expression parameters: the grayscale
    16x16 frame minus its own mean brightness, projected. A flat frame has
    expression norm 0.

Further families (pretrained networks) are added with :func:`register_encoder`.
"""

from __future__ import annotations

import hashlib
from typing import Callable, Protocol, Sequence

import numpy as np
from PIL import Image


class Encoder(Protocol):
    model_id: str
    dim: int

    def encode_frames(self, frames: Sequence[np.ndarray]) -> np.ndarray:
        """``(n, H, W, 3)`` uint8 RGB frames to an ``(n, dim)`` float32 array."""

    def encode_texts(self, texts: Sequence[str]) -> np.ndarray:
        """``(n, dim)`` float32 text embeddings; joint-space models only."""

    def describe(self) -> dict:
        """Version and preprocessing, recorded in the store metadata."""


_FAMILIES: dict[str, Callable[[str, int], Encoder]] = {}


def register_encoder(family: str, factory: Callable[[str, int], Encoder]) -> None:
    _FAMILIES[family] = factory


def get_encoder(model_id: str) -> Encoder:
    family, sep, dim = model_id.partition(":")
    if not sep or not dim.isdigit() or int(dim) < 1:
        raise ValueError(f"model id `{model_id}` is not of the form family:dim")
    if family not in _FAMILIES:
        raise ValueError(f"unknown encoder family `{family}` (known: {', '.join(sorted(_FAMILIES))})")
    return _FAMILIES[family](model_id, int(dim))


def _seeded_matrix(model_id: str, rows: int, cols: int) -> np.ndarray:
    seed = int.from_bytes(hashlib.sha256(model_id.encode()).digest()[:8], "little")
    return np.random.default_rng(seed).standard_normal((rows, cols)) / np.sqrt(rows)


def _resize(frame: np.ndarray, side: int, mode: str) -> np.ndarray:
    img = Image.fromarray(frame).convert(mode).resize((side, side), Image.BILINEAR)
    return np.asarray(img, dtype=np.float64) / 255.0


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return np.where(norms > 0, x / np.where(norms > 0, norms, 1.0), 0.0)


class ProjectionEncoder:
    SIDE = 32
    TRIGRAM_BUCKETS = 4096

    def __init__(self, model_id: str, dim: int):
        self.model_id = model_id
        self.dim = dim
        # the trailing row is a bias so flat black frames still embed
        self._pixels = _seeded_matrix(model_id + "/image", self.SIDE * self.SIDE * 3 + 1, dim)
        self._trigrams = _seeded_matrix(model_id + "/text", self.TRIGRAM_BUCKETS, dim)

    def encode_frames(self, frames: Sequence[np.ndarray]) -> np.ndarray:
        if len(frames) == 0:
            return np.zeros((0, self.dim), dtype=np.float32)
        flat = np.stack([_resize(f, self.SIDE, "RGB").ravel() for f in frames])
        flat = np.hstack([flat, np.ones((len(frames), 1))])
        return _normalize_rows(flat @ self._pixels).astype(np.float32)

    def encode_texts(self, texts: Sequence[str]) -> np.ndarray:
        counts = np.zeros((len(texts), self.TRIGRAM_BUCKETS))
        for i, text in enumerate(texts):
            padded = f"  {text.lower()} "
            for j in range(len(padded) - 2):
                h = hashlib.sha256(padded[j : j + 3].encode()).digest()
                counts[i, int.from_bytes(h[:4], "little") % self.TRIGRAM_BUCKETS] += 1
        return _normalize_rows(counts @ self._trigrams).astype(np.float32)

    def describe(self) -> dict:
        return {
            "model_id": self.model_id,
            "version": 1,
            "preprocessing": f"RGB, bilinear resize to {self.SIDE}x{self.SIDE}, scaled to [0, 1]",
        }


class ContrastEncoder:
    SIDE = 16

    def __init__(self, model_id: str, dim: int):
        self.model_id = model_id
        self.dim = dim
        self._proj = _seeded_matrix(model_id, self.SIDE * self.SIDE, dim)

    def encode_frames(self, frames: Sequence[np.ndarray]) -> np.ndarray:
        if len(frames) == 0:
            return np.zeros((0, self.dim), dtype=np.float32)
        gray = np.stack([_resize(f, self.SIDE, "L").ravel() for f in frames])
        gray -= gray.mean(axis=1, keepdims=True)
        return (gray @ self._proj).astype(np.float32)

    def encode_texts(self, texts: Sequence[str]) -> np.ndarray:
        raise ValueError(f"{self.model_id} does not embed text")

    def describe(self) -> dict:
        return {
            "model_id": self.model_id,
            "version": 1,
            "preprocessing": f"full frame, grayscale, bilinear resize to {self.SIDE}x{self.SIDE}, mean removed",
        }


register_encoder("projection", ProjectionEncoder)
register_encoder("contrast", ContrastEncoder)
