"""Reading and writing the store layout: a JSON manifest next to headerless
little-endian float32 arrays, plus the append-only text-embedding cache."""

from __future__ import annotations

import contextlib
import fcntl
import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

MANIFEST_VERSION = 1
CACHE_MAGIC = b"LRTC"
CACHE_VERSION = 1
DEFAULT_TEXT_CACHE = "text_cache.bin"


@contextlib.contextmanager
def locked(path: Path) -> Iterator[None]:
    """Exclusive advisory lock on ``<path>.lock`` for concurrent jobs."""
    lock = Path(str(path) + ".lock")
    lock.parent.mkdir(parents=True, exist_ok=True)
    with open(lock, "a") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def write_atomic(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_f32(path: Path, values: np.ndarray) -> None:
    write_atomic(path, np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_f32(path: Path) -> np.ndarray:
    return np.frombuffer(Path(path).read_bytes(), dtype="<f4")


def load_manifest(path: Path) -> dict:
    return json.loads(Path(path).read_text())


def upsert_clip(manifest_path: Path, record: dict, image_dim: int, face_spaces: list[dict], metadata: dict) -> dict:
    """Add or replace ``record`` in the manifest, creating it if needed.

    Raises ``ValueError`` when the existing manifest disagrees on image_dim,
    face spaces or encoder models.
    """
    with locked(manifest_path):
        if manifest_path.exists():
            manifest = load_manifest(manifest_path)
        else:
            manifest = {
                "version": MANIFEST_VERSION,
                "image_dim": image_dim,
                "face_spaces": face_spaces,
                "clips": [],
                "text_cache": DEFAULT_TEXT_CACHE,
                "metadata": {"extract": metadata},
            }
        if manifest["image_dim"] != image_dim:
            raise ValueError(f"image model gives dim {image_dim}, manifest says {manifest['image_dim']}")
        known = {s["name"]: s["dim"] for s in manifest.get("face_spaces", [])}
        for space in face_spaces:
            if space["name"] not in known:
                raise ValueError(f"face space `{space['name']}` is not declared in the manifest")
            if known[space["name"]] != space["dim"]:
                raise ValueError(
                    f"face space `{space['name']}` has dim {space['dim']}, manifest says {known[space['name']]}"
                )
        if set(known) != {s["name"] for s in face_spaces}:
            raise ValueError(f"job covers face spaces {sorted(s['name'] for s in face_spaces)}, manifest has {sorted(known)}")
        previous = manifest.setdefault("metadata", {}).setdefault("extract", metadata)
        if previous != metadata:
            raise ValueError("encoder models or preprocessing differ from the ones already in this store")
        manifest["clips"] = [c for c in manifest["clips"] if c["clip_id"] != record["clip_id"]] + [record]
        write_atomic(manifest_path, (json.dumps(manifest, indent=2) + "\n").encode())
        return manifest


def text_key(text: str) -> bytes:
    return hashlib.sha256(text.encode("utf-8")).digest()


def read_text_cache(path: Path) -> dict[bytes, np.ndarray]:
    """All entries of a cache file; on duplicate keys the first one wins."""
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != CACHE_MAGIC:
        raise ValueError(f"{path}: not a text cache")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != CACHE_VERSION:
        raise ValueError(f"{path}: unsupported cache version {version}")
    entries: dict[bytes, np.ndarray] = {}
    pos = 8
    while pos < len(data):
        if pos + 36 > len(data):
            raise ValueError(f"{path}: truncated record at byte {pos}")
        key = data[pos : pos + 32]
        (dim,) = struct.unpack_from("<I", data, pos + 32)
        end = pos + 36 + 4 * dim
        if end > len(data):
            raise ValueError(f"{path}: truncated record at byte {pos}")
        entries.setdefault(key, np.frombuffer(data[pos + 36 : end], dtype="<f4"))
        pos = end
    return entries


def append_text_cache(path: Path, texts: Sequence[str], vectors: np.ndarray) -> int:
    """Append entries for texts not yet cached; returns how many were added."""
    with locked(path):
        if not path.exists():
            write_atomic(path, CACHE_MAGIC + struct.pack("<I", CACHE_VERSION))
        existing = read_text_cache(path)
        records = bytearray()
        added = 0
        for text, vec in zip(texts, vectors):
            key = text_key(text)
            if key in existing:
                continue
            existing[key] = vec
            vec = np.ascontiguousarray(vec, dtype="<f4")
            records += key + struct.pack("<I", vec.size) + vec.tobytes()
            added += 1
        if records:
            with open(path, "ab") as fh:
                fh.write(records)
        return added


def embed_texts(texts: Sequence[str], model_id: str, cache_path: Path) -> int:
    """Embed ``texts`` with a joint-space model and add them to the cache at
    ``cache_path``. An empty list still leaves a valid, empty cache file."""
    from .encoders import get_encoder

    unique = list(dict.fromkeys(texts))
    if not unique:
        append_text_cache(Path(cache_path), [], np.zeros((0, 0), dtype=np.float32))
        return 0
    encoder = get_encoder(model_id)
    return append_text_cache(Path(cache_path), unique, encoder.encode_texts(unique))
