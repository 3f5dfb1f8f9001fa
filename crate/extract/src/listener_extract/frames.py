"""Frame decoding. Frames that fail to decode come back as ``None``."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".npy"}


def read_frame_dir(directory: Path, start: int, n: int) -> list[Optional[np.ndarray]]:
    files = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    out: list[Optional[np.ndarray]] = []
    for i in range(start, start + n):
        out.append(_load_image(files[i]) if i < len(files) else None)
    return out


def _load_image(path: Path) -> Optional[np.ndarray]:
    try:
        if path.suffix.lower() == ".npy":
            arr = np.load(path)
        else:
            with Image.open(path) as img:
                arr = np.asarray(img.convert("RGB"))
    except (OSError, ValueError, UnidentifiedImageError):
        return None
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        return None
    return arr


def read_video(path: Path, start: int, n: int) -> list[Optional[np.ndarray]]:
    import cv2

    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        return [None] * n
    try:
        cap.set(cv2.CAP_PROP_POS_FRAMES, start)
        out: list[Optional[np.ndarray]] = []
        for _ in range(n):
            ok, frame = cap.read()
            out.append(cv2.cvtColor(frame, cv2.COLOR_BGR2RGB) if ok else None)
        return out
    finally:
        cap.release()
