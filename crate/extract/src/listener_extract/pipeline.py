from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.signal import find_peaks

from . import frames as framesio
from .encoders import get_encoder
from .job import ExtractionError, ExtractionJob, JobLog
from .store import DEFAULT_TEXT_CACHE, append_text_cache, load_manifest, upsert_clip, write_atomic, write_f32

log = logging.getLogger(__name__)

EXPRESSION_NOTE = "expression regressor sees the full frame (no face crop)"


def face_frames(track: np.ndarray, decoded: np.ndarray, k: int) -> list[int]:
    """Frames averaged into each face vector: the ``k`` highest expression
    peaks among decoded frames (ties to the lower index), or evenly spaced
    decoded frames when the track has no peak."""
    peaks, _ = find_peaks(track)
    peaks = [int(p) for p in peaks if decoded[p]]
    if peaks:
        top = sorted(peaks, key=lambda p: (-track[p], p))[:k]
        return sorted(top)
    candidates = np.flatnonzero(decoded)
    n = len(candidates)
    picked = sorted({(2 * j + 1) * n // (2 * k) for j in range(k)})
    return [int(candidates[i]) for i in picked]


def _decode(job: ExtractionJob) -> list[Optional[np.ndarray]]:
    if job.video is not None:
        return framesio.read_video(Path(job.video), job.start_frame, job.n_frames)
    return framesio.read_frame_dir(Path(job.frames_dir), job.start_frame, job.n_frames)


def extract_clip(job: ExtractionJob) -> JobLog:
    """Encode one clip and add it to the store at ``job.manifest``.

    Writes the image-embedding, expression-track and face arrays, updates the
    manifest, appends ``job.attribute_texts`` to the text cache and leaves a
    JSON job log next to the arrays.
    """
    job.validate()
    try:
        image_enc = get_encoder(job.image_model)
        expr_enc = get_encoder(job.expr_model)
        face_encs = {name: get_encoder(model) for name, model in sorted(job.face_models.items())}
    except ValueError as e:
        raise ExtractionError(f"model load failed: {e}") from e

    manifest_path = Path(job.manifest)
    if manifest_path.exists():
        dim = load_manifest(manifest_path)["image_dim"]
        if dim != image_enc.dim:
            raise ExtractionError(f"{job.image_model} gives dim {image_enc.dim}, manifest says {dim}")

    raw = _decode(job)
    decoded = np.array([f is not None for f in raw])
    if not decoded.any():
        raise ExtractionError(f"clip {job.clip_id}: no frame could be decoded")
    bad = int((~decoded).sum())
    if bad:
        log.warning("clip %s: %d of %d frames could not be decoded", job.clip_id, bad, job.n_frames)
    good = [f for f in raw if f is not None]

    def per_frame(encoder) -> np.ndarray:
        out = np.zeros((job.n_frames, encoder.dim), dtype=np.float32)
        out[decoded] = encoder.encode_frames(good)
        return out

    image = per_frame(image_enc)
    track = np.linalg.norm(per_frame(expr_enc).astype(np.float64), axis=1).astype(np.float32)
    chosen = face_frames(track, decoded, job.face_keyframes)
    faces = {name: per_frame(enc)[chosen].astype(np.float64).mean(axis=0).astype(np.float32) for name, enc in face_encs.items()}

    base = manifest_path.parent
    stem = f"clips/{job.clip_id}"
    files = {
        "image_embeddings": f"{stem}.img.f32",
        "expression_track": f"{stem}.expr.f32",
        "face": {name: f"{stem}.face.{name}.f32" for name in faces},
    }
    write_f32(base / files["image_embeddings"], image)
    write_f32(base / files["expression_track"], track)
    for name, vec in faces.items():
        write_f32(base / files["face"][name], vec)

    metadata = {
        "image_model": image_enc.describe(),
        "expr_model": expr_enc.describe(),
        "face_models": {name: enc.describe() for name, enc in face_encs.items()},
        "expression_preprocessing": EXPRESSION_NOTE,
        "fps": job.fps,
    }
    record = {
        "clip_id": job.clip_id,
        "video_id": job.video_id or job.clip_id,
        "start_frame": job.start_frame,
        "n_frames": job.n_frames,
        "fps": job.fps,
        "transcript": job.transcript,
        "split": job.split,
        "files": files,
    }
    try:
        manifest = upsert_clip(
            manifest_path,
            record,
            image_enc.dim,
            [{"name": name, "dim": enc.dim} for name, enc in face_encs.items()],
            metadata,
        )
    except ValueError as e:
        raise ExtractionError(str(e)) from e

    if job.attribute_texts:
        texts = list(dict.fromkeys(job.attribute_texts))
        cache = base / manifest.get("text_cache", DEFAULT_TEXT_CACHE)
        append_text_cache(cache, texts, image_enc.encode_texts(texts))

    job_log = JobLog(
        clip_id=job.clip_id,
        n_frames=job.n_frames,
        undecodable_frames=bad,
        models={"image": image_enc.describe(), "expression": expr_enc.describe(), **{f"face/{n}": e.describe() for n, e in face_encs.items()}},
        face_frames=chosen,
        device=job.device,
    )
    write_atomic(base / f"{stem}.log.json", (json.dumps(job_log.to_json(), indent=2) + "\n").encode())
    return job_log
