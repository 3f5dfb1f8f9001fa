from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional


class ExtractionError(RuntimeError):
    """A job that cannot produce a valid store fragment."""


@dataclass
class ExtractionJob:
    manifest: Path
    clip_id: str
    transcript: str
    n_frames: int
    image_model: str
    expr_model: str
    video: Optional[Path] = None
    start_frame: int = 0
    frames_dir: Optional[Path] = None
    face_models: dict[str, str] = field(default_factory=dict)
    video_id: Optional[str] = None
    split: str = "train"
    fps: float = 25.0
    # Texts whose embeddings should land in the store's text cache.
    attribute_texts: list[str] = field(default_factory=list)
    # Number of expression peaks averaged into each face vector.
    face_keyframes: int = 4
    device: str = "cpu"

    def validate(self) -> None:
        if (self.video is None) == (self.frames_dir is None):
            raise ExtractionError("give exactly one of a video or a frame directory")
        if self.n_frames < 1:
            raise ExtractionError(f"n_frames must be positive, got {self.n_frames}")
        if self.start_frame < 0:
            raise ExtractionError(f"start_frame must be non-negative, got {self.start_frame}")
        if self.split not in ("train", "test"):
            raise ExtractionError(f"unknown split `{self.split}`")
        if not self.transcript.strip():
            raise ExtractionError(f"clip {self.clip_id} has an empty transcript")
        if not self.clip_id or "/" in self.clip_id:
            raise ExtractionError(f"invalid clip id `{self.clip_id}`")
        if self.face_keyframes < 1:
            raise ExtractionError("face_keyframes must be at least 1")


@dataclass
class JobLog:
    clip_id: str
    n_frames: int
    undecodable_frames: int
    models: dict[str, dict]
    face_frames: list[int]
    device: str

    def to_json(self) -> dict:
        return asdict(self)
