"""Build embedding stores from raw clips.

Frames are decoded from a video or a directory of images, passed through an
image encoder, an expression regressor and one encoder per face space, and
written in the store layout the retrieval engine loads.
"""

from .encoders import Encoder, get_encoder, register_encoder
from .job import ExtractionError, ExtractionJob, JobLog
from .pipeline import extract_clip
from .store import embed_texts, read_text_cache, text_key

__all__ = [
    "Encoder",
    "ExtractionError",
    "ExtractionJob",
    "JobLog",
    "embed_texts",
    "extract_clip",
    "get_encoder",
    "read_text_cache",
    "register_encoder",
    "text_key",
]
