from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .job import ExtractionError, ExtractionJob
from .pipeline import extract_clip


def _face_models(spec: str) -> dict[str, str]:
    """``name=family:dim`` pairs separated by commas; a bare model id uses its family as the name."""
    out: dict[str, str] = {}
    for item in filter(None, (s.strip() for s in spec.split(","))):
        name, sep, model = item.partition("=")
        if not sep:
            name, model = item.partition(":")[0], item
        out[name] = model
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="extract", description="Encode one clip into an embedding store.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--video", type=Path)
    src.add_argument("--frames-dir", type=Path, help="directory of pre-extracted frames (sorted by name)")
    p.add_argument("--start", type=int, default=0, help="first frame of the clip")
    p.add_argument("--frames", type=int, required=True, help="number of frames in the clip")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--clip-id", required=True)
    p.add_argument("--video-id")
    p.add_argument("--transcript", required=True)
    p.add_argument("--split", choices=["train", "test"], default="train")
    p.add_argument("--fps", type=float, default=25.0)
    p.add_argument("--image-model", default="projection:512")
    p.add_argument("--expr-model", default="contrast:64")
    p.add_argument("--face-models", default="", type=_face_models)
    p.add_argument("--attribute-texts", type=Path, help="file of texts to embed into the text cache, one per line")
    p.add_argument("--device", default="cpu")
    return p


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    texts = []
    if args.attribute_texts:
        texts = [t for t in args.attribute_texts.read_text().splitlines() if t.strip()]
    job = ExtractionJob(
        manifest=args.manifest,
        clip_id=args.clip_id,
        transcript=args.transcript,
        n_frames=args.frames,
        image_model=args.image_model,
        expr_model=args.expr_model,
        video=args.video,
        start_frame=args.start,
        frames_dir=args.frames_dir,
        face_models=args.face_models,
        video_id=args.video_id,
        split=args.split,
        fps=args.fps,
        attribute_texts=texts,
        device=args.device,
    )
    try:
        result = extract_clip(job)
    except ExtractionError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    logging.info("wrote %s (%d undecodable frames)", job.clip_id, result.undecodable_frames)
    return 0


if __name__ == "__main__":
    sys.exit(main())
