import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import noisy_frames, run_listen, solid, write_frames
from listener_extract import ExtractionError, ExtractionJob, embed_texts, extract_clip, read_text_cache, text_key
from listener_extract.encoders import get_encoder
from listener_extract.pipeline import face_frames
from listener_extract.store import read_f32


def job(tmp_path, frames_dir, clip_id="c0", n=4, **kw):
    return ExtractionJob(
        manifest=tmp_path / "store" / "manifest.json",
        clip_id=clip_id,
        transcript=kw.pop("transcript", "My cat passed away yesterday"),
        n_frames=n,
        image_model=kw.pop("image_model", "projection:16"),
        expr_model="contrast:8",
        frames_dir=frames_dir,
        face_models=kw.pop("face_models", {"face": "projection:4"}),
        **kw,
    )


def test_job_needs_exactly_one_source(tmp_path):
    j = job(tmp_path, tmp_path)
    j.video = tmp_path / "v.mp4"
    with pytest.raises(ExtractionError):
        j.validate()
    j.video = j.frames_dir = None
    with pytest.raises(ExtractionError):
        j.validate()


def test_empty_transcript_rejected(tmp_path):
    with pytest.raises(ExtractionError, match="empty transcript"):
        job(tmp_path, tmp_path, transcript="  ").validate()


def test_solid_color_clip_has_declared_shapes_and_loads(tmp_path, listen):
    frames = write_frames(tmp_path / "f", [solid(c) for c in (0, 80, 160, 240)])
    extract_clip(job(tmp_path, frames))
    store = tmp_path / "store"
    assert read_f32(store / "clips/c0.img.f32").shape == (4 * 16,)
    assert read_f32(store / "clips/c0.expr.f32").shape == (4,)
    assert read_f32(store / "clips/c0.face.face.f32").shape == (4,)
    run_listen(listen, "ingest", "--store", store / "manifest.json", "--out", tmp_path / "ingest.json", cwd=tmp_path)
    report = json.loads((tmp_path / "ingest.json").read_text())
    assert report["load"]["n_clips"] == 1 and report["load"]["zero_rows"] == []


def test_duplicate_frames_give_identical_rows(tmp_path):
    frame = noisy_frames(1, 3)[0]
    extract_clip(job(tmp_path, write_frames(tmp_path / "f", [frame, frame, solid(9)]), n=3))
    rows = read_f32(tmp_path / "store/clips/c0.img.f32").reshape(3, 16)
    assert rows[0].tobytes() == rows[1].tobytes()


def test_no_decodable_frame_aborts(tmp_path):
    frames = tmp_path / "f"
    frames.mkdir()
    for i in range(3):
        (frames / f"{i}.png").write_bytes(b"not a png")
    with pytest.raises(ExtractionError, match="no frame"):
        extract_clip(job(tmp_path, frames, n=3))
    assert not (tmp_path / "store/manifest.json").exists()


def test_undecodable_frame_is_a_zero_row(tmp_path, listen):
    frames = write_frames(tmp_path / "f", noisy_frames(4, 1))
    (frames / "00002.png").write_bytes(b"broken")
    log = extract_clip(job(tmp_path, frames))
    assert log.undecodable_frames == 1
    rows = read_f32(tmp_path / "store/clips/c0.img.f32").reshape(4, 16)
    assert not rows[2].any() and rows[[0, 1, 3]].any(axis=1).all()
    assert 2 not in log.face_frames
    run_listen(listen, "ingest", "--store", tmp_path / "store/manifest.json", "--out", tmp_path / "i.json", cwd=tmp_path)


def test_unknown_model_aborts(tmp_path):
    frames = write_frames(tmp_path / "f", [solid(1)] * 4)
    with pytest.raises(ExtractionError, match="model load failed"):
        extract_clip(job(tmp_path, frames, image_model="nonexistent:16"))


def test_dim_mismatch_with_existing_store(tmp_path):
    frames = write_frames(tmp_path / "f", noisy_frames(4, 2))
    extract_clip(job(tmp_path, frames))
    with pytest.raises(ExtractionError, match="dim 32"):
        extract_clip(job(tmp_path, frames, clip_id="c1", image_model="projection:32"))


def test_extraction_is_deterministic(tmp_path):
    frames = write_frames(tmp_path / "f", noisy_frames(6, 5))
    for name in ("a", "b"):
        j = job(tmp_path, frames, n=6)
        j.manifest = tmp_path / name / "manifest.json"
        extract_clip(j)
    for f in ("c0.img.f32", "c0.expr.f32", "c0.face.face.f32"):
        assert (tmp_path / "a/clips" / f).read_bytes() == (tmp_path / "b/clips" / f).read_bytes()


def test_face_frames_follow_expression_peaks():
    track = np.array([0, 3, 0, 1, 1, 0, 5, 0], dtype=np.float32)
    decoded = np.ones(8, dtype=bool)
    assert face_frames(track, decoded, 2) == [1, 6]
    assert face_frames(track, decoded, 3) == [1, 3, 6]
    flat = np.zeros(8, dtype=np.float32)
    assert face_frames(flat, decoded, 2) == [2, 6]


def test_embed_texts_empty_list_writes_header(tmp_path):
    cache = tmp_path / "cache.bin"
    assert embed_texts([], "projection:8", cache) == 0
    assert cache.read_bytes() == b"LRTC\x01\x00\x00\x00"
    assert read_text_cache(cache) == {}


def test_embed_texts_deduplicates(tmp_path):
    cache = tmp_path / "cache.bin"
    assert embed_texts(["a smile", "a smile", "a frown"], "projection:8", cache) == 2
    assert embed_texts(["a frown", "a nod"], "projection:8", cache) == 1
    entries = read_text_cache(cache)
    assert len(entries) == 3
    expected = get_encoder("projection:8").encode_texts(["a smile"])[0]
    assert entries[text_key("a smile")].tobytes() == expected.astype("<f4").tobytes()


def test_text_cache_is_read_by_the_engine(tmp_path, listen):
    """Texts embedded here satisfy the engine's cache-only text embedder."""
    store = tmp_path / "store"
    for i in range(3):
        extract_clip(job(tmp_path, write_frames(tmp_path / f"f{i}", noisy_frames(4, i)), clip_id=f"c{i}"))
    manifest = store / "manifest.json"

    # learn which texts the engine will ask for
    run_listen(listen, "describe", "--store", manifest, "--backend", "mock", "--text-embedder", "hashing",
               "--replay-cache", tmp_path / "r.jsonl", "--out", tmp_path / "probe.json", cwd=tmp_path)
    probe = json.loads((tmp_path / "probe.json").read_text())
    texts = sorted({a[role]["text"] for a in probe["attributes"].values() for role in ("positive", "negative")})
    (store / "text_cache.bin").unlink(missing_ok=True)

    embed_texts(texts, "projection:16", store / "text_cache.bin")
    before = (store / "text_cache.bin").read_bytes()
    run_listen(listen, "describe", "--store", manifest, "--backend", "mock", "--text-embedder", "cache",
               "--replay-cache", tmp_path / "r.jsonl", "--out", tmp_path / "attrs.json", cwd=tmp_path)
    assert (store / "text_cache.bin").read_bytes() == before


def test_cli_writes_a_clip(tmp_path):
    frames = write_frames(tmp_path / "f", noisy_frames(4, 7))
    texts = tmp_path / "texts.txt"
    texts.write_text("a warm smile\n\na warm smile\n")
    proc = subprocess.run(
        [sys.executable, "-m", "listener_extract", "--frames-dir", str(frames), "--frames", "4",
         "--manifest", str(tmp_path / "s/manifest.json"), "--clip-id", "x", "--transcript", "hello",
         "--image-model", "projection:16", "--face-models", "vgg=projection:4,projection:2",
         "--attribute-texts", str(texts)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    manifest = json.loads((tmp_path / "s/manifest.json").read_text())
    assert {s["name"]: s["dim"] for s in manifest["face_spaces"]} == {"vgg": 4, "projection": 2}
    assert len(read_text_cache(tmp_path / "s/text_cache.bin")) == 1
