import os
import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

REPO = Path(__file__).resolve().parents[2]


@pytest.fixture(scope="session")
def listen():
    """Path to the engine's `listen` binary, built on demand."""
    explicit = os.environ.get("LISTEN_BIN")
    if explicit:
        return Path(explicit)
    if shutil.which("cargo") is None:
        pytest.skip("cargo is not available to build the engine")
    subprocess.run(["cargo", "build", "-q", "-p", "listener-cli"], cwd=REPO, check=True)
    target = Path(os.environ.get("CARGO_TARGET_DIR", REPO / "target"))
    return target / "debug" / "listen"


def run_listen(binary, *args, cwd):
    proc = subprocess.run([str(binary), "-q", *map(str, args)], cwd=cwd, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return proc


def write_frames(directory: Path, frames) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        Image.fromarray(frame).save(directory / f"{i:05d}.png")
    return directory


def solid(color, side=24):
    return np.full((side, side, 3), color, dtype=np.uint8)


def noisy_frames(n, seed, side=24):
    rng = np.random.default_rng(seed)
    return [rng.integers(0, 256, (side, side, 3), dtype=np.uint8) for _ in range(n)]
