from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from cloneforge.corpus import Corpus, load_cifar10_bin


def synth_image(rng: np.random.Generator) -> np.ndarray:
    """One structured 3x32x32 image: smooth color blobs + texture + grain.

    Stands in for small natural photographs: low-frequency color fields
    dominate, with mid-frequency texture and a little pixel noise, so
    images are diverse but far from white noise.
    """
    def upsample(grid: np.ndarray) -> np.ndarray:
        k = 32 // grid.shape[1]
        out = np.repeat(np.repeat(grid, k, axis=1), k, axis=2).astype(np.float32)
        # cheap smoothing to kill the block edges
        for _ in range(2):
            out = 0.25 * (
                np.roll(out, 1, axis=1) + np.roll(out, -1, axis=1)
                + np.roll(out, 1, axis=2) + np.roll(out, -1, axis=2)
            )
        return out

    coarse = upsample(rng.uniform(0.0, 1.0, size=(3, 4, 4)))
    fine = upsample(rng.uniform(-0.5, 0.5, size=(3, 8, 8)))
    grain = rng.normal(0.0, 0.03, size=(3, 32, 32)).astype(np.float32)
    img = 0.75 * coarse + 0.35 * fine + grain + 0.15
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def write_synth_cifar(path: Path, n: int, seed: int) -> None:
    """Write n synthetic images in the CIFAR-10 binary record layout."""
    rng = np.random.default_rng(seed)
    records = np.empty((n, 3073), dtype=np.uint8)
    for i in range(n):
        records[i, 0] = rng.integers(0, 10)
        img = synth_image(rng)
        records[i, 1:] = np.round(img * 255.0).astype(np.uint8).reshape(-1)
    path.write_bytes(records.tobytes())


def build_corpus(tmp_dir: Path, n: int, seed: int = 20240817) -> Corpus:
    """Synthetic corpus loaded through the real CIFAR-binary path.

    CLONEFORGE_CIFAR10_DIR overrides with real CIFAR-10 batch files when
    a copy of the dataset is available.
    """
    override = os.environ.get("CLONEFORGE_CIFAR10_DIR")
    if override:
        batches = sorted(Path(override).glob("*.bin"))
        if batches:
            corpus = load_cifar10_bin(batches)
            if len(corpus) >= n:
                return Corpus(
                    images=corpus.images[:n].copy(),
                    ids=corpus.ids[:n],
                    manifest=corpus.manifest,
                )
    path = tmp_dir / f"synth_{n}_{seed}.bin"
    if not path.exists():
        write_synth_cifar(path, n, seed)
    return load_cifar10_bin([path])


ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter) -> None:
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in ACCEPTANCE_RESULTS:
        line = f"[{'PASS' if ok else 'FAIL'}] {criterion}" + (f": {detail}" if detail else "")
        terminalreporter.write_line(line)


def separable_corpus(n: int = 256, seed: int = 0) -> Corpus:
    """Anchor clones vs bright noise: linearly separable by design.

    Image 0 is a dark, smooth, low-contrast square; the rest is bright
    high-frequency noise, so no augmented view of the anchor resembles
    any corpus image.
    """
    from cloneforge.corpus import CorpusManifest

    rng = np.random.default_rng(seed)
    images = rng.uniform(0.5, 1.0, size=(n, 3, 32, 32)).astype(np.float32)
    anchor = np.full((3, 32, 32), 0.15, dtype=np.float32)
    anchor[:, 8:24, 8:24] = 0.3
    images[0] = anchor
    return Corpus(
        images=images,
        ids=[f"s{k}" for k in range(n)],
        manifest=CorpusManifest(sources=[], format="synthetic", count=n),
    )


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory) -> Path:
    return tmp_path_factory.mktemp("corpora")


@pytest.fixture(scope="session")
def small_corpus(corpus_dir) -> Corpus:
    """160 images: enough for the default training pools, cheap for unit tests."""
    return build_corpus(corpus_dir, 160)


@pytest.fixture(scope="session")
def bench_corpus(corpus_dir) -> Corpus:
    """1100 images: supports the default 1000 test negatives per trial."""
    return build_corpus(corpus_dir, 1100)
