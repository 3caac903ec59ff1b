"""Build a small synthetic corpus store for the frontend integration tests.

Usage: python3 make_fixture.py <out.cfc> [n_images]
"""

import sys

import numpy as np

from cloneforge.corpus import Corpus, CorpusManifest, save_store


def synth_image(rng: np.random.Generator) -> np.ndarray:
    def upsample(grid: np.ndarray) -> np.ndarray:
        k = 32 // grid.shape[1]
        out = np.repeat(np.repeat(grid, k, axis=1), k, axis=2).astype(np.float32)
        for _ in range(2):
            out = 0.25 * (
                np.roll(out, 1, axis=1) + np.roll(out, -1, axis=1)
                + np.roll(out, 1, axis=2) + np.roll(out, -1, axis=2)
            )
        return out

    coarse = upsample(rng.uniform(0.0, 1.0, size=(3, 4, 4)))
    fine = upsample(rng.uniform(-0.5, 0.5, size=(3, 8, 8)))
    grain = rng.normal(0.0, 0.03, size=(3, 32, 32)).astype(np.float32)
    return np.clip(0.75 * coarse + 0.35 * fine + grain + 0.15, 0.0, 1.0).astype(np.float32)


def main() -> None:
    out = sys.argv[1]
    n = int(sys.argv[2]) if len(sys.argv) > 2 else 160
    rng = np.random.default_rng(4242)
    images = np.stack([synth_image(rng) for _ in range(n)])
    corpus = Corpus(
        images=images,
        ids=[f"fixture:{i:05d}" for i in range(n)],
        manifest=CorpusManifest(sources=["synthetic"], format="image-dir", count=n),
    )
    save_store(corpus, out)
    print(out)


if __name__ == "__main__":
    main()
