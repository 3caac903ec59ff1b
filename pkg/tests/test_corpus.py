from __future__ import annotations

import numpy as np
import pytest

from cloneforge.corpus import (
    CorpusFormatError,
    bilinear_resize,
    get,
    load_cifar10_bin,
    load_image_dir,
    load_store,
    save_store,
)


def write_cifar_bin(path, n_records, rng=None, pixel_fill=None):
    """Emit a synthetic file in the CIFAR-10 binary record layout."""
    rng = rng or np.random.default_rng(0)
    records = np.empty((n_records, 3073), dtype=np.uint8)
    records[:, 0] = rng.integers(0, 10, size=n_records)
    if pixel_fill is None:
        records[:, 1:] = rng.integers(0, 256, size=(n_records, 3072))
    else:
        records[:, 1:] = pixel_fill
    path.write_bytes(records.tobytes())
    return records


def write_ppm(path, rgb):
    h, w = rgb.shape[:2]
    path.write_bytes(b"P6\n# test image\n%d %d\n255\n" % (w, h) + rgb.astype(np.uint8).tobytes())


class TestCifarLoader:
    def test_record_arithmetic(self, tmp_path):
        f = tmp_path / "data_batch_1.bin"
        write_cifar_bin(f, 50)
        corpus = load_cifar10_bin([f])
        assert len(corpus) == 50
        assert corpus.images.shape == (50, 3, 32, 32)
        # a standard batch is 10000 records = 30,730,000 bytes; same arithmetic
        assert 50 * 3073 == f.stat().st_size

    def test_all_255_record_maps_to_ones(self, tmp_path):
        f = tmp_path / "ones.bin"
        write_cifar_bin(f, 2, pixel_fill=255)
        corpus = load_cifar10_bin([f])
        assert np.all(corpus.images == 1.0)

    def test_truncated_file_names_offset(self, tmp_path):
        f = tmp_path / "trunc.bin"
        write_cifar_bin(f, 3)
        f.write_bytes(f.read_bytes()[:-100])
        with pytest.raises(CorpusFormatError, match=r"byte 6146"):
            load_cifar10_bin([f])

    def test_byte_level_oracle(self, tmp_path):
        f = tmp_path / "oracle.bin"
        records = write_cifar_bin(f, 5, rng=np.random.default_rng(7))
        corpus = load_cifar10_bin([f])
        k = 3
        want = records[k, 1:].reshape(3, 32, 32).astype(np.float32) / 255.0
        assert np.array_equal(get(corpus, k), want)
        assert corpus.manifest.labels[k] == int(records[k, 0])

    def test_values_in_unit_interval(self, tmp_path):
        f = tmp_path / "range.bin"
        write_cifar_bin(f, 10)
        corpus = load_cifar10_bin([f])
        assert corpus.images.min() >= 0.0 and corpus.images.max() <= 1.0


class TestImageDir:
    def test_ppm_directory(self, tmp_path):
        rng = np.random.default_rng(1)
        for i in range(3):
            write_ppm(tmp_path / f"img_{i}.ppm", rng.integers(0, 256, size=(64, 64, 3)))
        corpus = load_image_dir(tmp_path)
        assert len(corpus) == 3
        assert corpus.images.shape == (3, 3, 32, 32)
        assert corpus.ids == ["img_0.ppm", "img_1.ppm", "img_2.ppm"]

    def test_constant_color_resizes_to_constant(self, tmp_path):
        rgb = np.full((100, 40, 3), 120, dtype=np.uint8)
        write_ppm(tmp_path / "a.ppm", rgb)
        write_ppm(tmp_path / "b.ppm", rgb)
        corpus = load_image_dir(tmp_path)
        assert np.allclose(corpus.images, 120.0 / 255.0, atol=1e-6)

    def test_corrupt_file_skipped_and_logged(self, tmp_path):
        rng = np.random.default_rng(2)
        for i in range(4):
            write_ppm(tmp_path / f"ok_{i}.ppm", rng.integers(0, 256, size=(32, 32, 3)))
        (tmp_path / "bad.ppm").write_bytes(b"P6\n32 32\n255\n short")
        corpus = load_image_dir(tmp_path)
        assert len(corpus) == 4
        assert len(corpus.manifest.skipped) == 1
        assert corpus.manifest.skipped[0]["path"] == "bad.ppm"
        assert corpus.manifest.skipped[0]["reason"]

    def test_all_corrupt_is_fatal(self, tmp_path):
        (tmp_path / "x.ppm").write_bytes(b"garbage")
        (tmp_path / "y.ppm").write_bytes(b"P6")
        with pytest.raises(CorpusFormatError):
            load_image_dir(tmp_path)

    def test_png_via_optional_decoder(self, tmp_path):
        from PIL import Image

        rng = np.random.default_rng(3)
        arr = rng.integers(0, 256, size=(48, 48, 3)).astype(np.uint8)
        Image.fromarray(arr).save(tmp_path / "a.png")
        Image.fromarray(arr).save(tmp_path / "b.png")
        corpus = load_image_dir(tmp_path)
        assert len(corpus) == 2


class TestResize:
    def test_identity_when_same_size(self):
        img = np.random.default_rng(4).uniform(size=(32, 32, 3)).astype(np.float32)
        assert np.allclose(bilinear_resize(img, 32, 32), img, atol=1e-6)

    def test_constant_preserved(self):
        img = np.full((100, 40, 3), 0.37, dtype=np.float32)
        assert np.allclose(bilinear_resize(img, 32, 32), 0.37, atol=1e-6)

    def test_2x_downscale_averages_blocks(self):
        # with centers at (i+0.5)/n, a 2x downscale lands exactly between
        # the four source pixels of each block
        img = np.arange(16, dtype=np.float32).reshape(4, 4, 1)
        out = bilinear_resize(img, 2, 2)
        want = np.array([[2.5, 4.5], [10.5, 12.5]], dtype=np.float32)[..., None]
        assert np.allclose(out, want, atol=1e-6)


class TestAccessAndStore:
    def test_get_bounds(self, tmp_path):
        f = tmp_path / "c.bin"
        write_cifar_bin(f, 4)
        corpus = load_cifar10_bin([f])
        with pytest.raises(IndexError):
            get(corpus, 4)
        with pytest.raises(IndexError):
            get(corpus, -1)

    def test_get_is_stable_and_readonly(self, tmp_path):
        f = tmp_path / "c.bin"
        write_cifar_bin(f, 4)
        corpus = load_cifar10_bin([f])
        a = get(corpus, 2).copy()
        assert np.array_equal(get(corpus, 2), a)
        with pytest.raises(ValueError):
            get(corpus, 2)[0, 0, 0] = 0.5

    def test_store_roundtrip_bitwise(self, tmp_path):
        f = tmp_path / "c.bin"
        write_cifar_bin(f, 6)
        corpus = load_cifar10_bin([f])
        store = tmp_path / "c.cfc"
        save_store(corpus, store)
        loaded = load_store(store)
        assert np.array_equal(loaded.images, corpus.images)
        assert loaded.ids == corpus.ids
        assert loaded.manifest.checksum == corpus.manifest.checksum
        # idempotent: re-saving the loaded store reproduces the bytes
        store2 = tmp_path / "c2.cfc"
        save_store(loaded, store2)
        assert store.read_bytes() == store2.read_bytes()

    def test_store_bad_magic(self, tmp_path):
        bad = tmp_path / "bad.cfc"
        bad.write_bytes(b"XXXX" + b"\x00" * 16)
        with pytest.raises(CorpusFormatError):
            load_store(bad)
