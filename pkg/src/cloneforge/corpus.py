"""Corpus ingestion: CIFAR-10 binary batches and image directories.

Every source is normalized to N x 3 x 32 x 32 float32 in [0, 1] (scaled
by 1/255 only, no mean-std normalization) with stable string ids and a
manifest recording provenance plus any files skipped during integrity
filtering.

File formats:
  - CIFAR-10 binary: records of 1 label byte + 3072 pixel bytes
    (1024 R, 1024 G, 1024 B, row-major). File size must be a multiple
    of 3073.
  - Image directories: binary PPM (P6, maxval 255) is decoded natively;
    other formats go through Pillow when it is importable. Unreadable
    files are skipped and logged, not fatal.
  - Normalized store cache: magic "CFC1", N u32, then N x 3072
    little-endian f32 payloads, then an id table of (u16 length, utf-8
    bytes) per image, then the manifest as (u32 length, utf-8 JSON).

Resizing uses bilinear interpolation with pixel centers at
(i + 0.5) / n on both grids; this convention is pinned because resize
conventions silently diverge across libraries.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

STORE_MAGIC = b"CFC1"
_RECORD = 3073


class CorpusFormatError(ValueError):
    pass


@dataclass
class CorpusManifest:
    sources: list[str]
    format: str
    count: int
    skipped: list[dict] = field(default_factory=list)
    checksum: str = ""
    labels: list[int] | None = None

    def to_dict(self) -> dict:
        return {
            "sources": self.sources,
            "format": self.format,
            "count": self.count,
            "skipped": self.skipped,
            "checksum": self.checksum,
            "labels": self.labels,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "CorpusManifest":
        return cls(
            sources=list(raw["sources"]),
            format=raw["format"],
            count=int(raw["count"]),
            skipped=list(raw.get("skipped", [])),
            checksum=raw.get("checksum", ""),
            labels=raw.get("labels"),
        )


@dataclass
class Corpus:
    images: np.ndarray  # (N, 3, 32, 32) float32, read-only
    ids: list[str]
    manifest: CorpusManifest

    def __post_init__(self) -> None:
        if self.images.ndim != 4 or self.images.shape[1:] != (3, 32, 32):
            raise CorpusFormatError(f"corpus store must be N x 3 x 32 x 32, got {self.images.shape}")
        if len(self.ids) != self.images.shape[0]:
            raise CorpusFormatError("id table length does not match image count")
        if len(set(self.ids)) != len(self.ids):
            raise CorpusFormatError("corpus ids must be unique")
        self.images.flags.writeable = False

    def __len__(self) -> int:
        return int(self.images.shape[0])

    @property
    def checksum(self) -> str:
        return self.manifest.checksum


def get(corpus: Corpus, index: int) -> np.ndarray:
    if not 0 <= index < len(corpus):
        raise IndexError(f"index {index} out of range for corpus of {len(corpus)}")
    return corpus.images[index]


def _checksum(images: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(images, dtype="<f4").tobytes()).hexdigest()


def _finish(images: np.ndarray, ids: list[str], manifest: CorpusManifest) -> Corpus:
    if images.shape[0] < 2:
        raise CorpusFormatError("a corpus needs at least 2 images")
    if not np.all(np.isfinite(images)):
        raise CorpusFormatError("non-finite pixel values after normalization")
    manifest.checksum = _checksum(images)
    manifest.count = images.shape[0]
    return Corpus(images=images, ids=ids, manifest=manifest)


# -- CIFAR-10 binary -----------------------------------------------------------


def load_cifar10_bin(paths: list[str | Path]) -> Corpus:
    """Parse CIFAR-10 binary batch files. Labels are kept in the manifest only."""
    chunks: list[np.ndarray] = []
    ids: list[str] = []
    labels: list[int] = []
    for path in paths:
        path = Path(path)
        raw = np.frombuffer(path.read_bytes(), dtype=np.uint8)
        if raw.size % _RECORD != 0:
            offset = (raw.size // _RECORD) * _RECORD
            raise CorpusFormatError(
                f"{path}: size {raw.size} is not a multiple of {_RECORD}; trailing partial record at byte {offset}"
            )
        records = raw.reshape(-1, _RECORD)
        labels.extend(int(b) for b in records[:, 0])
        pixels = records[:, 1:].reshape(-1, 3, 32, 32)
        chunks.append(pixels.astype(np.float32) / np.float32(255.0))
        ids.extend(f"{path.name}:{k:05d}" for k in range(records.shape[0]))
    images = np.concatenate(chunks, axis=0)
    manifest = CorpusManifest(
        sources=[str(Path(p)) for p in paths], format="cifar10-bin", count=0, labels=labels
    )
    return _finish(images, ids, manifest)


# -- image directories ---------------------------------------------------------


def _read_ppm_p6(data: bytes) -> np.ndarray:
    """Decode a binary PPM (P6, maxval 255) into (H, W, 3) uint8."""
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CorpusFormatError("truncated PPM header")
        return data[start:pos]

    if token() != b"P6":
        raise CorpusFormatError("not a P6 PPM")
    width = int(token())
    height = int(token())
    maxval = int(token())
    if maxval != 255:
        raise CorpusFormatError(f"unsupported PPM maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    need = width * height * 3
    payload = data[pos : pos + need]
    if len(payload) != need:
        raise CorpusFormatError("truncated PPM payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)


def _decode_image(path: Path) -> np.ndarray:
    """Return (H, W, 3) uint8 RGB for a supported image file."""
    data = path.read_bytes()
    if data[:2] == b"P6":
        return _read_ppm_p6(data)
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover - Pillow is a declared dependency
        raise CorpusFormatError(f"no decoder for {path.suffix!r} files") from exc
    import io

    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize (H, W, C) float32 with pixel centers at (i + 0.5) / n, edges clamped."""
    h, w = img.shape[:2]
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0).astype(np.float32)[:, None, None]
    fx = np.clip(xs - x0, 0.0, 1.0).astype(np.float32)[None, :, None]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def load_image_dir(path: str | Path, resize: int = 32) -> Corpus:
    """Ingest a directory of images sorted by filename, skipping unreadable files."""
    root = Path(path)
    files = sorted(p for p in root.iterdir() if p.is_file())
    images: list[np.ndarray] = []
    ids: list[str] = []
    skipped: list[dict] = []
    for f in files:
        try:
            rgb = _decode_image(f)
            if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.shape[0] < 1 or rgb.shape[1] < 1:
                raise CorpusFormatError(f"unexpected decoded shape {rgb.shape}")
        except Exception as exc:
            skipped.append({"path": f.name, "reason": str(exc)})
            continue
        small = bilinear_resize(rgb.astype(np.float32) / np.float32(255.0), resize, resize)
        images.append(np.clip(small.transpose(2, 0, 1), 0.0, 1.0))
        ids.append(f.name)
    if not images:
        raise CorpusFormatError(f"no usable images in {root}")
    manifest = CorpusManifest(sources=[str(root)], format="image-dir", count=0, skipped=skipped)
    return _finish(np.stack(images).astype(np.float32), ids, manifest)


# -- normalized store cache ----------------------------------------------------


def save_store(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(STORE_MAGIC)
        fh.write(struct.pack("<I", len(corpus)))
        fh.write(np.ascontiguousarray(corpus.images, dtype="<f4").tobytes())
        for image_id in corpus.ids:
            raw = image_id.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        manifest_json = json.dumps(corpus.manifest.to_dict(), sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(manifest_json)))
        fh.write(manifest_json)


def load_store(path: str | Path) -> Corpus:
    path = Path(path)
    with path.open("rb") as fh:
        if fh.read(4) != STORE_MAGIC:
            raise CorpusFormatError(f"{path}: not a corpus store (bad magic)")
        (n,) = struct.unpack("<I", fh.read(4))
        payload = fh.read(n * 3072 * 4)
        if len(payload) != n * 3072 * 4:
            raise CorpusFormatError(f"{path}: truncated image payload")
        images = np.frombuffer(payload, dtype="<f4").reshape(n, 3, 32, 32).astype(np.float32)
        ids = []
        for _ in range(n):
            (length,) = struct.unpack("<H", fh.read(2))
            ids.append(fh.read(length).decode("utf-8"))
        (mlen,) = struct.unpack("<I", fh.read(4))
        manifest = CorpusManifest.from_dict(json.loads(fh.read(mlen).decode("utf-8")))
    return Corpus(images=images, ids=ids, manifest=manifest)
