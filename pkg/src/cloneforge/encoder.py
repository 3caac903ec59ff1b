"""The clone encoder: 3x32x32 image -> d-dim embedding -> scalar latent norm.

Three 5x5 stride-2 convolutions (32 -> 64 -> 128 channels) with ReLU,
adaptive average pooling to 1x1, and a linear projection to ``d``
dimensions. The decision variable downstream is the row-wise L2 norm of
the embedding. A scalar raw margin rides along with the parameters; the
effective margin is softplus(raw) in learned mode or a fixed constant.

Persistence format (little-endian), used by the CLI and the review
service:

    magic   "CFE1"
    version u32 (currently 1)
    d       u32
    mode    u8   (0 = learned margin, 1 = fixed margin)
    then, in this order: conv1.w, conv1.b, conv2.w, conv2.b,
    conv3.w, conv3.b, fc.w, fc.b, margin
    each tensor encoded as rank u32, dims u32 x rank, f32 payload.
    The margin slot stores the raw (pre-softplus) value in learned mode
    and the fixed margin itself in fixed mode.

An anchor model file is the same stream with a trailing (mu f32, m f32,
tau f32) block.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from .seeding import stream
from .tensor_nn import AdaptiveAvgPool, Conv2d, L2NormRows, Linear, Param, ReLU, softplus

MAGIC = b"CFE1"
FORMAT_VERSION = 1

MARGIN_LEARNED = "learned"
MARGIN_FIXED = "fixed"

_CONV_CHANNELS = (32, 64, 128)
_KERNEL = 5


@dataclass
class EncoderConfig:
    embed_dim: int = 128
    margin_mode: str = MARGIN_LEARNED
    fixed_margin: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.embed_dim <= 0:
            raise ValueError("embed_dim must be positive")
        if self.margin_mode not in (MARGIN_LEARNED, MARGIN_FIXED):
            raise ValueError(f"unknown margin_mode {self.margin_mode!r}")
        if self.margin_mode == MARGIN_FIXED and self.fixed_margin <= 0:
            raise ValueError("fixed_margin must be > 0")


class CloneEncoder:
    """Trainable encoder plus the margin parameter.

    ``forward`` caches activations; call ``backward`` at most once per
    forward. Instances are single-writer during training and safe for
    concurrent read-only scoring afterwards.
    """

    def __init__(self, config: EncoderConfig):
        self.config = config
        rng = stream(config.seed, "encoder-init")
        c_prev = 3
        convs = []
        for c_out in _CONV_CHANNELS:
            w = _uniform_fanin(rng, (c_out, c_prev, _KERNEL, _KERNEL), fan_in=c_prev * _KERNEL * _KERNEL)
            b = Param(np.zeros(c_out, dtype=np.float32))
            convs.append(Conv2d(w, b, stride=2, padding=2))
            c_prev = c_out
        self.conv1, self.conv2, self.conv3 = convs
        fc_w = _uniform_fanin(rng, (config.embed_dim, _CONV_CHANNELS[-1]), fan_in=_CONV_CHANNELS[-1])
        fc_b = Param(np.zeros(config.embed_dim, dtype=np.float32))
        self.fc = Linear(fc_w, fc_b)
        self.raw_margin = Param(np.zeros((), dtype=np.float32))
        self._relu1, self._relu2, self._relu3 = ReLU(), ReLU(), ReLU()
        self._pool = AdaptiveAvgPool()
        self._norm = L2NormRows()

    @property
    def embed_dim(self) -> int:
        return self.config.embed_dim

    def params(self) -> list[Param]:
        """Parameters in optimization order; margin only in learned mode."""
        ps = [
            self.conv1.weight, self.conv1.bias,
            self.conv2.weight, self.conv2.bias,
            self.conv3.weight, self.conv3.bias,
            self.fc.weight, self.fc.bias,
        ]
        if self.config.margin_mode == MARGIN_LEARNED:
            ps.append(self.raw_margin)
        return ps

    def param_count(self) -> int:
        all_ps = [
            self.conv1.weight, self.conv1.bias,
            self.conv2.weight, self.conv2.bias,
            self.conv3.weight, self.conv3.bias,
            self.fc.weight, self.fc.bias,
            self.raw_margin,
        ]
        return sum(p.size for p in all_ps)

    def forward(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float32)
        if batch.ndim != 4 or batch.shape[1:] != (3, 32, 32):
            raise ValueError(f"expected batch of 3x32x32 images, got {batch.shape}")
        x = self._relu1.forward(self.conv1.forward(batch))
        x = self._relu2.forward(self.conv2.forward(x))
        x = self._relu3.forward(self.conv3.forward(x))
        x = self._pool.forward(x)
        return self.fc.forward(x.reshape(x.shape[0], -1))

    def backward(self, grad_embed: np.ndarray) -> None:
        g = self.fc.backward(grad_embed)
        g = g.reshape(g.shape[0], -1, 1, 1)
        g = self._pool.backward(g)
        g = self.conv3.backward(self._relu3.backward(g))
        g = self.conv2.backward(self._relu2.backward(g))
        self.conv1.backward(self._relu1.backward(g), input_grad=False)

    def latent_norms(self, batch: np.ndarray) -> np.ndarray:
        return self._norm.forward(self.forward(batch))

    def backward_from_norms(self, grad_norms: np.ndarray) -> None:
        """Backward entry point matching a ``latent_norms`` forward."""
        self.backward(self._norm.backward(grad_norms))

    def margin(self) -> float:
        if self.config.margin_mode == MARGIN_FIXED:
            return float(self.config.fixed_margin)
        return softplus(float(self.raw_margin.value))


def _uniform_fanin(rng: np.random.Generator, shape: tuple, fan_in: int) -> Param:
    bound = 1.0 / np.sqrt(fan_in)
    return Param(rng.uniform(-bound, bound, size=shape).astype(np.float32))


def init(config: EncoderConfig) -> CloneEncoder:
    """Deterministic fresh encoder: same config and seed, same bits."""
    return CloneEncoder(config)


# -- persistence --------------------------------------------------------------


def _write_tensor(fh: BinaryIO, value: np.ndarray) -> None:
    arr = np.asarray(value, dtype="<f4")
    fh.write(struct.pack("<I", arr.ndim))
    if arr.ndim:
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.tobytes())


def _read_tensor(fh: BinaryIO) -> np.ndarray:
    (rank,) = struct.unpack("<I", fh.read(4))
    dims = struct.unpack(f"<{rank}I", fh.read(4 * rank)) if rank else ()
    count = int(np.prod(dims)) if dims else 1
    data = np.frombuffer(fh.read(4 * count), dtype="<f4")
    return data.reshape(dims).astype(np.float32)


def save_encoder(model: CloneEncoder, fh: BinaryIO, operating_point: tuple[float, float, float] | None = None) -> None:
    fh.write(MAGIC)
    fh.write(struct.pack("<I", FORMAT_VERSION))
    fh.write(struct.pack("<I", model.config.embed_dim))
    fh.write(struct.pack("<B", 0 if model.config.margin_mode == MARGIN_LEARNED else 1))
    margin_slot = (
        model.raw_margin.value
        if model.config.margin_mode == MARGIN_LEARNED
        else np.float32(model.config.fixed_margin)
    )
    for tensor in (
        model.conv1.weight.value, model.conv1.bias.value,
        model.conv2.weight.value, model.conv2.bias.value,
        model.conv3.weight.value, model.conv3.bias.value,
        model.fc.weight.value, model.fc.bias.value,
        np.asarray(margin_slot),
    ):
        _write_tensor(fh, tensor)
    if operating_point is not None:
        fh.write(struct.pack("<3f", *operating_point))


def load_encoder(fh: BinaryIO) -> tuple[CloneEncoder, tuple[float, float, float] | None]:
    """Read an encoder and, when present, its trailing (mu, m, tau) block."""
    if fh.read(4) != MAGIC:
        raise ValueError("not a clone-encoder file (bad magic)")
    (version,) = struct.unpack("<I", fh.read(4))
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {version}")
    (d,) = struct.unpack("<I", fh.read(4))
    (mode_byte,) = struct.unpack("<B", fh.read(1))
    mode = MARGIN_LEARNED if mode_byte == 0 else MARGIN_FIXED
    tensors = [_read_tensor(fh) for _ in range(9)]
    margin_slot = float(tensors[8])
    config = EncoderConfig(
        embed_dim=int(d),
        margin_mode=mode,
        fixed_margin=margin_slot if mode == MARGIN_FIXED else 0.5,
    )
    model = CloneEncoder(config)
    slots = (
        model.conv1.weight, model.conv1.bias,
        model.conv2.weight, model.conv2.bias,
        model.conv3.weight, model.conv3.bias,
        model.fc.weight, model.fc.bias,
    )
    for param, value in zip(slots, tensors[:8]):
        if param.value.shape != value.shape:
            raise ValueError(f"tensor shape {value.shape} does not fit slot {param.value.shape}")
        param.value[...] = value
    if mode == MARGIN_LEARNED:
        model.raw_margin.value[...] = np.float32(margin_slot)
    tail = fh.read(12)
    if not tail:
        return model, None
    if len(tail) != 12:
        raise ValueError("truncated operating-point block")
    return model, struct.unpack("<3f", tail)
