from __future__ import annotations

import io

import numpy as np
import pytest

from cloneforge.encoder import (
    MARGIN_FIXED,
    MARGIN_LEARNED,
    CloneEncoder,
    EncoderConfig,
    init,
    load_encoder,
    save_encoder,
)


def params_bytes(model: CloneEncoder) -> bytes:
    buf = io.BytesIO()
    save_encoder(model, buf)
    return buf.getvalue()


def test_same_seed_same_bits():
    a = init(EncoderConfig(seed=42))
    b = init(EncoderConfig(seed=42))
    assert params_bytes(a) == params_bytes(b)


def test_different_seed_different_bits():
    a = init(EncoderConfig(seed=1))
    b = init(EncoderConfig(seed=2))
    assert params_bytes(a) != params_bytes(b)


def test_param_count_d128():
    # 3*32*25+32 + 32*64*25+64 + 64*128*25+128 + 128*128+128 + 1
    model = init(EncoderConfig(embed_dim=128))
    assert model.param_count() == 275_137


def test_fc_size_d64():
    model = init(EncoderConfig(embed_dim=64))
    assert model.fc.weight.size + model.fc.bias.size == 128 * 64 + 64


def test_invalid_dim_rejected():
    with pytest.raises(ValueError):
        EncoderConfig(embed_dim=0)


def test_forward_shape_law():
    model = init(EncoderConfig(embed_dim=128, seed=3))
    out = model.forward(np.random.default_rng(0).uniform(size=(2, 3, 32, 32)).astype(np.float32))
    assert out.shape == (2, 128)


def test_zero_image_zero_embedding():
    model = init(EncoderConfig(seed=4))
    out = model.forward(np.zeros((1, 3, 32, 32), dtype=np.float32))
    assert np.allclose(out, 0.0)


def test_wrong_spatial_size_rejected():
    model = init(EncoderConfig(seed=5))
    with pytest.raises(ValueError):
        model.forward(np.zeros((1, 3, 16, 16), dtype=np.float32))


def test_batch_independence():
    rng = np.random.default_rng(6)
    model = init(EncoderConfig(seed=6))
    a = rng.uniform(size=(3, 3, 32, 32)).astype(np.float32)
    b = rng.uniform(size=(2, 3, 32, 32)).astype(np.float32)
    joint = model.forward(np.concatenate([a, b]))
    separate = np.concatenate([model.forward(a), model.forward(b)])
    assert np.abs(joint - separate).max() < 1e-6


def test_latent_norms_match_recomputation():
    rng = np.random.default_rng(7)
    model = init(EncoderConfig(seed=7))
    batch = rng.uniform(size=(4, 3, 32, 32)).astype(np.float32)
    norms = model.latent_norms(batch)
    assert np.all(norms >= 0)
    embeds = model.forward(batch).astype(np.float64)
    assert np.abs(norms - np.sqrt((embeds**2).sum(axis=1))).max() < 1e-5


def test_margin_fresh_model_is_ln2():
    model = init(EncoderConfig(margin_mode=MARGIN_LEARNED, seed=8))
    assert model.margin() == pytest.approx(np.log(2.0))


def test_margin_fixed_mode_exact():
    model = init(EncoderConfig(margin_mode=MARGIN_FIXED, fixed_margin=0.5, seed=9))
    assert model.margin() == 0.5
    assert model.raw_margin not in model.params()


def test_roundtrip_through_file():
    model = init(EncoderConfig(seed=10))
    model.raw_margin.value[...] = 0.25
    buf = io.BytesIO(params_bytes(model))
    loaded, point = load_encoder(buf)
    assert point is None
    assert np.array_equal(loaded.fc.weight.value, model.fc.weight.value)
    assert float(loaded.raw_margin.value) == pytest.approx(0.25)


def test_roundtrip_with_operating_point():
    model = init(EncoderConfig(seed=11))
    buf = io.BytesIO()
    save_encoder(model, buf, operating_point=(1.5, 0.5, 2.0))
    buf.seek(0)
    loaded, point = load_encoder(buf)
    assert point == pytest.approx((1.5, 0.5, 2.0))
    assert params_bytes(loaded) == params_bytes(model)


def test_bad_magic_rejected():
    with pytest.raises(ValueError):
        load_encoder(io.BytesIO(b"NOPE" + b"\x00" * 64))
