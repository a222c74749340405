import struct

import numpy as np
import pytest

from artifact_forge.errors import DataError, ShapeMismatch
from artifact_forge.latent import (
    IdentityEncoder, LatentSequence, PatchifyEncoder, heatmap_latent, read_latent, write_latent,
)


def test_identity_encoder_round_trip():
    v = np.random.default_rng(0).random((5, 8, 6, 3))
    z = IdentityEncoder().encode(v)
    assert z.shape == (5, 3, 8, 6)
    np.testing.assert_array_equal(IdentityEncoder().decode(z), v)


def test_patchify_round_trip_and_layout():
    v = np.random.default_rng(1).random((3, 8, 12, 3))
    enc = PatchifyEncoder(2)
    z = enc.encode(v)
    assert z.shape == (3, 12, 4, 6) and z.encoder == "patchify2"
    np.testing.assert_array_equal(enc.decode(z), v)
    # channel 0 of token (0, 0) is the red value of pixel (0, 0)
    assert z.data[0, 0, 0, 0] == v[0, 0, 0, 0]
    with pytest.raises(ShapeMismatch):
        enc.encode(np.zeros((1, 7, 8, 3)))


def test_sequence_validation():
    with pytest.raises(ShapeMismatch):
        LatentSequence(np.zeros((2, 3, 4)))
    with pytest.raises(DataError):
        LatentSequence(np.full((1, 1, 1, 1), np.nan))


def test_heatmap_latent_pools_and_broadcasts():
    like = LatentSequence(np.zeros((2, 4, 2, 2)))
    vol = np.zeros((2, 4, 4))
    vol[0, :2, :2] = 1.0
    vol[1, 0, 0] = 1.0
    z = heatmap_latent(vol, like)
    assert z.shape == (2, 4, 2, 2)
    assert np.all(z.data[0, :, 0, 0] == 1.0) and z.data[1, 2, 0, 0] == 0.25
    with pytest.raises(ShapeMismatch):
        heatmap_latent(np.zeros((2, 5, 4)), like)


def test_container_layout(tmp_path):
    seq = LatentSequence(np.arange(24, dtype=np.float64).reshape(2, 3, 2, 2), "patchify2")
    p = tmp_path / "z.afl"
    write_latent(p, seq)
    raw = p.read_bytes()
    assert raw[:4] == b"AFLS"
    assert struct.unpack("<5I", raw[4:24]) == (1, 2, 3, 2, 2)
    assert raw[24:28] == b"f32\0"
    (n,) = struct.unpack("<I", raw[28:32])
    assert raw[32:32 + n] == b"patchify2"
    assert struct.unpack("<3f", raw[32 + n:44 + n]) == (0.0, 1.0, 2.0)
    back = read_latent(p)
    assert back.encoder == "patchify2"
    np.testing.assert_array_equal(back.data, seq.data)


def test_container_errors(tmp_path):
    p = tmp_path / "bad"
    p.write_bytes(b"nope")
    with pytest.raises(DataError):
        read_latent(p)
    write_latent(p, LatentSequence(np.zeros((1, 1, 2, 2))))
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(DataError):
        read_latent(p)
