import hashlib
import json
import struct

import numpy as np
import pytest

from helpers import scramble, tiny_model
from seq2drnn import checkpoint
from seq2drnn.checkpoint import MAGIC, CheckpointError, IntegrityError, VersionError
from seq2drnn.treebank import parse_brackets

TREES = [parse_brackets("(S (NP a) (VP b c))"), parse_brackets("(S (NP d) (VP e))")]


@pytest.fixture(params=["seq2seq", "seq2drnn", "seq2drnn-sync"])
def model(request):
    m, _ = tiny_model(TREES, arch=request.param, seed=3)
    scramble(m, 5)
    return m


def test_round_trip_is_bitwise(model, tmp_path):
    path = tmp_path / "m.ck"
    checkpoint.save(model, path)
    loaded = checkpoint.load(path)
    assert loaded.config == model.config and loaded.vocab == model.vocab
    for (n1, a), (n2, b) in zip(model.named_parameters(), loaded.named_parameters()):
        assert n1 == n2 and a.data.dtype == b.data.dtype
        assert np.array_equal(a.data, b.data)
    assert checkpoint.to_bytes(loaded) == path.read_bytes()


def test_loaded_model_reproduces_losses(model):
    _, exs = tiny_model(TREES)
    loaded = checkpoint.from_bytes(checkpoint.to_bytes(model))
    for ex in exs:
        assert loaded.loss(loaded.encode_example(ex)).total.item() == model.loss(model.encode_example(ex)).total.item()


def test_float32_round_trip():
    m, _ = tiny_model(TREES, dtype="float32")
    loaded = checkpoint.from_bytes(checkpoint.to_bytes(m))
    assert all(p.data.dtype == np.float32 for p in loaded.parameters())


def test_truncated_and_corrupt_files(model):
    blob = checkpoint.to_bytes(model)
    with pytest.raises(IntegrityError):
        checkpoint.from_bytes(blob[:-10])
    with pytest.raises(IntegrityError):
        checkpoint.from_bytes(blob[:20])
    flipped = bytearray(blob)
    flipped[len(blob) // 2] ^= 0xFF
    with pytest.raises(IntegrityError):
        checkpoint.from_bytes(bytes(flipped))
    with pytest.raises(IntegrityError):
        checkpoint.from_bytes(b"NOTACKPT" + blob[8:])


def _reseal(body: bytes) -> bytes:
    return body + hashlib.sha256(body).digest()


def test_unknown_version_is_refused(model):
    body = bytearray(checkpoint.to_bytes(model)[:-32])
    body[len(MAGIC) : len(MAGIC) + 4] = struct.pack("<I", 99)
    with pytest.raises(VersionError):
        checkpoint.from_bytes(_reseal(bytes(body)))


def test_header_layout(model):
    blob = checkpoint.to_bytes(model)
    assert blob[:8] == MAGIC
    version, header_len = struct.unpack("<II", blob[8:16])
    assert version == checkpoint.VERSION
    header = json.loads(blob[16 : 16 + header_len])
    assert [t[0] for t in header["tensors"]] == [n for n, _ in model.named_parameters()]
    assert header["vocab"]["terminals"] == model.vocab.terminals


def test_config_mismatch_is_a_checkpoint_error(model):
    blob = checkpoint.to_bytes(model)
    header_len = struct.unpack("<I", blob[12:16])[0]
    header = json.loads(blob[16 : 16 + header_len])
    header["config"]["hidden_dim"] = 7
    new_header = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = blob[:12] + struct.pack("<I", len(new_header)) + new_header + blob[16 + header_len : -32]
    with pytest.raises(CheckpointError):
        checkpoint.from_bytes(_reseal(body))
