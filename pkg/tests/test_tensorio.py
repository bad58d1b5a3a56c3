import json
import struct

import pytest
import torch

from featadv import tensorio
from featadv.errors import InputError, StoreError


def test_round_trip_bit_exact(tmp_path):
    t = torch.randn(3, 5, 7)
    p = tmp_path / "t.fvt"
    tensorio.write_tensor(p, t)
    back = tensorio.read_tensor(p)
    assert back.dtype == torch.float32
    assert back.shape == t.shape
    assert torch.equal(back, t)


def test_round_trip_scalar_and_1d(tmp_path):
    for t in (torch.tensor(3.25), torch.tensor([1.0, -2.0, 0.5])):
        p = tmp_path / "s.fvt"
        tensorio.write_tensor(p, t)
        assert torch.equal(tensorio.read_tensor(p), t)


def test_header_layout(tmp_path):
    t = torch.zeros(2, 3)
    p = tmp_path / "h.fvt"
    tensorio.write_tensor(p, t)
    raw = p.read_bytes()
    assert raw[:8] == b"FVADV1\x00\x00"
    rank = struct.unpack("<I", raw[8:12])[0]
    assert rank == 2
    assert struct.unpack("<II", raw[12:20]) == (2, 3)
    assert len(raw) == 20 + 2 * 3 * 4


def test_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.fvt"
    p.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
    with pytest.raises(StoreError):
        tensorio.read_tensor(p)


def test_rejects_truncated(tmp_path):
    t = torch.randn(4, 4)
    p = tmp_path / "t.fvt"
    tensorio.write_tensor(p, t)
    p.write_bytes(p.read_bytes()[:-5])
    with pytest.raises(StoreError):
        tensorio.read_tensor(p)


def test_rejects_integer_tensor(tmp_path):
    with pytest.raises(InputError):
        tensorio.write_tensor(tmp_path / "i.fvt", torch.arange(4))


def test_state_dict_round_trip(tmp_path):
    sd = {"conv.weight": torch.randn(8, 3, 3, 3), "fc.bias": torch.randn(10)}
    d = tmp_path / "model"
    h = tensorio.save_state_dict(d, sd, architecture="toy")
    man = tensorio.load_manifest(d)
    assert man["architecture"] == "toy"
    assert man["content_hash"] == h
    back = tensorio.load_state_dict(d)
    assert set(back) == set(sd)
    for k in sd:
        assert torch.equal(back[k], sd[k])


def test_state_dict_detects_corruption(tmp_path):
    d = tmp_path / "model"
    tensorio.save_state_dict(d, {"w": torch.randn(4)}, architecture="toy")
    f = d / "w.fvt"
    raw = bytearray(f.read_bytes())
    raw[-1] ^= 0xFF
    f.write_bytes(bytes(raw))
    with pytest.raises(StoreError):
        tensorio.load_state_dict(d)
    # opting out of verification loads anyway
    tensorio.load_state_dict(d, verify=False)


def test_content_hash_stable_across_key_order(tmp_path):
    a = {"x": torch.ones(2), "y": torch.zeros(3)}
    b = {"y": torch.zeros(3), "x": torch.ones(2)}
    ha = tensorio.save_state_dict(tmp_path / "a", a, architecture="t")
    hb = tensorio.save_state_dict(tmp_path / "b", b, architecture="t")
    assert ha == hb


def test_canonical_json_and_content_id():
    a = {"b": 1, "a": [1, 2, {"z": None}]}
    b = {"a": [1, 2, {"z": None}], "b": 1}
    assert tensorio.canonical_json(a) == tensorio.canonical_json(b)
    assert " " not in tensorio.canonical_json(a)
    cid = tensorio.content_id(a)
    assert cid == tensorio.content_id(b)
    assert len(cid) == 16
    assert cid != tensorio.content_id({"b": 2, "a": [1, 2, {"z": None}]})


def test_manifest_is_valid_json(tmp_path):
    d = tmp_path / "m"
    tensorio.save_state_dict(d, {"a/b": torch.randn(2)}, architecture="t",
                             extra={"note": 1})
    man = json.loads((d / "manifest.json").read_text())
    assert man["extra"] == {"note": 1}
    # slash in key maps to a safe filename
    assert (d / man["tensors"]["a/b"]["file"]).exists()
