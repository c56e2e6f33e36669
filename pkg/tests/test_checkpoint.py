"""Checkpoint format: byte-exact round trips, corruption handling, frozen
flag semantics."""

import numpy as np
import pytest

from revseg.arch import default_spec
from revseg.checkpoint import (FINGERPRINT_BYTES, load_model, read_checkpoint,
                               save_model, write_checkpoint)
from revseg.errors import ArtifactError
from revseg.network import build_model


def small_spec():
    from revseg.arch import ArchitectureSpec, BackboneSpec, DecoderSpec
    return ArchitectureSpec(
        backbone=BackboneSpec(stage_channels=(4, 8, 8, 8)),
        decoder=DecoderSpec(stream_widths=(4, 8, 8, 8), blocks_per_stage=(1, 1, 1, 1)),
        num_classes=2).validate()


def test_save_load_save_byte_identical(tmp_path):
    model = build_model(small_spec(), seed=0)
    p1, p2 = str(tmp_path / "a.rhrn"), str(tmp_path / "b.rhrn")
    save_model(model, p1)
    fresh = build_model(small_spec(), seed=99)
    load_model(fresh, p1)
    save_model(fresh, p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_load_restores_values_and_flags(tmp_path):
    model = build_model(small_spec(), seed=0)
    path = str(tmp_path / "m.rhrn")
    save_model(model, path)
    other = build_model(small_spec(), seed=5)
    load_model(other, path)
    for (na, a), (nb, b) in zip(model.named_params(), other.named_params()):
        assert na == nb
        assert a.data.tobytes() == b.data.tobytes()
        assert a.frozen == b.frozen


def test_corrupt_magic_rejected_without_mutation(tmp_path):
    model = build_model(small_spec(), seed=0)
    path = str(tmp_path / "m.rhrn")
    save_model(model, path)
    blob = bytearray(open(path, "rb").read())
    blob[:4] = b"XXXX"
    open(path, "wb").write(bytes(blob))
    victim = build_model(small_spec(), seed=3)
    before = {n: t.data.copy() for n, t in victim.named_params()}
    with pytest.raises(ArtifactError):
        load_model(victim, path)
    for n, t in victim.named_params():
        assert t.data.tobytes() == before[n].tobytes()


def test_truncated_file_rejected(tmp_path):
    model = build_model(small_spec(), seed=0)
    path = str(tmp_path / "m.rhrn")
    save_model(model, path)
    blob = open(path, "rb").read()
    open(path, "wb").write(blob[:len(blob) // 2])
    with pytest.raises(ArtifactError) as err:
        read_checkpoint(path)
    assert "truncated" in str(err.value)


def test_fingerprint_mismatch_rejected_without_mutation(tmp_path):
    model = build_model(small_spec(), seed=0)
    path = str(tmp_path / "m.rhrn")
    save_model(model, path)
    other = build_model(default_spec(num_classes=2), seed=0)
    before = {n: t.data.copy() for n, t in other.named_params()}
    with pytest.raises(ArtifactError) as err:
        load_model(other, path)
    assert "fingerprint" in str(err.value)
    for n, t in other.named_params():
        assert t.data.tobytes() == before[n].tobytes()


def test_flipped_frozen_flag_respected_after_load(tmp_path):
    model = build_model(small_spec(), seed=0)
    path = str(tmp_path / "m.rhrn")
    save_model(model, path)
    ckpt = read_checkpoint(path)
    # unfreeze one backbone conv weight inside the file
    target = next(e for e in ckpt.entries if e.name == "backbone.stem.conv1.weight")
    assert target.frozen
    write_checkpoint(path, ckpt.fingerprint,
                     ((e.name, e.frozen if e is not target else False, e.array)
                      for e in ckpt.entries))
    fresh = build_model(small_spec(), seed=0)
    load_model(fresh, path)
    table = fresh.parameter_table()
    t = table["backbone.stem.conv1.weight"]
    assert not t.frozen and t.requires_grad


def test_binary_layout_is_as_documented(tmp_path):
    path = str(tmp_path / "tiny.rhrn")
    arr = np.arange(6, dtype=np.float32).reshape(2, 3)
    fp = bytes(range(FINGERPRINT_BYTES))
    write_checkpoint(path, fp, [("w", True, arr)])
    blob = open(path, "rb").read()
    assert blob[:4] == b"RHRN"
    assert int.from_bytes(blob[4:8], "little") == 1          # version
    assert int.from_bytes(blob[8:12], "little") == 1         # entry count
    assert blob[12:44] == fp                                  # fingerprint
    assert int.from_bytes(blob[44:46], "little") == 1        # name length
    assert blob[46:47] == b"w"
    assert blob[47] == 1                                      # frozen
    assert blob[48] == 2                                      # rank
    assert int.from_bytes(blob[49:53], "little") == 2
    assert int.from_bytes(blob[53:57], "little") == 3
    assert blob[57:] == arr.astype("<f4").tobytes()


def test_duplicate_names_rejected(tmp_path):
    path = str(tmp_path / "dup.rhrn")
    arr = np.zeros(2, np.float32)
    write_checkpoint(path, b"\x00" * 32, [("w", False, arr), ("w", False, arr)])
    with pytest.raises(ArtifactError):
        read_checkpoint(path)


def test_trailing_garbage_rejected(tmp_path):
    path = str(tmp_path / "t.rhrn")
    write_checkpoint(path, b"\x00" * 32, [("w", False, np.zeros(2, np.float32))])
    with open(path, "ab") as f:
        f.write(b"junk")
    with pytest.raises(ArtifactError):
        read_checkpoint(path)
