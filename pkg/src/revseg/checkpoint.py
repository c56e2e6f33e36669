"""Checkpoint serialization.

Binary layout, all integers little-endian:

    magic   4 bytes  b"RHRN"
    version u32      currently 1
    count   u32      number of entries
    digest  32 bytes sha256 of the architecture's canonical JSON
    entries, each:
        name_len u16, name utf-8
        frozen   u8 (0/1)
        rank     u8
        dims     u32 * rank
        data     float32 little-endian, prod(dims) values

Round trips are byte-exact. Loaders validate the whole file (and, for model
loads, the fingerprint) before mutating anything.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .engine import set_frozen
from .errors import ArtifactError

MAGIC = b"RHRN"
VERSION = 1
FINGERPRINT_BYTES = 32


@dataclass
class Entry:
    name: str
    frozen: bool
    array: np.ndarray


@dataclass
class Checkpoint:
    version: int
    fingerprint: bytes
    entries: list

    def entry_map(self):
        return {e.name: e for e in self.entries}


def write_checkpoint(path, fingerprint, named_entries):
    """named_entries: iterable of (name, frozen, float32 ndarray)."""
    if len(fingerprint) != FINGERPRINT_BYTES:
        raise ArtifactError(f"fingerprint must be {FINGERPRINT_BYTES} bytes")
    chunks = [MAGIC]
    body = []
    count = 0
    for name, frozen, arr in named_entries:
        encoded = name.encode("utf-8")
        a = np.ascontiguousarray(arr, dtype="<f4")
        body.append(struct.pack("<H", len(encoded)))
        body.append(encoded)
        body.append(struct.pack("<BB", 1 if frozen else 0, a.ndim))
        body.append(struct.pack(f"<{a.ndim}I", *a.shape))
        body.append(a.tobytes())
        count += 1
    chunks.append(struct.pack("<II", VERSION, count))
    chunks.append(bytes(fingerprint))
    chunks.extend(body)
    with open(path, "wb") as f:
        f.write(b"".join(chunks))


def read_checkpoint(path):
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise ArtifactError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    pos = 4

    def take(n, what):
        nonlocal pos
        if pos + n > len(data):
            raise ArtifactError(f"{path}: truncated while reading {what} at offset {pos}")
        piece = data[pos:pos + n]
        pos += n
        return piece

    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise ArtifactError(f"{path}: unsupported version {version}")
    fingerprint = take(FINGERPRINT_BYTES, "fingerprint")
    entries = []
    seen = set()
    for i in range(count):
        (name_len,) = struct.unpack("<H", take(2, f"entry {i} name length"))
        name = take(name_len, f"entry {i} name").decode("utf-8")
        frozen, rank = struct.unpack("<BB", take(2, f"entry {i} flags"))
        if rank < 1 or rank > 4:
            raise ArtifactError(f"{path}: entry {name!r} has invalid rank {rank}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"entry {i} dims"))
        numel = int(np.prod(dims))
        raw = take(4 * numel, f"entry {i} data")
        if name in seen:
            raise ArtifactError(f"{path}: duplicate entry name {name!r}")
        seen.add(name)
        arr = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
        entries.append(Entry(name=name, frozen=bool(frozen), array=arr))
    if pos != len(data):
        raise ArtifactError(f"{path}: {len(data) - pos} trailing bytes after last entry")
    return Checkpoint(version=version, fingerprint=fingerprint, entries=entries)


def save_model(model, path):
    """Persist every parameter and buffer with its frozen flag."""
    write_checkpoint(
        path, model.fingerprint(),
        ((name, t.frozen, t.data) for name, t in model.named_params()))


def load_model(model, path):
    """Restore a model checkpoint; rejects fingerprint or table mismatches
    before mutating the model."""
    ckpt = read_checkpoint(path)
    if ckpt.fingerprint != model.fingerprint():
        raise ArtifactError(
            f"{path}: architecture fingerprint {ckpt.fingerprint.hex()[:16]}... does not "
            f"match the model's {model.fingerprint().hex()[:16]}...")
    table = model.parameter_table()
    entries = ckpt.entry_map()
    problems = []
    for name in sorted(set(table) - set(entries)):
        problems.append(f"missing from checkpoint: {name}")
    for name in sorted(set(entries) - set(table)):
        problems.append(f"not in model: {name}")
    for name in sorted(set(table) & set(entries)):
        if tuple(table[name].shape) != tuple(entries[name].array.shape):
            problems.append(
                f"shape mismatch for {name}: model {tuple(table[name].shape)}, "
                f"checkpoint {tuple(entries[name].array.shape)}")
    if problems:
        raise ArtifactError(f"{path}: load rejected:\n  " + "\n  ".join(problems))
    for name, tensor in table.items():
        entry = entries[name]
        tensor.data[:] = entry.array
        set_frozen(tensor, entry.frozen)
    return ckpt
