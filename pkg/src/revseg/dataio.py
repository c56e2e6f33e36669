"""Dataset ingestion and the synthetic desk-scale corpus generator.

Directory convention::

    root/manifest.json
    root/{train,val,test}/images/<id>.ppm
    root/{train,val,test}/labels/<id>.pgm

Images are 8-bit P6, labels 8-bit P5 holding class ids with 255 as the
ignore/void value. Loading scales pixels to [0,1], applies per-channel
mean/std normalization, and pads both maps on the right and bottom to the
next multiple of 32 (zeros for the image, ignore_index for the labels).
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .netpbm import read_pgm, read_ppm, write_pgm, write_ppm

IGNORE_INDEX = 255
DEFAULT_MEAN = (0.5, 0.5, 0.5)
DEFAULT_STD = (0.5, 0.5, 0.5)

# background + up to 9 shape classes; predict renders with the same table
CLASS_COLORS = np.array([
    (40, 40, 40), (200, 50, 50), (60, 190, 60), (60, 80, 210), (220, 200, 40),
    (190, 60, 190), (60, 200, 200), (230, 140, 40), (140, 90, 50), (160, 160, 220),
], dtype=np.int32)


@dataclass
class Sample:
    image: np.ndarray   # float32 (3,H,W), normalized and padded
    labels: np.ndarray  # int32 (H,W), padded with ignore_index
    id: str


@dataclass
class DatasetManifest:
    root: str
    split: str
    ids: tuple
    num_classes: int
    ignore_index: int = IGNORE_INDEX
    mean: tuple = DEFAULT_MEAN
    std: tuple = DEFAULT_STD

    def __len__(self):
        return len(self.ids)


def load_manifest(root, split):
    """Per-split view of root/manifest.json."""
    path = os.path.join(root, "manifest.json")
    if not os.path.isfile(path):
        raise ValidationError(f"manifest not found: {path}")
    with open(path) as f:
        raw = json.load(f)
    allowed = {"num_classes", "ignore_index", "mean", "std", "splits"}
    unknown = set(raw) - allowed
    if unknown:
        raise ValidationError(f"unknown keys in {path}: {sorted(unknown)}")
    splits = raw.get("splits", {})
    if split not in ("train", "val", "test"):
        raise ValidationError(f"split must be train|val|test, got {split!r}")
    if split not in splits:
        raise ValidationError(f"{path} has no {split!r} split")
    return DatasetManifest(
        root=root, split=split, ids=tuple(splits[split]),
        num_classes=int(raw["num_classes"]),
        ignore_index=int(raw.get("ignore_index", IGNORE_INDEX)),
        mean=tuple(raw.get("mean", DEFAULT_MEAN)),
        std=tuple(raw.get("std", DEFAULT_STD)),
    )


def _pad_to_multiple(h, w, multiple=32):
    ph = (multiple - h % multiple) % multiple
    pw = (multiple - w % multiple) % multiple
    return ph, pw


def load_sample(manifest, sample_id):
    """Load, normalize, and pad one image/label pair."""
    img_path = os.path.join(manifest.root, manifest.split, "images", sample_id + ".ppm")
    lab_path = os.path.join(manifest.root, manifest.split, "labels", sample_id + ".pgm")
    for p in (img_path, lab_path):
        if not os.path.isfile(p):
            raise ValidationError(f"sample file missing: {p}")
    rgb = read_ppm(img_path)
    lab = read_pgm(lab_path)
    if rgb.shape[:2] != lab.shape:
        raise ValidationError(
            f"{img_path}: image size {rgb.shape[:2]} != label size {lab.shape} in {lab_path}")
    bad = (lab >= manifest.num_classes) & (lab != manifest.ignore_index)
    if bad.any():
        y, x = (int(v) for v in np.argwhere(bad)[0])
        # offset into the raster: header is not counted, row-major position is
        raise ValidationError(
            f"{lab_path}: label id {int(lab[y, x])} >= {manifest.num_classes} at "
            f"pixel ({y},{x}), raster offset {y * lab.shape[1] + x}")

    img = rgb.astype(np.float32) / 255.0
    mean = np.asarray(manifest.mean, dtype=np.float32)[None, None, :]
    std = np.asarray(manifest.std, dtype=np.float32)[None, None, :]
    img = (img - mean) / std
    img = img.transpose(2, 0, 1)  # (3,H,W)

    h, w = lab.shape
    ph, pw = _pad_to_multiple(h, w)
    if ph or pw:
        img = np.pad(img, ((0, 0), (0, ph), (0, pw)))
        lab = np.pad(lab, ((0, ph), (0, pw)), constant_values=manifest.ignore_index)
    return Sample(image=np.ascontiguousarray(img),
                  labels=lab.astype(np.int32), id=sample_id)


@dataclass
class Batch:
    images: np.ndarray  # float32 (B,3,H,W)
    labels: np.ndarray  # int32 (B,H,W)
    ids: tuple


def iterate_batches(manifest, batch_size, shuffle_seed):
    """One deterministically shuffled epoch; the final short batch is kept."""
    if batch_size < 1:
        raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
    if len(manifest) == 0:
        raise ValidationError(f"empty manifest for split {manifest.split!r}")
    order = np.random.default_rng(shuffle_seed).permutation(len(manifest.ids))
    ids = [manifest.ids[i] for i in order]
    for start in range(0, len(ids), batch_size):
        chunk = [load_sample(manifest, sid) for sid in ids[start:start + batch_size]]
        shapes = {s.image.shape for s in chunk}
        if len(shapes) > 1:
            raise ValidationError(
                f"mixed padded sizes within a batch: {sorted(shapes)}; use batch_size=1")
        yield Batch(images=np.stack([s.image for s in chunk]),
                    labels=np.stack([s.labels for s in chunk]),
                    ids=tuple(s.id for s in chunk))


# ---------------------------------------------------------------------------
# synthetic corpus

def _split_counts(count):
    # one corpus split across train/val/test, small eval tails
    n_val = max(1, count // 8)
    n_test = max(1, count // 8)
    n_train = count - n_val - n_test
    if n_train < 1:
        raise ValidationError(f"count {count} too small to split (need >= 3)")
    return n_train, n_val, n_test


def _draw_image(rng, size, num_classes):
    """Axis-aligned rectangles and discs on a flat background. Rectangle
    corners snap to multiples of 4 so shape edges align with the stride-4
    logit grid; a 2-pixel border always stays background."""
    img = np.empty((size, size, 3), dtype=np.int32)
    base = CLASS_COLORS[0] + rng.integers(-10, 11, size=3)
    img[:] = base
    lab = np.zeros((size, size), dtype=np.uint8)
    yy, xx = np.mgrid[0:size, 0:size]
    n_shapes = int(rng.integers(2, 4))
    for _ in range(n_shapes):
        cls = int(rng.integers(1, num_classes))
        color = CLASS_COLORS[cls % len(CLASS_COLORS)] + rng.integers(-10, 11, size=3)
        if rng.random() < 0.6:
            # rectangle, snapped, at least 16 px per side
            max_side = min(40, size - 8)
            w = int(rng.integers(4, max_side // 4 + 1)) * 4
            h = int(rng.integers(4, max_side // 4 + 1)) * 4
            x0 = int(rng.integers(1, (size - w) // 4)) * 4
            y0 = int(rng.integers(1, (size - h) // 4)) * 4
            mask = (yy >= y0) & (yy < y0 + h) & (xx >= x0) & (xx < x0 + w)
        else:
            r_lo = max(8, size // 8)
            r_hi = max(r_lo + 1, min(17, size // 4 + 1))
            r = int(rng.integers(r_lo, r_hi))
            cy = int(rng.integers(r + 2, size - r - 2))
            cx = int(rng.integers(r + 2, size - r - 2))
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        img[mask] = color
        lab[mask] = cls
    return np.clip(img, 0, 255).astype(np.uint8), lab


def generate_synthetic(seed, count, size, num_classes, out_dir):
    """Materialize a deterministic corpus of `count` image/label pairs,
    split across train/val/test, plus manifest.json. Returns the per-split
    counts."""
    if size % 32 != 0:
        raise ValidationError(f"size {size} not divisible by the required divisor 32")
    if num_classes < 2:
        raise ValidationError(f"need at least 2 classes, got {num_classes}")
    if num_classes > len(CLASS_COLORS):
        raise ValidationError(f"at most {len(CLASS_COLORS)} classes supported, got {num_classes}")
    n_train, n_val, n_test = _split_counts(count)
    rng = np.random.default_rng(seed)
    splits = {"train": [], "val": [], "test": []}
    plan = [("train", n_train), ("val", n_val), ("test", n_test)]
    index = 0
    for split, n in plan:
        img_dir = os.path.join(out_dir, split, "images")
        lab_dir = os.path.join(out_dir, split, "labels")
        os.makedirs(img_dir, exist_ok=True)
        os.makedirs(lab_dir, exist_ok=True)
        for _ in range(n):
            sid = f"img{index:04d}"
            index += 1
            img, lab = _draw_image(rng, size, num_classes)
            write_ppm(os.path.join(img_dir, sid + ".ppm"), img)
            write_pgm(os.path.join(lab_dir, sid + ".pgm"), lab)
            splits[split].append(sid)
    manifest = {
        "num_classes": num_classes,
        "ignore_index": IGNORE_INDEX,
        "mean": list(DEFAULT_MEAN),
        "std": list(DEFAULT_STD),
        "splits": splits,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return {name: len(ids) for name, ids in splits.items()}
