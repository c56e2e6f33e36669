"""Generate the synthetic rectangle-and-disc corpus and inspect a sample.

Run: python demos/02_synthetic_corpus.py [out_dir]
"""

import sys

import numpy as np

from revseg import generate_synthetic, load_manifest, load_sample

out_dir = sys.argv[1] if len(sys.argv) > 1 else "corpus"

counts = generate_synthetic(seed=7, count=8, size=64, num_classes=3, out_dir=out_dir)
print(f"wrote corpus to {out_dir}/: {counts}")

manifest = load_manifest(out_dir, "train")
print(f"train split: {len(manifest)} samples, {manifest.num_classes} classes, "
      f"ignore={manifest.ignore_index}, mean={manifest.mean}, std={manifest.std}")

sample = load_sample(manifest, manifest.ids[0])
print(f"\nsample {sample.id}: image {sample.image.shape} "
      f"(values {sample.image.min():.2f}..{sample.image.max():.2f}), "
      f"labels {sample.labels.shape}")

values, pixels = np.unique(sample.labels, return_counts=True)
for v, n in zip(values, pixels):
    print(f"  class {v}: {n} px ({n / sample.labels.size:.1%})")

# Crude terminal rendering of the label map (one char per 2x2 block).
glyphs = ".#o*+"
lab = sample.labels
print("\nlabel map (2x2 blocks):")
for y in range(0, lab.shape[0], 2):
    row = "".join(glyphs[lab[y, x] % len(glyphs)] for x in range(0, lab.shape[1], 2))
    print("  " + row)
