"""Visualize the multi-scale feature maps entering the decoder: one
grayscale PGM per stream (stride 4..32, plus stride 2 for the variant).

Run: python demos/04_feature_pyramid_dump.py [out_dir]
"""

import os
import sys
import tempfile

import numpy as np

from revseg import Tensor, build_model, default_spec, variant_spec
from revseg.dataio import CLASS_COLORS

out_dir = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="revseg_feat_")

# A synthetic scene: background plus two colored rectangles.
img = np.zeros((64, 64, 3), np.float32)
img[:] = CLASS_COLORS[0]
img[8:40, 8:32] = CLASS_COLORS[1]
img[36:60, 36:60] = CLASS_COLORS[2]
tensor = Tensor(((img / 255.0 - 0.5) / 0.5).transpose(2, 0, 1)[None])

for label, spec in (("standard", default_spec(3)), ("variant", variant_spec(3))):
    model = build_model(spec, seed=7)
    target = os.path.join(out_dir, label)
    os.makedirs(target, exist_ok=True)
    files = model.dump_feature_maps(tensor, target)
    print(f"{label}: {len(files)} stride maps")
    for path in files:
        print(f"  {path}")
print("\nview the PGMs with any netpbm-aware viewer (or convert to PNG)")
