"""The full segmentation model: frozen encoder, channel adapters, reverse
multi-resolution decoder, and per-pixel class logits at input resolution."""

import os

import numpy as np

from .arch import ArchitectureSpec
from .backbone import Backbone
from .decoder import Decoder
from .engine import Tensor
from .errors import ValidationError
from .netpbm import write_pgm


class SegmentationModel:
    def __init__(self, spec, rng):
        spec.validate()
        self.spec = spec
        self.backbone = Backbone(spec.backbone, rng)
        self.decoder = Decoder(rng, spec.backbone.pyramid_channels,
                               spec.decoder, spec.num_classes)

    def forward(self, image, training=False, trace=None):
        """image (N,3,H,W), H and W divisible by 32 -> logits (N,K,H,W).
        `trace`, if given, collects the stream count entering each stage."""
        pyramid = self.backbone.encode(image, training)
        return self.decoder(pyramid, training, trace)

    def __call__(self, image, training=False):
        return self.forward(image, training)

    def named_params(self):
        yield from self.backbone.named_params("backbone")
        yield from self.decoder.named_params("decoder")

    def parameter_table(self):
        table = {}
        for name, t in self.named_params():
            if name in table:
                raise ValidationError(f"duplicate parameter name {name}")
            table[name] = t
        return table

    def trainable_params(self):
        return [t for _, t in self.named_params() if t.requires_grad]

    def num_elements(self):
        return sum(t.data.size for _, t in self.named_params())

    def fingerprint(self):
        return self.spec.fingerprint()

    def dump_feature_maps(self, image, out_dir):
        """Write one grayscale PGM per stream at the adapter output.

        Each file holds the channel-mean map, min-max normalized to 8 bits;
        a constant map is pinned to the mid-gray value 128. Files are named
        stride-<s>.pgm.
        """
        if not os.path.isdir(out_dir):
            raise ValidationError(f"output directory does not exist: {out_dir}")
        pyramid = self.backbone.encode(image)
        streams = self.decoder.adapters(pyramid)
        written = []
        for (stride, _), stream in zip(pyramid.levels, streams):
            mean_map = stream.data[0].mean(axis=0)
            lo, hi = float(mean_map.min()), float(mean_map.max())
            if hi - lo == 0.0:
                gray = np.full(mean_map.shape, 128, dtype=np.uint8)
            else:
                gray = np.clip(np.round((mean_map - lo) / (hi - lo) * 255.0),
                               0, 255).astype(np.uint8)
            path = os.path.join(out_dir, f"stride-{stride}.pgm")
            write_pgm(path, gray)
            written.append(path)
        return written


def build_model(spec, seed):
    """Deterministic build: one PCG64 stream initializes the backbone first,
    then the decoder, so build_backbone(spec.backbone, seed) reproduces the
    encoder exactly."""
    if not isinstance(spec, ArchitectureSpec):
        raise ValidationError(f"build_model expects an ArchitectureSpec, got {type(spec).__name__}")
    return SegmentationModel(spec, np.random.default_rng(seed))


def predict_labels(model, image):
    """Argmax class map (N,H,W) int32 from a forward pass without a tape."""
    logits = model.forward(image, training=False)
    return logits.data.argmax(axis=1).astype(np.int32)


def as_image_tensor(array):
    """Stack an (3,H,W) or (N,3,H,W) float array into a model input tensor."""
    arr = np.asarray(array, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    return Tensor(arr)
