"""Frozen multi-scale encoder.

A miniature residual classifier: a two-convolution stem (net stride 4, or 2
in the variant) followed by four residual stages whose outputs form the
feature pyramid at strides 4/8/16/32 (the variant prepends the stem output
at stride 2). All parameters are created frozen and batch norm always runs
on its stored running statistics, so an encode pass records nothing on an
open tape and the pyramid is bit-reproducible.
"""

from dataclasses import dataclass

import numpy as np

from . import ops
from .engine import Tensor, set_frozen
from .errors import ArtifactError, ValidationError
from .layers import BasicBlock, BatchNorm2d, Bottleneck, Conv2d


@dataclass
class FeaturePyramid:
    """Ordered (stride, tensor) levels, strides strictly doubling."""
    levels: list
    input_size: tuple

    def __post_init__(self):
        strides = [s for s, _ in self.levels]
        for a, b in zip(strides, strides[1:]):
            if b != 2 * a:
                raise ValidationError(f"pyramid strides must double: {strides}")

    @property
    def strides(self):
        return tuple(s for s, _ in self.levels)

    @property
    def channels(self):
        return tuple(t.shape[1] for _, t in self.levels)

    def tensors(self):
        return [t for _, t in self.levels]


class Stem:
    """Two 3x3 convolutions; stride pattern (2,2) for net stride 4 or (1,2)
    for the variant's net stride 2."""

    def __init__(self, rng, channels, net_stride, frozen):
        first_stride = 2 if net_stride == 4 else 1
        self.conv1 = Conv2d(rng, 3, channels, 3, stride=first_stride, bias=False, frozen=frozen)
        self.bn1 = BatchNorm2d(channels, frozen=frozen, eval_only=True)
        self.conv2 = Conv2d(rng, channels, channels, 3, stride=2, bias=False, frozen=frozen)
        self.bn2 = BatchNorm2d(channels, frozen=frozen, eval_only=True)

    def __call__(self, x, training=False):
        y = ops.relu(self.bn1(self.conv1(x), training))
        return ops.relu(self.bn2(self.conv2(y), training))

    def named_params(self, prefix):
        yield from self.conv1.named_params(prefix + ".conv1")
        yield from self.bn1.named_params(prefix + ".bn1")
        yield from self.conv2.named_params(prefix + ".conv2")
        yield from self.bn2.named_params(prefix + ".bn2")


class Backbone:
    def __init__(self, spec, rng):
        spec.validate()
        self.spec = spec
        self.stem = Stem(rng, spec.stem_channels, spec.stem_stride, frozen=True)
        block_cls = Bottleneck if spec.uses_bottleneck else BasicBlock
        self.stages = []
        cin = spec.stem_channels
        for i, (cout, depth) in enumerate(zip(spec.stage_channels, spec.blocks_per_stage)):
            # stage 1 only downsamples when the stem stopped at stride 2
            first_stride = 2 if (i > 0 or spec.stem_stride == 2) else 1
            blocks = []
            for b in range(depth):
                stride = first_stride if b == 0 else 1
                blocks.append(block_cls(rng, cin, cout, stride=stride,
                                        frozen=True, eval_only_bn=True))
                cin = cout
            self.stages.append(blocks)

    def encode(self, image, training=False):
        """Map an (N,3,H,W) image to the feature pyramid. H and W must be
        divisible by 32."""
        if not isinstance(image, Tensor) or image.data.ndim != 4 or image.shape[1] != 3:
            got = tuple(image.shape) if isinstance(image, Tensor) else type(image).__name__
            raise ValidationError(f"encode expects an (N,3,H,W) tensor, got {got}")
        n, _, h, w = image.shape
        if h % 32 != 0 or w % 32 != 0:
            raise ValidationError(
                f"input size {h}x{w} not divisible by the required divisor 32")
        x = self.stem(image, training)
        levels = []
        if self.spec.stem_stride == 2:
            levels.append((2, x))
        stride = 4
        for blocks in self.stages:
            for block in blocks:
                x = block(x, training)
            levels.append((stride, x))
            stride *= 2
        return FeaturePyramid(levels, (h, w))

    def named_params(self, prefix="backbone"):
        yield from self.stem.named_params(prefix + ".stem")
        for i, blocks in enumerate(self.stages):
            for b, block in enumerate(blocks):
                yield from block.named_params(f"{prefix}.stage{i + 1}.block{b + 1}")

    def parameter_table(self, prefix="backbone"):
        table = {}
        for name, t in self.named_params(prefix):
            if name in table:
                raise ValidationError(f"duplicate parameter name {name}")
            table[name] = t
        return table


def build_backbone(spec, seed):
    """He-initialized encoder with every parameter frozen."""
    return Backbone(spec, np.random.default_rng(seed))


def load_pretrained(backbone, checkpoint, prefix="backbone"):
    """Overwrite the encoder's parameters from a checkpoint.

    Names and shapes must match the encoder's table exactly; every missing,
    extra, or shape-mismatched entry is listed before anything is mutated.
    Frozen flags are taken from the checkpoint.
    """
    table = backbone.parameter_table(prefix)
    entries = {e.name: e for e in checkpoint.entries}
    problems = []
    for name in sorted(set(table) - set(entries)):
        problems.append(f"missing from checkpoint: {name}")
    for name in sorted(set(entries) - set(table)):
        problems.append(f"not in encoder: {name}")
    for name in sorted(set(table) & set(entries)):
        want = tuple(table[name].shape)
        got = tuple(entries[name].array.shape)
        if want != got:
            problems.append(f"shape mismatch for {name}: encoder {want}, checkpoint {got}")
    if problems:
        raise ArtifactError("pretrained load rejected:\n  " + "\n  ".join(problems))
    for name, tensor in table.items():
        entry = entries[name]
        tensor.data[:] = entry.array
        set_frozen(tensor, entry.frozen)
