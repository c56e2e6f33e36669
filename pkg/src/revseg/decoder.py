"""Reverse-HRNet decoder pieces.

Streams run highest resolution first. Each stage applies residual blocks per
stream and then an all-to-all fusion: contributions from lower-resolution
streams arrive through a 1x1 convolution followed by a bilinear upsample,
contributions from higher-resolution streams through a chain of stride-2 3x3
convolutions (BN+ReLU between chain links, nothing after the last), and the
sum is passed through ReLU. Between stages the lowest-resolution stream is
1x1-convolved, upsampled, added into its neighbour (no ReLU), and dropped.
Contributions are summed in stream order, which pins the float rounding.

Initialization: decoder residual blocks zero-init their second BN gamma and
the fusion/merge/head convolutions use a damped He scale (0.25). The fusion
sums are not renormalized anywhere, so undamped initialization would grow
activations multiplicatively per stage and destabilize the first training
steps.
"""

from . import ops
from .errors import ShapeError, ValidationError
from .layers import BasicBlock, BatchNorm2d, Conv2d


def _check_halving(streams):
    sizes = [tuple(s.shape[2:]) for s in streams]
    for k in range(len(sizes) - 1):
        (h0, w0), (h1, w1) = sizes[k], sizes[k + 1]
        if h0 != 2 * h1 or w0 != 2 * w1:
            raise ValidationError(
                f"stream resolutions must halve step by step, got {sizes}")


class AdapterBank:
    """One 1x1 convolution per pyramid level, mapping encoder channels onto
    the decoder stream widths."""

    def __init__(self, rng, level_channels, stream_widths):
        if len(level_channels) != len(stream_widths):
            raise ValidationError(
                f"{len(level_channels)} pyramid levels vs {len(stream_widths)} streams")
        self.level_channels = tuple(level_channels)
        self.convs = [Conv2d(rng, cin, cout, 1)
                      for cin, cout in zip(level_channels, stream_widths)]

    def __call__(self, pyramid):
        if len(pyramid.levels) != len(self.convs):
            raise ValidationError(
                f"pyramid has {len(pyramid.levels)} levels, adapters expect {len(self.convs)}")
        streams = []
        for i, (stride, feat) in enumerate(pyramid.levels):
            if feat.shape[1] != self.level_channels[i]:
                raise ShapeError(
                    f"adapter for level {i} (stride {stride}) expects {self.level_channels[i]} "
                    f"channels, pyramid has {feat.shape[1]}")
            streams.append(self.convs[i](feat))
        return streams

    def named_params(self, prefix):
        for i, conv in enumerate(self.convs):
            yield from conv.named_params(f"{prefix}.{i}")


class DownChain:
    """hops stride-2 3x3 convolutions taking a stream down `hops` octaves;
    the width maps to the target on the final link."""

    def __init__(self, rng, cin, cout, hops, weight_scale=1.0):
        self.convs = []
        self.bns = []
        for k in range(hops):
            last = k == hops - 1
            self.convs.append(Conv2d(rng, cin, cout if last else cin, 3,
                                     stride=2, bias=last,
                                     weight_scale=weight_scale if last else 1.0))
            self.bns.append(None if last else BatchNorm2d(cin))

    def __call__(self, x, training=False):
        for conv, bn in zip(self.convs, self.bns):
            x = conv(x)
            if bn is not None:
                x = ops.relu(bn(x, training))
        return x

    def named_params(self, prefix):
        for k, (conv, bn) in enumerate(zip(self.convs, self.bns)):
            yield from conv.named_params(f"{prefix}.conv{k + 1}")
            if bn is not None:
                yield from bn.named_params(f"{prefix}.bn{k + 1}")


class UpTransform:
    """1x1 convolution then bilinear upsample to the target stream's size."""

    def __init__(self, rng, cin, cout, weight_scale=1.0):
        self.conv = Conv2d(rng, cin, cout, 1, weight_scale=weight_scale)

    def __call__(self, x, out_hw):
        return ops.bilinear_resize(self.conv(x), out_hw[0], out_hw[1])

    def named_params(self, prefix):
        yield from self.conv.named_params(prefix + ".conv")


class FusionUnit:
    """All-to-all exchange: output stream i is ReLU of the sum over j of
    T[j->i](stream j), with T[i->i] the identity."""

    DAMP = 0.25  # keeps the unnormalized sum identity-dominated at init

    def __init__(self, rng, widths):
        self.widths = tuple(widths)
        n = len(widths)
        self.transforms = {}
        for i in range(n):
            for j in range(n):
                if j == i:
                    continue
                if j > i:   # lower resolution -> upsample into i
                    self.transforms[(j, i)] = UpTransform(rng, widths[j], widths[i],
                                                          weight_scale=self.DAMP)
                else:       # higher resolution -> chained stride-2 convs
                    self.transforms[(j, i)] = DownChain(rng, widths[j], widths[i],
                                                        hops=i - j, weight_scale=self.DAMP)

    def __call__(self, streams, training=False):
        if len(streams) != len(self.widths):
            raise ValidationError(f"fusion built for {len(self.widths)} streams, got {len(streams)}")
        _check_halving(streams)
        outs = []
        for i, target in enumerate(streams):
            hw = tuple(target.shape[2:])
            acc = None
            for j, source in enumerate(streams):
                if j == i:
                    contrib = source
                elif j > i:
                    contrib = self.transforms[(j, i)](source, hw)
                else:
                    contrib = self.transforms[(j, i)](source, training)
                acc = contrib if acc is None else ops.add(acc, contrib)
            outs.append(ops.relu(acc))
        return outs

    def named_params(self, prefix):
        for (j, i), tf in sorted(self.transforms.items()):
            yield from tf.named_params(f"{prefix}.from{j}_to{i}")


class MergeUnit:
    """Fold the lowest-resolution stream into its neighbour and drop it:
    neighbour + upsample(1x1 conv(lowest)), without ReLU."""

    def __init__(self, rng, low_width, into_width):
        self.conv = Conv2d(rng, low_width, into_width, 1, weight_scale=FusionUnit.DAMP)

    def __call__(self, streams):
        if len(streams) < 2:
            raise ValidationError("merge needs at least two streams")
        _check_halving(streams)
        low = streams[-1]
        target = streams[-2]
        hw = tuple(target.shape[2:])
        lifted = ops.bilinear_resize(self.conv(low), hw[0], hw[1])
        return streams[:-2] + [ops.add(target, lifted)]

    def named_params(self, prefix):
        yield from self.conv.named_params(prefix + ".conv")


class DecoderStage:
    """`blocks` residual blocks independently per stream, then one fusion."""

    def __init__(self, rng, widths, blocks):
        if blocks < 1:
            raise ValidationError(f"a stage needs at least one block, got {blocks}")
        self.blocks = [[BasicBlock(rng, w, w, zero_init_residual=True)
                        for _ in range(blocks)] for w in widths]
        self.fuse = FusionUnit(rng, widths)

    def __call__(self, streams, training=False):
        if len(streams) != len(self.blocks):
            raise ValidationError(f"stage built for {len(self.blocks)} streams, got {len(streams)}")
        worked = []
        for stream, chain in zip(streams, self.blocks):
            for block in chain:
                stream = block(stream, training)
            worked.append(stream)
        return self.fuse(worked, training)

    def named_params(self, prefix):
        for s, chain in enumerate(self.blocks):
            for b, block in enumerate(chain):
                yield from block.named_params(f"{prefix}.stream{s}.block{b + 1}")
        yield from self.fuse.named_params(f"{prefix}.fuse")


class SegmentationHead:
    """1x1 convolution to class logits, upsampled to the full input size."""

    def __init__(self, rng, cin, num_classes):
        self.conv = Conv2d(rng, cin, num_classes, 1, weight_scale=FusionUnit.DAMP)

    def __call__(self, stream, out_size):
        logits = self.conv(stream)
        return ops.bilinear_resize(logits, out_size[0], out_size[1])

    def named_params(self, prefix):
        yield from self.conv.named_params(prefix + ".conv")


class Decoder:
    """Stage schedule: with n initial streams, run n-1 (stage, merge) pairs
    and one final single-stream stage, then the head."""

    def __init__(self, rng, level_channels, spec, num_classes):
        widths = spec.stream_widths
        n = len(widths)
        if len(level_channels) != n:
            raise ValidationError(
                f"decoder configured for {n} streams but pyramid has {len(level_channels)} levels")
        self.adapters = AdapterBank(rng, level_channels, widths)
        self.stages = []
        self.merges = []
        for s in range(n):
            active = widths[:n - s]
            self.stages.append(DecoderStage(rng, active, spec.blocks_per_stage[s]))
            if len(active) > 1:
                self.merges.append(MergeUnit(rng, active[-1], active[-2]))
        self.head = SegmentationHead(rng, widths[0], num_classes)

    def __call__(self, pyramid, training=False, trace=None):
        streams = self.adapters(pyramid)
        for s, stage in enumerate(self.stages):
            if trace is not None:
                trace.append(len(streams))
            streams = stage(streams, training)
            if s < len(self.merges):
                streams = self.merges[s](streams)
        return self.head(streams[0], pyramid.input_size)

    def named_params(self, prefix="decoder"):
        yield from self.adapters.named_params(prefix + ".adapters")
        for s, stage in enumerate(self.stages):
            yield from stage.named_params(f"{prefix}.stage{s + 1}")
        for m, merge in enumerate(self.merges):
            yield from merge.named_params(f"{prefix}.merge{m + 1}")
        yield from self.head.named_params(prefix + ".head")
