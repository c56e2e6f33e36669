"""Declarative architecture descriptions and the pinned desk-scale defaults.

An ArchitectureSpec pins everything a model build needs: the encoder stage
widths and depths, the stem stride (4 standard, 2 for the extra
half-resolution-stream variant), the decoder stream widths and per-stage
block counts, and the class count. Its canonical JSON serialization is
hashed into the checkpoint fingerprint.
"""

import hashlib
import json
from dataclasses import dataclass, field

from .errors import ValidationError

# Total decoder blocks in the pinned standard config; variant configs must
# stay strictly below this ("reduced modules" contract).
STANDARD_TOTAL_BLOCKS = 8


@dataclass(frozen=True)
class BackboneSpec:
    stage_channels: tuple = (16, 32, 64, 128)
    blocks_per_stage: tuple = (1, 1, 1, 1)
    stem_channels: int = 16
    stem_stride: int = 4           # 4 standard, 2 variant
    uses_bottleneck: bool = False

    def validate(self):
        if len(self.stage_channels) != 4 or len(self.blocks_per_stage) != 4:
            raise ValidationError("backbone needs exactly four stages")
        if any(c <= 0 for c in self.stage_channels):
            raise ValidationError(f"stage channels must be positive: {self.stage_channels}")
        if any(b <= 0 for b in self.blocks_per_stage):
            raise ValidationError(f"blocks per stage must be positive: {self.blocks_per_stage}")
        if self.stem_channels <= 0:
            raise ValidationError(f"stem channels must be positive: {self.stem_channels}")
        if self.stem_stride not in (2, 4):
            raise ValidationError(f"stem stride must be 2 or 4, got {self.stem_stride}")

    @property
    def pyramid_strides(self):
        strides = (4, 8, 16, 32)
        return (2,) + strides if self.stem_stride == 2 else strides

    @property
    def pyramid_channels(self):
        chans = tuple(self.stage_channels)
        return (self.stem_channels,) + chans if self.stem_stride == 2 else chans


@dataclass(frozen=True)
class DecoderSpec:
    stream_widths: tuple = (48, 96, 192, 384)
    blocks_per_stage: tuple = (2, 2, 2, 2)

    def validate(self, num_streams):
        if len(self.stream_widths) != num_streams:
            raise ValidationError(
                f"decoder needs {num_streams} stream widths (one per pyramid level), "
                f"got {len(self.stream_widths)}")
        if any(w <= 0 for w in self.stream_widths):
            raise ValidationError(f"stream widths must be positive: {self.stream_widths}")
        # one stage per stream transition plus the final head stage
        if len(self.blocks_per_stage) != num_streams:
            raise ValidationError(
                f"decoder needs {num_streams} stage block counts, got {len(self.blocks_per_stage)}")
        if any(b < 1 for b in self.blocks_per_stage):
            raise ValidationError(f"blocks per stage must be >= 1: {self.blocks_per_stage}")


@dataclass(frozen=True)
class ArchitectureSpec:
    backbone: BackboneSpec = field(default_factory=BackboneSpec)
    decoder: DecoderSpec = field(default_factory=DecoderSpec)
    num_classes: int = 11
    variant_extra_stream: bool = False

    def validate(self):
        self.backbone.validate()
        if self.num_classes < 2:
            raise ValidationError(f"need at least 2 classes, got {self.num_classes}")
        expected_streams = 5 if self.variant_extra_stream else 4
        if self.variant_extra_stream and self.backbone.stem_stride != 2:
            raise ValidationError("variant_extra_stream requires a stride-2 stem")
        if not self.variant_extra_stream and self.backbone.stem_stride != 4:
            raise ValidationError("standard mode requires a stride-4 stem")
        self.decoder.validate(expected_streams)
        if self.variant_extra_stream and \
                sum(self.decoder.blocks_per_stage) >= STANDARD_TOTAL_BLOCKS:
            raise ValidationError(
                f"variant must use strictly fewer total blocks than the standard "
                f"config ({STANDARD_TOTAL_BLOCKS}), got {sum(self.decoder.blocks_per_stage)}")
        return self

    @property
    def num_streams(self):
        return 5 if self.variant_extra_stream else 4

    def to_dict(self):
        return {
            "backbone": {
                "stage_channels": list(self.backbone.stage_channels),
                "blocks_per_stage": list(self.backbone.blocks_per_stage),
                "stem_channels": self.backbone.stem_channels,
                "stem_stride": self.backbone.stem_stride,
                "uses_bottleneck": self.backbone.uses_bottleneck,
            },
            "decoder": {
                "stream_widths": list(self.decoder.stream_widths),
                "blocks_per_stage": list(self.decoder.blocks_per_stage),
            },
            "num_classes": self.num_classes,
            "variant_extra_stream": self.variant_extra_stream,
        }

    @classmethod
    def from_dict(cls, d):
        allowed = {"backbone", "decoder", "num_classes", "variant_extra_stream"}
        _reject_unknown(d, allowed, "arch")
        bd = d.get("backbone", {})
        _reject_unknown(bd, {"stage_channels", "blocks_per_stage", "stem_channels",
                             "stem_stride", "uses_bottleneck"}, "arch.backbone")
        dd = d.get("decoder", {})
        _reject_unknown(dd, {"stream_widths", "blocks_per_stage"}, "arch.decoder")
        variant = bool(d.get("variant_extra_stream", False))
        backbone = BackboneSpec(
            stage_channels=tuple(bd.get("stage_channels", (16, 32, 64, 128))),
            blocks_per_stage=tuple(bd.get("blocks_per_stage", (1, 1, 1, 1))),
            stem_channels=int(bd.get("stem_channels", 16)),
            stem_stride=int(bd.get("stem_stride", 2 if variant else 4)),
            uses_bottleneck=bool(bd.get("uses_bottleneck", False)),
        )
        dec_defaults = variant_spec().decoder if variant else DecoderSpec()
        decoder = DecoderSpec(
            stream_widths=tuple(dd.get("stream_widths", dec_defaults.stream_widths)),
            blocks_per_stage=tuple(dd.get("blocks_per_stage", dec_defaults.blocks_per_stage)),
        )
        spec = cls(backbone=backbone, decoder=decoder,
                   num_classes=int(d.get("num_classes", 11)),
                   variant_extra_stream=variant)
        return spec.validate()

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def fingerprint(self):
        """32-byte digest of the canonical serialization."""
        return hashlib.sha256(self.canonical_json().encode()).digest()


def _reject_unknown(d, allowed, where):
    if not isinstance(d, dict):
        raise ValidationError(f"{where} must be a JSON object")
    unknown = set(d) - allowed
    if unknown:
        raise ValidationError(f"unknown keys in {where}: {sorted(unknown)}")


def default_spec(num_classes=11):
    """Pinned standard desk-scale configuration."""
    return ArchitectureSpec(num_classes=num_classes).validate()


def variant_spec(num_classes=11):
    """Pinned extra half-resolution-stream configuration.

    The extra stream runs at stride 2 with width 8 and every stage holds a
    single block, keeping the training activation footprint on par with the
    standard config while adding a stage.
    """
    return ArchitectureSpec(
        backbone=BackboneSpec(stem_stride=2),
        decoder=DecoderSpec(stream_widths=(8, 48, 96, 192, 384),
                            blocks_per_stage=(1, 1, 1, 1, 1)),
        num_classes=num_classes,
        variant_extra_stream=True,
    ).validate()
