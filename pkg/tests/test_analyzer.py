"""Cost model: closed-form counts vs built models, scaling laws, ratios."""

import numpy as np
import pytest

from revseg.analyzer import analyze, compare, format_table
from revseg.arch import (ArchitectureSpec, BackboneSpec, DecoderSpec,
                         default_spec, variant_spec)
from revseg.errors import ValidationError
from revseg.network import build_model


def random_spec(rng):
    variant = bool(rng.integers(0, 2))
    n = 5 if variant else 4
    backbone = BackboneSpec(
        stage_channels=tuple(int(rng.integers(4, 24)) for _ in range(4)),
        blocks_per_stage=tuple(int(rng.integers(1, 3)) for _ in range(4)),
        stem_channels=int(rng.integers(4, 16)),
        stem_stride=2 if variant else 4,
        uses_bottleneck=bool(rng.integers(0, 2)))
    decoder = DecoderSpec(
        stream_widths=tuple(int(rng.integers(4, 24)) for _ in range(n)),
        blocks_per_stage=tuple(1 for _ in range(n)))
    return ArchitectureSpec(backbone=backbone, decoder=decoder,
                            num_classes=int(rng.integers(2, 12)),
                            variant_extra_stream=variant).validate()


def test_single_conv_closed_form_param_count():
    # a 1x1 conv 256->48 with bias must be counted as 12,336 params
    from revseg.analyzer import _walk
    spec = ArchitectureSpec(
        backbone=BackboneSpec(stage_channels=(256, 8, 8, 8)),
        decoder=DecoderSpec(stream_widths=(48, 8, 8, 8),
                            blocks_per_stage=(1, 1, 1, 1)),
        num_classes=2).validate()
    adapter0 = next(r for r in _walk(spec, (64, 64))
                    if r.module == "decoder.adapters" and r.kind == "conv")
    assert adapter0.params == 12336


def test_param_count_equals_built_model_for_10_random_specs():
    rng = np.random.default_rng(99)
    for _ in range(10):
        spec = random_spec(rng)
        report = analyze(spec, (64, 64))
        model = build_model(spec, seed=0)
        assert report.total_params == model.num_elements()
        assert report.trainable_params == sum(
            t.data.size for t in model.trainable_params())


def test_param_count_matches_pinned_defaults():
    for spec in (default_spec(), variant_spec()):
        model = build_model(spec, seed=1)
        assert analyze(spec, (64, 64)).total_params == model.num_elements()


def test_doubling_input_multiplies_macs_by_4():
    spec = default_spec()
    small = analyze(spec, (64, 64))
    big = analyze(spec, (128, 128))
    assert big.macs == 4 * small.macs


def test_monotonic_in_channel_width():
    base = default_spec()
    wider = ArchitectureSpec(
        backbone=BackboneSpec(stage_channels=(32, 32, 64, 128)),
        decoder=base.decoder, num_classes=base.num_classes).validate()
    assert analyze(wider, (64, 64)).total_params > analyze(base, (64, 64)).total_params


def test_self_comparison_ratios_are_one():
    result = compare(default_spec(), default_spec(), (64, 64))
    for value in result["ratios_b_over_a"].values():
        assert value == pytest.approx(1.0)


def test_ratio_symmetry():
    a, b = default_spec(), variant_spec()
    fwd = compare(a, b, (64, 64))["ratios_b_over_a"]
    rev = compare(b, a, (64, 64))["ratios_b_over_a"]
    for q in fwd:
        assert fwd[q] == pytest.approx(1.0 / rev[q])


def test_variant_activation_ratio_in_parity_band():
    result = compare(default_spec(), variant_spec(), (64, 64))
    ratio = result["ratios_b_over_a"]["activation_bytes"]
    assert 0.8 <= ratio <= 1.25


def test_training_activation_independent_of_backbone_depth():
    shallow = default_spec()
    deep = ArchitectureSpec(
        backbone=BackboneSpec(blocks_per_stage=(4, 4, 4, 4)),
        decoder=shallow.decoder, num_classes=shallow.num_classes).validate()
    a = analyze(shallow, (64, 64))
    b = analyze(deep, (64, 64))
    assert a.activation_bytes == b.activation_bytes
    assert b.total_params > a.total_params


def test_breakdown_sums_to_totals():
    report = analyze(variant_spec(), (64, 64))
    assert sum(m["params"] for m in report.per_module.values()) == report.total_params
    assert sum(m["trainable_params"] for m in report.per_module.values()) \
        == report.trainable_params
    assert sum(m["macs"] for m in report.per_module.values()) == report.macs
    assert sum(m["activation_bytes"] for m in report.per_module.values()) \
        == report.activation_bytes


def test_total_is_trainable_plus_frozen():
    report = analyze(default_spec(), (64, 64))
    frozen = report.total_params - report.trainable_params
    assert frozen > 0
    model = build_model(default_spec(), seed=0)
    not_trainable = sum(t.data.size for _, t in model.named_params()
                        if not t.requires_grad)
    assert frozen == not_trainable


def test_rejects_indivisible_input():
    with pytest.raises(ValidationError):
        analyze(default_spec(), (60, 64))


def test_format_table_contains_totals():
    report = analyze(default_spec(), (64, 64))
    text = format_table(report)
    assert "total" in text
    assert f"{report.total_params:,}" in text
