"""Closed-form cost model for an ArchitectureSpec.

Counts parameters, multiply-accumulates, and a training-mode activation
footprint purely from the spec, without building a model (tests cross-check
the parameter count against a real build). Accounting rules, pinned:

  * conv params = Cout*(Cin*kh*kw) (+ Cout with bias); conv MACs are the
    bias-free params times the output area.
  * batch norm holds 4*C parameters of which 2*C (gamma, beta) train.
  * bilinear resize costs 4 MACs per output element; BN/ReLU/add cost none.
  * activation bytes: 4 bytes per element of every operator output on the
    trainable path (adapters, decoder blocks, fusions, merges, head) plus
    the pyramid interface tensors, for a single image. During training all
    of these stay live for the backward pass, so the peak is their sum.
    Frozen backbone internals run outside the tape and are excluded, which
    makes the figure independent of backbone depth.
  * training memory = activations + 4 bytes per parameter + 8 more per
    trainable parameter (gradient and momentum).
"""

from dataclasses import dataclass, field

from .errors import ValidationError


@dataclass
class LayerCost:
    module: str
    kind: str
    params: int = 0
    trainable: int = 0
    macs: int = 0
    out_elems: int = 0
    on_tape: bool = False


@dataclass
class CostReport:
    input_size: tuple
    total_params: int
    trainable_params: int
    macs: int
    activation_bytes: int
    training_memory_bytes: int
    per_module: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "input_size": list(self.input_size),
            "total_params": self.total_params,
            "trainable_params": self.trainable_params,
            "macs": self.macs,
            "activation_bytes": self.activation_bytes,
            "training_memory_bytes": self.training_memory_bytes,
            "per_module": self.per_module,
        }


def _conv(records, module, cin, cout, k, oh, ow, bias, on_tape, trainable):
    weight = cout * cin * k * k
    params = weight + (cout if bias else 0)
    records.append(LayerCost(module, "conv", params=params,
                             trainable=params if trainable else 0,
                             macs=weight * oh * ow,
                             out_elems=cout * oh * ow, on_tape=on_tape))


def _bn(records, module, c, oh, ow, on_tape, trainable):
    records.append(LayerCost(module, "bn", params=4 * c,
                             trainable=2 * c if trainable else 0,
                             out_elems=c * oh * ow, on_tape=on_tape))


def _plain(records, module, kind, elems, on_tape, macs=0):
    records.append(LayerCost(module, kind, macs=macs, out_elems=elems, on_tape=on_tape))


def _resize(records, module, c, oh, ow, on_tape):
    _plain(records, module, "resize", c * oh * ow, on_tape, macs=4 * c * oh * ow)


def _basic_block(records, module, cin, cout, stride, oh, ow, on_tape, trainable):
    _conv(records, module, cin, cout, 3, oh, ow, False, on_tape, trainable)
    _bn(records, module, cout, oh, ow, on_tape, trainable)
    _plain(records, module, "relu", cout * oh * ow, on_tape)
    _conv(records, module, cout, cout, 3, oh, ow, False, on_tape, trainable)
    _bn(records, module, cout, oh, ow, on_tape, trainable)
    if stride != 1 or cin != cout:
        _conv(records, module, cin, cout, 1, oh, ow, False, on_tape, trainable)
        _bn(records, module, cout, oh, ow, on_tape, trainable)
    _plain(records, module, "add", cout * oh * ow, on_tape)
    _plain(records, module, "relu", cout * oh * ow, on_tape)


def _bottleneck(records, module, cin, cout, stride, ih, iw, oh, ow, on_tape, trainable):
    mid = max(1, cout // 4)
    _conv(records, module, cin, mid, 1, ih, iw, False, on_tape, trainable)
    _bn(records, module, mid, ih, iw, on_tape, trainable)
    _plain(records, module, "relu", mid * ih * iw, on_tape)
    _conv(records, module, mid, mid, 3, oh, ow, False, on_tape, trainable)
    _bn(records, module, mid, oh, ow, on_tape, trainable)
    _plain(records, module, "relu", mid * oh * ow, on_tape)
    _conv(records, module, mid, cout, 1, oh, ow, False, on_tape, trainable)
    _bn(records, module, cout, oh, ow, on_tape, trainable)
    if stride != 1 or cin != cout:
        _conv(records, module, cin, cout, 1, oh, ow, False, on_tape, trainable)
        _bn(records, module, cout, oh, ow, on_tape, trainable)
    _plain(records, module, "add", cout * oh * ow, on_tape)
    _plain(records, module, "relu", cout * oh * ow, on_tape)


def _walk(spec, input_size):
    spec.validate()
    h, w = input_size
    if h % 32 != 0 or w % 32 != 0:
        raise ValidationError(f"input size {h}x{w} not divisible by 32")
    records = []
    bb = spec.backbone
    sc = bb.stem_channels

    # stem: two 3x3 convs, stride pattern (2,2) or (1,2)
    s1h, s1w = (h // 2, w // 2) if bb.stem_stride == 4 else (h, w)
    _conv(records, "backbone.stem", 3, sc, 3, s1h, s1w, False, False, False)
    _bn(records, "backbone.stem", sc, s1h, s1w, False, False)
    _plain(records, "backbone.stem", "relu", sc * s1h * s1w, False)
    s2h, s2w = s1h // 2, s1w // 2
    _conv(records, "backbone.stem", sc, sc, 3, s2h, s2w, False, False, False)
    _bn(records, "backbone.stem", sc, s2h, s2w, False, False)
    _plain(records, "backbone.stem", "relu", sc * s2h * s2w, False)

    pyramid = []  # (stride, channels, oh, ow)
    if bb.stem_stride == 2:
        pyramid.append((2, sc, s2h, s2w))
    cin = sc
    ch, cw = s2h, s2w
    stride_out = 4
    for i, (cout, depth) in enumerate(zip(bb.stage_channels, bb.blocks_per_stage)):
        module = f"backbone.stage{i + 1}"
        first_stride = 2 if (i > 0 or bb.stem_stride == 2) else 1
        for b in range(depth):
            s = first_stride if b == 0 else 1
            ih, iw = ch, cw
            oh, ow = ch // s, cw // s
            if bb.uses_bottleneck:
                _bottleneck(records, module, cin, cout, s, ih, iw, oh, ow, False, False)
            else:
                _basic_block(records, module, cin, cout, s, oh, ow, False, False)
            cin, ch, cw = cout, oh, ow
        pyramid.append((stride_out, cout, ch, cw))
        stride_out *= 2

    for stride, c, oh, ow in pyramid:
        _plain(records, "backbone.pyramid", "feature", c * oh * ow, True)

    widths = spec.decoder.stream_widths
    res = [(oh, ow) for _, _, oh, ow in pyramid]
    for i, ((_, c, oh, ow), width) in enumerate(zip(pyramid, widths)):
        _conv(records, "decoder.adapters", c, width, 1, oh, ow, True, True, True)

    n = len(widths)
    for s in range(n):
        module = f"decoder.stage{s + 1}"
        active = widths[:n - s]
        for i, width in enumerate(active):
            oh, ow = res[i]
            for _ in range(spec.decoder.blocks_per_stage[s]):
                _basic_block(records, module, width, width, 1, oh, ow, True, True)
        # fusion
        for i, wi in enumerate(active):
            oh, ow = res[i]
            for j, wj in enumerate(active):
                if j == i:
                    continue
                if j > i:   # up path: 1x1 conv at source res, then resize
                    sh, sw = res[j]
                    _conv(records, module, wj, wi, 1, sh, sw, True, True, True)
                    _resize(records, module, wi, oh, ow, True)
                else:       # down path: chained stride-2 3x3 convs
                    sh, sw = res[j]
                    hops = i - j
                    for k in range(hops):
                        last = k == hops - 1
                        sh, sw = sh // 2, sw // 2
                        _conv(records, module, wj, wi if last else wj, 3,
                              sh, sw, last, True, True)
                        if not last:
                            _bn(records, module, wj, sh, sw, True, True)
                            _plain(records, module, "relu", wj * sh * sw, True)
            for _ in range(len(active) - 1):
                _plain(records, module, "add", wi * oh * ow, True)
            _plain(records, module, "relu", wi * oh * ow, True)
        if len(active) > 1:
            module = f"decoder.merge{s + 1}"
            low_w, into_w = active[-1], active[-2]
            lh, lw = res[len(active) - 1]
            th, tw = res[len(active) - 2]
            _conv(records, module, low_w, into_w, 1, lh, lw, True, True, True)
            _resize(records, module, into_w, th, tw, True)
            _plain(records, module, "add", into_w * th * tw, True)

    oh, ow = res[0]
    _conv(records, "decoder.head", widths[0], spec.num_classes, 1, oh, ow, True, True, True)
    _resize(records, "decoder.head", spec.num_classes, h, w, True)
    return records


def analyze(spec, input_size):
    """CostReport for one architecture at the given (H, W) input size."""
    records = _walk(spec, input_size)
    per_module = {}
    for r in records:
        m = per_module.setdefault(r.module, {
            "params": 0, "trainable_params": 0, "macs": 0, "activation_bytes": 0})
        m["params"] += r.params
        m["trainable_params"] += r.trainable
        m["macs"] += r.macs
        if r.on_tape:
            m["activation_bytes"] += 4 * r.out_elems
    total = sum(r.params for r in records)
    trainable = sum(r.trainable for r in records)
    activation = sum(4 * r.out_elems for r in records if r.on_tape)
    return CostReport(
        input_size=tuple(input_size),
        total_params=total,
        trainable_params=trainable,
        macs=sum(r.macs for r in records),
        activation_bytes=activation,
        training_memory_bytes=activation + 4 * total + 8 * trainable,
        per_module=per_module,
    )


def compare(spec_a, spec_b, input_size, name_a="a", name_b="b"):
    """Per-quantity b/a ratios between two architectures."""
    ra = analyze(spec_a, input_size)
    rb = analyze(spec_b, input_size)
    quantities = ("total_params", "trainable_params", "macs",
                  "activation_bytes", "training_memory_bytes")
    return {
        "names": {"a": name_a, "b": name_b},
        "input_size": list(input_size),
        "a": {q: getattr(ra, q) for q in quantities},
        "b": {q: getattr(rb, q) for q in quantities},
        "ratios_b_over_a": {q: getattr(rb, q) / getattr(ra, q) for q in quantities},
    }


def format_table(report):
    """Aligned plain-text rendering of a CostReport."""
    rows = [("module", "params", "trainable", "MMACs", "act KiB")]
    for module, m in report.per_module.items():
        rows.append((module, f"{m['params']:,}", f"{m['trainable_params']:,}",
                     f"{m['macs'] / 1e6:.2f}", f"{m['activation_bytes'] / 1024:.1f}"))
    rows.append(("total", f"{report.total_params:,}", f"{report.trainable_params:,}",
                 f"{report.macs / 1e6:.2f}", f"{report.activation_bytes / 1024:.1f}"))
    widths = [max(len(r[c]) for r in rows) for c in range(5)]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[c]) if c == 0 else cell.rjust(widths[c])
                               for c, cell in enumerate(row)))
        if i == 0 or i == len(rows) - 2:
            lines.append("  ".join("-" * widths[c] for c in range(5)))
    h, w = report.input_size
    lines.append(f"input {h}x{w}; training memory "
                 f"{report.training_memory_bytes / (1024 * 1024):.2f} MiB "
                 f"(activations + params + grad/momentum)")
    return "\n".join(lines)
