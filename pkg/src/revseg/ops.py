"""Differentiable operators over engine.Tensor.

The operator set is exactly what the segmentation model needs: conv2d,
bilinear_resize, batch_norm, relu, add, concat_channels, the mean per-pixel
softmax cross-entropy, and the small arithmetic helpers (mul, scale,
sum_all) used to compose test losses. Convolutions use zero padding; resizes
sample with half-pixel centers; there is no broadcasting anywhere.
"""

import numpy as np

from .engine import Tensor, record_op
from .errors import NumericError, ShapeError, ValidationError


def _require_tensor(name, t, rank=None):
    if not isinstance(t, Tensor):
        raise ValidationError(f"{name} must be a Tensor, got {type(t).__name__}")
    if rank is not None and t.data.ndim != rank:
        raise ShapeError(f"{name} must have rank {rank}, got shape {tuple(t.shape)}")
    return t


def _same_dtype(*tensors):
    dtypes = {t.dtype for t in tensors if t is not None}
    if len(dtypes) > 1:
        raise ValidationError(f"mixed dtypes are not allowed: {sorted(map(str, dtypes))}")


# ---------------------------------------------------------------------------
# convolution

def _im2col(x, kh, kw, stride, oh, ow):
    n, c, _, _ = x.shape
    if kh == 1 and kw == 1 and stride == 1:
        return x.reshape(n, c, oh * ow)
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride]
    return cols.reshape(n, c * kh * kw, oh * ow)


def _col2im(dcols, n, c, hp, wp, kh, kw, stride, oh, ow, dtype):
    if kh == 1 and kw == 1 and stride == 1:
        return dcols.reshape(n, c, hp, wp)
    dx = np.zeros((n, c, hp, wp), dtype=dtype)
    d6 = dcols.reshape(n, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += d6[:, :, i, j]
    return dx


def conv2d(input, weight, bias=None, stride=1, padding=0):
    """2-D cross-correlation with zero padding.

    input (N,Cin,H,W), weight (Cout,Cin,kh,kw), optional bias (Cout,).
    Output spatial size is floor((H + 2*padding - kh)/stride) + 1.
    """
    _require_tensor("input", input, 4)
    _require_tensor("weight", weight, 4)
    if bias is not None:
        _require_tensor("bias", bias, 1)
    _same_dtype(input, weight, bias)
    n, cin, h, w = input.shape
    cout, wcin, kh, kw = weight.shape
    if cin != wcin:
        raise ShapeError(
            f"conv2d: input channels {cin} (input shape {tuple(input.shape)}) do not "
            f"match weight channels {wcin} (weight shape {tuple(weight.shape)})")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValidationError(f"conv2d: kernel sides must be odd, got {kh}x{kw}")
    if not (isinstance(stride, int) and stride >= 1):
        raise ValidationError(f"conv2d: stride must be a positive int, got {stride!r}")
    if not (isinstance(padding, int) and padding >= 0):
        raise ValidationError(f"conv2d: padding must be a non-negative int, got {padding!r}")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeError(
            f"conv2d: padded input {h + 2 * padding}x{w + 2 * padding} smaller than kernel {kh}x{kw}")
    if bias is not None and bias.shape[0] != cout:
        raise ShapeError(
            f"conv2d: bias shape {tuple(bias.shape)} does not match {cout} output channels")
    if not np.isfinite(input.data).all() or not np.isfinite(weight.data).all() \
            or (bias is not None and not np.isfinite(bias.data).all()):
        raise NumericError("conv2d: non-finite input rejected")

    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if padding > 0:
        xp = np.pad(input.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = input.data
    cols = _im2col(xp, kh, kw, stride, oh, ow)          # (N, Cin*kh*kw, oh*ow)
    wmat = weight.data.reshape(cout, cin * kh * kw)
    out = np.matmul(wmat, cols)                          # (N, Cout, oh*ow)
    if bias is not None:
        out = out + bias.data[None, :, None]
    out = Tensor._wrap(out.reshape(n, cout, oh, ow))

    hp, wp = h + 2 * padding, w + 2 * padding
    has_bias = bias is not None

    def bw(g):
        gm = g.reshape(n, cout, oh * ow)
        dwmat = np.matmul(gm, cols.transpose(0, 2, 1)).sum(axis=0)
        dcols = np.matmul(wmat.T, gm)
        dxp = _col2im(dcols, n, cin, hp, wp, kh, kw, stride, oh, ow, g.dtype)
        dx = dxp[:, :, padding:padding + h, padding:padding + w] if padding > 0 else dxp
        db = gm.sum(axis=(0, 2)) if has_bias else None
        return dx, dwmat.reshape(weight.shape), db

    return record_op("conv2d", (input, weight, bias), out, bw)


# ---------------------------------------------------------------------------
# bilinear resize

def _interp_matrix(n_in, n_out, dtype):
    # Half-pixel centers: src = (i + 0.5) * n_in/n_out - 0.5, clamped.
    idx = np.arange(n_out)
    src = np.clip((idx + 0.5) * (n_in / n_out) - 0.5, 0.0, n_in - 1.0)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = (src - lo).astype(dtype)
    m = np.zeros((n_out, n_in), dtype=dtype)
    m[idx, lo] += 1.0 - frac
    m[idx, hi] += frac
    return m


def bilinear_resize(input, out_h, out_w):
    """Resize (N,C,H,W) to (N,C,out_h,out_w) with half-pixel-center sampling."""
    _require_tensor("input", input, 4)
    if not (isinstance(out_h, int) and out_h >= 1 and isinstance(out_w, int) and out_w >= 1):
        raise ValidationError(f"bilinear_resize: target size must be positive ints, got {out_h}x{out_w}")
    n, c, h, w = input.shape
    rows = _interp_matrix(h, out_h, input.data.dtype)     # (out_h, H)
    cols = _interp_matrix(w, out_w, input.data.dtype).T   # (W, out_w)
    out = Tensor._wrap(np.matmul(np.matmul(rows, input.data), cols))

    def bw(g):
        return (np.matmul(rows.T, np.matmul(g, cols.T)),)

    return record_op("bilinear_resize", (input,), out, bw)


# ---------------------------------------------------------------------------
# batch normalization

def batch_norm(input, gamma, beta, running_mean, running_var, mode="train",
               momentum=0.1, epsilon=1e-5):
    """Per-channel batch normalization over (N,H,W).

    Train mode normalizes with batch statistics and updates the running
    buffers in place: new = (1 - momentum) * old + momentum * batch, with the
    unbiased variance entering the running update. Eval mode uses the running
    statistics only. Gradients are defined for input, gamma and beta.
    """
    _require_tensor("input", input, 4)
    for name, t in (("gamma", gamma), ("beta", beta),
                    ("running_mean", running_mean), ("running_var", running_var)):
        _require_tensor(name, t, 1)
    _same_dtype(input, gamma, beta, running_mean, running_var)
    if mode not in ("train", "eval"):
        raise ValidationError(f"batch_norm: mode must be 'train' or 'eval', got {mode!r}")
    if not epsilon > 0:
        raise ValidationError(f"batch_norm: epsilon must be > 0, got {epsilon}")
    n, c, h, w = input.shape
    for name, t in (("gamma", gamma), ("beta", beta),
                    ("running_mean", running_mean), ("running_var", running_var)):
        if t.shape[0] != c:
            raise ShapeError(f"batch_norm: {name} shape {tuple(t.shape)} does not match {c} channels")

    x = input.data
    if mode == "train":
        m = n * h * w
        if m == 0:
            raise ValidationError("batch_norm: zero batch*spatial extent in train mode")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        inv = 1.0 / np.sqrt(var + epsilon)
        xhat = (x - mean[None, :, None, None]) * inv[None, :, None, None]
        var_unbiased = var * (m / (m - 1)) if m > 1 else var
        running_mean.data[:] = (1.0 - momentum) * running_mean.data + momentum * mean
        running_var.data[:] = (1.0 - momentum) * running_var.data + momentum * var_unbiased
        gdat = gamma.data
        out = Tensor._wrap(gdat[None, :, None, None] * xhat + beta.data[None, :, None, None])

        def bw(g):
            dbeta = g.sum(axis=(0, 2, 3))
            dgamma = (g * xhat).sum(axis=(0, 2, 3))
            gx = g * gdat[None, :, None, None]
            s1 = gx.sum(axis=(0, 2, 3), keepdims=True)
            s2 = (gx * xhat).sum(axis=(0, 2, 3), keepdims=True)
            dx = (inv[None, :, None, None] / m) * (m * gx - s1 - xhat * s2)
            return dx, dgamma, dbeta

        return record_op("batch_norm", (input, gamma, beta), out, bw)

    inv = 1.0 / np.sqrt(running_var.data + epsilon)
    xhat = (x - running_mean.data[None, :, None, None]) * inv[None, :, None, None]
    gdat = gamma.data
    out = Tensor._wrap(gdat[None, :, None, None] * xhat + beta.data[None, :, None, None])

    def bw_eval(g):
        dbeta = g.sum(axis=(0, 2, 3))
        dgamma = (g * xhat).sum(axis=(0, 2, 3))
        dx = g * (gdat * inv)[None, :, None, None]
        return dx, dgamma, dbeta

    return record_op("batch_norm", (input, gamma, beta), out, bw_eval)


# ---------------------------------------------------------------------------
# elementwise and structural ops

def relu(input):
    """Elementwise max(0, x); the subgradient at 0 is pinned to 0."""
    _require_tensor("input", input)
    mask = input.data > 0
    out = Tensor._wrap(np.where(mask, input.data, input.data.dtype.type(0)))

    def bw(g):
        return (g * mask,)

    return record_op("relu", (input,), out, bw)


def add(a, b):
    """Elementwise sum; shapes must match exactly (no broadcasting)."""
    _require_tensor("a", a)
    _require_tensor("b", b)
    _same_dtype(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {tuple(a.shape)} and {tuple(b.shape)} differ")
    out = Tensor._wrap(a.data + b.data)

    def bw(g):
        return g, g

    return record_op("add", (a, b), out, bw)


def mul(a, b):
    """Elementwise product; shapes must match exactly."""
    _require_tensor("a", a)
    _require_tensor("b", b)
    _same_dtype(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {tuple(a.shape)} and {tuple(b.shape)} differ")
    ad, bd = a.data, b.data
    out = Tensor._wrap(ad * bd)

    def bw(g):
        return g * bd, g * ad

    return record_op("mul", (a, b), out, bw)


def scale(input, factor):
    """Multiply by a Python scalar."""
    _require_tensor("input", input)
    f = input.data.dtype.type(factor)
    out = Tensor._wrap(input.data * f)

    def bw(g):
        return (g * f,)

    return record_op("scale", (input,), out, bw)


def sum_all(input):
    """Sum of all elements as a shape-(1,) tensor."""
    _require_tensor("input", input)
    out = Tensor._wrap(input.data.sum().reshape(1))
    shape = input.shape
    dtype = input.data.dtype

    def bw(g):
        return (np.full(shape, g[0], dtype=dtype),)

    return record_op("sum_all", (input,), out, bw)


def concat_channels(parts):
    """Concatenate (N,Ci,H,W) tensors along the channel axis, in order."""
    if not parts:
        raise ValidationError("concat_channels: need at least one tensor")
    for k, p in enumerate(parts):
        _require_tensor(f"parts[{k}]", p, 4)
    _same_dtype(*parts)
    n, _, h, w = parts[0].shape
    for k, p in enumerate(parts[1:], start=1):
        pn, _, ph, pw = p.shape
        if (pn, ph, pw) != (n, h, w):
            raise ShapeError(
                f"concat_channels: parts[{k}] shape {tuple(p.shape)} does not agree with "
                f"parts[0] shape {tuple(parts[0].shape)} on N,H,W")
    out = Tensor._wrap(np.concatenate([p.data for p in parts], axis=1))
    sizes = [p.shape[1] for p in parts]

    def bw(g):
        grads = []
        off = 0
        for cs in sizes:
            grads.append(g[:, off:off + cs])
            off += cs
        return tuple(grads)

    return record_op("concat_channels", tuple(parts), out, bw)


# ---------------------------------------------------------------------------
# loss

def softmax_cross_entropy_mean(logits, labels, ignore_index=255):
    """Mean over non-ignored pixels of -log softmax(logits)[label].

    logits (N,K,H,W); labels an integer array (N,H,W) with values in [0,K)
    or equal to ignore_index. Ignored pixels contribute nothing to the value
    or the gradient. The log-sum-exp uses max subtraction.
    """
    _require_tensor("logits", logits, 4)
    lab = np.asarray(labels)
    if not np.issubdtype(lab.dtype, np.integer):
        raise ValidationError(f"labels must be integers, got dtype {lab.dtype}")
    n, k, h, w = logits.shape
    if lab.shape != (n, h, w):
        raise ShapeError(
            f"labels shape {tuple(lab.shape)} does not match logits spatial shape {(n, h, w)}")
    mask = lab != ignore_index
    bad = mask & ((lab < 0) | (lab >= k))
    if bad.any():
        where = tuple(int(v) for v in np.argwhere(bad)[0])
        raise ValidationError(
            f"label {int(lab[where])} at (n,h,w)={where} outside [0,{k}) and not ignore_index")
    m = int(mask.sum())
    if m == 0:
        raise ValidationError("all pixels ignored: mean loss undefined")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    safe = np.where(mask, lab, 0)
    picked = np.take_along_axis(logp, safe[:, None], axis=1)[:, 0]
    total = -(picked * mask).sum()
    out = Tensor._wrap(total.reshape(1) / m)

    def bw(g):
        d = np.exp(logp)
        hit = np.take_along_axis(d, safe[:, None], axis=1) - 1.0
        np.put_along_axis(d, safe[:, None], hit, axis=1)
        d *= mask[:, None] * (g[0] / m)
        return (d,)

    return record_op("softmax_cross_entropy_mean", (logits,), out, bw)
