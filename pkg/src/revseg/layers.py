"""Parameterized building blocks: convolution, batch norm, residual blocks.

Layers hold their parameters as engine Tensors and expose named_params() so
models can assemble flat, deterministic parameter tables for checkpointing.
Convolution weights use He fan-in initialization; convs directly followed by
batch norm carry no bias.
"""

import numpy as np

from . import ops
from .engine import Tensor, set_frozen


def he_weight(rng, cout, cin, kh, kw, scale=1.0):
    fan_in = cin * kh * kw
    std = scale * np.sqrt(2.0 / fan_in)
    return rng.normal(0.0, std, size=(cout, cin, kh, kw)).astype(np.float32)


class Conv2d:
    def __init__(self, rng, cin, cout, kernel, stride=1, padding=None, bias=True,
                 frozen=False, weight_scale=1.0):
        if padding is None:
            padding = kernel // 2
        self.stride = stride
        self.padding = padding
        self.weight = Tensor(he_weight(rng, cout, cin, kernel, kernel, weight_scale))
        set_frozen(self.weight, frozen)
        if bias:
            self.bias = Tensor(np.zeros(cout, dtype=np.float32))
            set_frozen(self.bias, frozen)
        else:
            self.bias = None

    def __call__(self, x):
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def named_params(self, prefix):
        yield prefix + ".weight", self.weight
        if self.bias is not None:
            yield prefix + ".bias", self.bias


class BatchNorm2d:
    """Batch norm layer; eval_only layers (frozen backbone) always use the
    stored running statistics and never update them."""

    MOMENTUM = 0.1
    EPS = 1e-5

    def __init__(self, channels, frozen=False, eval_only=False, gamma_init=1.0):
        self.eval_only = eval_only
        self.gamma = Tensor(np.full(channels, gamma_init, dtype=np.float32))
        self.beta = Tensor(np.zeros(channels, dtype=np.float32))
        set_frozen(self.gamma, frozen)
        set_frozen(self.beta, frozen)
        self.running_mean = Tensor(np.zeros(channels, dtype=np.float32))
        self.running_var = Tensor(np.ones(channels, dtype=np.float32))
        for buf in (self.running_mean, self.running_var):
            buf.is_buffer = True
            set_frozen(buf, frozen)

    def __call__(self, x, training=False):
        mode = "train" if (training and not self.eval_only) else "eval"
        return ops.batch_norm(x, self.gamma, self.beta, self.running_mean,
                              self.running_var, mode=mode,
                              momentum=self.MOMENTUM, epsilon=self.EPS)

    def named_params(self, prefix):
        yield prefix + ".gamma", self.gamma
        yield prefix + ".beta", self.beta
        yield prefix + ".running_mean", self.running_mean
        yield prefix + ".running_var", self.running_var


class BasicBlock:
    """3x3 conv, BN, ReLU, 3x3 conv, BN, additive skip, ReLU. The skip path
    gets a 1x1 projection when the geometry or width changes. With
    zero_init_residual the second BN's gamma starts at 0 so the block is an
    identity at initialization, which keeps deep unnormalized fusion stacks
    from amplifying activations."""

    def __init__(self, rng, cin, cout, stride=1, frozen=False, eval_only_bn=False,
                 zero_init_residual=False):
        self.conv1 = Conv2d(rng, cin, cout, 3, stride=stride, bias=False, frozen=frozen)
        self.bn1 = BatchNorm2d(cout, frozen=frozen, eval_only=eval_only_bn)
        self.conv2 = Conv2d(rng, cout, cout, 3, bias=False, frozen=frozen)
        self.bn2 = BatchNorm2d(cout, frozen=frozen, eval_only=eval_only_bn,
                               gamma_init=0.0 if zero_init_residual else 1.0)
        if stride != 1 or cin != cout:
            self.proj_conv = Conv2d(rng, cin, cout, 1, stride=stride, bias=False, frozen=frozen)
            self.proj_bn = BatchNorm2d(cout, frozen=frozen, eval_only=eval_only_bn)
        else:
            self.proj_conv = None
            self.proj_bn = None

    def __call__(self, x, training=False):
        y = ops.relu(self.bn1(self.conv1(x), training))
        y = self.bn2(self.conv2(y), training)
        skip = x if self.proj_conv is None else self.proj_bn(self.proj_conv(x), training)
        return ops.relu(ops.add(y, skip))

    def named_params(self, prefix):
        yield from self.conv1.named_params(prefix + ".conv1")
        yield from self.bn1.named_params(prefix + ".bn1")
        yield from self.conv2.named_params(prefix + ".conv2")
        yield from self.bn2.named_params(prefix + ".bn2")
        if self.proj_conv is not None:
            yield from self.proj_conv.named_params(prefix + ".proj_conv")
            yield from self.proj_bn.named_params(prefix + ".proj_bn")


class Bottleneck:
    """1x1 reduce, 3x3, 1x1 expand residual block (mid width = cout // 4)."""

    def __init__(self, rng, cin, cout, stride=1, frozen=False, eval_only_bn=False):
        mid = max(1, cout // 4)
        self.conv1 = Conv2d(rng, cin, mid, 1, bias=False, frozen=frozen)
        self.bn1 = BatchNorm2d(mid, frozen=frozen, eval_only=eval_only_bn)
        self.conv2 = Conv2d(rng, mid, mid, 3, stride=stride, bias=False, frozen=frozen)
        self.bn2 = BatchNorm2d(mid, frozen=frozen, eval_only=eval_only_bn)
        self.conv3 = Conv2d(rng, mid, cout, 1, bias=False, frozen=frozen)
        self.bn3 = BatchNorm2d(cout, frozen=frozen, eval_only=eval_only_bn)
        if stride != 1 or cin != cout:
            self.proj_conv = Conv2d(rng, cin, cout, 1, stride=stride, bias=False, frozen=frozen)
            self.proj_bn = BatchNorm2d(cout, frozen=frozen, eval_only=eval_only_bn)
        else:
            self.proj_conv = None
            self.proj_bn = None

    def __call__(self, x, training=False):
        y = ops.relu(self.bn1(self.conv1(x), training))
        y = ops.relu(self.bn2(self.conv2(y), training))
        y = self.bn3(self.conv3(y), training)
        skip = x if self.proj_conv is None else self.proj_bn(self.proj_conv(x), training)
        return ops.relu(ops.add(y, skip))

    def named_params(self, prefix):
        yield from self.conv1.named_params(prefix + ".conv1")
        yield from self.bn1.named_params(prefix + ".bn1")
        yield from self.conv2.named_params(prefix + ".conv2")
        yield from self.bn2.named_params(prefix + ".bn2")
        yield from self.conv3.named_params(prefix + ".conv3")
        yield from self.bn3.named_params(prefix + ".bn3")
        if self.proj_conv is not None:
            yield from self.proj_conv.named_params(prefix + ".proj_conv")
            yield from self.proj_bn.named_params(prefix + ".proj_bn")
