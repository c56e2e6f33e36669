"""Tour of the tensor engine: build a tiny computation, tape it, and check
the analytic gradients against finite differences by hand.

Run: python demos/01_autograd_basics.py
"""

import numpy as np

from revseg import Tape, Tensor, backward, ops

rng = np.random.default_rng(0)

# A toy "image" and a 3x3 edge-ish kernel, both tracked for gradients.
x = Tensor(rng.normal(size=(1, 1, 6, 6)), dtype=np.float64, requires_grad=True)
w = Tensor(rng.normal(size=(2, 1, 3, 3)), dtype=np.float64, requires_grad=True)

with Tape() as tape:
    y = ops.conv2d(x, w, stride=1, padding=1)   # (1,2,6,6)
    y = ops.relu(y)
    y = ops.bilinear_resize(y, 3, 3)            # downsample 6x6 -> 3x3
    loss = ops.sum_all(y)

print(f"recorded {len(tape)} tape nodes, loss = {float(loss.data[0]):.6f}")

grads = backward(tape, loss, params=[x, w])
print(f"grad shapes: x {grads[x].shape}, w {grads[w].shape}")

# Spot-check one weight element with central differences.
def loss_value():
    out = ops.bilinear_resize(ops.relu(ops.conv2d(x, w, stride=1, padding=1)), 3, 3)
    return float(ops.sum_all(out).data[0])

h = 1e-6
w.data[0, 0, 1, 1] += h
up = loss_value()
w.data[0, 0, 1, 1] -= 2 * h
down = loss_value()
w.data[0, 0, 1, 1] += h
fd = (up - down) / (2 * h)
analytic = grads[w][0, 0, 1, 1]
print(f"dL/dw[0,0,1,1]: analytic {analytic:.8f} vs finite-difference {fd:.8f}")

# Frozen tensors never enter the tape: the same graph with requires_grad
# off records nothing at all.
x2 = Tensor(rng.normal(size=(1, 1, 6, 6)), dtype=np.float64)
w2 = Tensor(rng.normal(size=(2, 1, 3, 3)), dtype=np.float64)
with Tape() as silent:
    ops.conv2d(x2, w2, padding=1)
print(f"with frozen inputs the tape stays empty: {len(silent)} nodes")
