"""Tensor and tape mechanics."""

import numpy as np
import pytest

from revseg import ops
from revseg.engine import Tape, Tensor, backward, set_frozen
from revseg.errors import NumericError, TapeError, ValidationError


def test_tensor_rejects_bad_rank():
    with pytest.raises(ValidationError):
        Tensor(np.zeros((1, 1, 1, 1, 1), np.float32))
    with pytest.raises(ValidationError):
        Tensor(np.float32(3.0).reshape(()))


def test_tensor_rejects_nonfinite():
    with pytest.raises(NumericError):
        Tensor(np.array([1.0, np.nan], np.float32))
    with pytest.raises(NumericError):
        Tensor(np.array([np.inf], np.float32))


def test_tensor_rejects_zero_dim():
    with pytest.raises(ValidationError):
        Tensor(np.zeros((2, 0), np.float32))


def test_tensor_dtype_defaults_to_float32():
    t = Tensor([1, 2, 3])
    assert t.dtype == np.float32
    t64 = Tensor(np.zeros(3, np.float64))
    assert t64.dtype == np.float64


def test_requires_grad_false_never_accumulates():
    x = Tensor(np.ones((2, 2), np.float32))
    with Tape() as tape:
        y = ops.sum_all(x)
    assert len(tape) == 0
    assert y.requires_grad is False
    assert x.grad is None


def test_loss_sum_gradient_is_ones():
    x = Tensor(np.arange(6, dtype=np.float32).reshape(2, 3) + 1, requires_grad=True)
    with Tape() as tape:
        loss = ops.sum_all(x)
    table = backward(tape, loss)
    np.testing.assert_array_equal(table[x], np.ones((2, 3), np.float32))
    np.testing.assert_array_equal(x.grad, np.ones((2, 3), np.float32))


def test_loss_half_sum_of_squares_gradient_is_x():
    data = np.random.default_rng(0).normal(size=(3, 4)).astype(np.float32)
    x = Tensor(data, requires_grad=True)
    with Tape() as tape:
        loss = ops.scale(ops.sum_all(ops.mul(x, x)), 0.5)
    table = backward(tape, loss)
    np.testing.assert_allclose(table[x], data, rtol=1e-6)


def test_unreachable_parameter_receives_zero():
    x = Tensor(np.ones(4, np.float32), requires_grad=True)
    unused = Tensor(np.ones(3, np.float32), requires_grad=True)
    with Tape() as tape:
        loss = ops.sum_all(x)
    table = backward(tape, loss, params=[x, unused])
    np.testing.assert_array_equal(table[unused], np.zeros(3, np.float32))


def test_backward_twice_rejected():
    x = Tensor(np.ones(2, np.float32), requires_grad=True)
    with Tape() as tape:
        loss = ops.sum_all(x)
    backward(tape, loss)
    with pytest.raises(TapeError):
        backward(tape, loss)


def test_recording_after_backward_rejected():
    x = Tensor(np.ones(2, np.float32), requires_grad=True)
    with Tape() as tape:
        loss = ops.sum_all(x)
        backward(tape, loss)
        with pytest.raises(TapeError):
            ops.sum_all(x)


def test_backward_requires_scalar_loss():
    x = Tensor(np.ones((2, 2), np.float32), requires_grad=True)
    with Tape() as tape:
        y = ops.relu(x)
    with pytest.raises(ValidationError):
        backward(tape, y)


def test_backward_requires_loss_on_tape():
    x = Tensor(np.ones(2, np.float32), requires_grad=True)
    with Tape():
        loss = ops.sum_all(x)
    other = Tape()
    with other:
        pass
    with pytest.raises(TapeError):
        backward(other, loss)


def test_tape_soundness_visited_equals_reachable():
    # two reachable branches plus one dead-end op not feeding the loss
    x = Tensor(np.ones((2, 2), np.float32), requires_grad=True)
    y = Tensor(np.ones((2, 2), np.float32), requires_grad=True)
    with Tape() as tape:
        a = ops.mul(x, y)
        ops.relu(a)           # recorded but unreachable from the loss
        loss = ops.sum_all(a)
    backward(tape, loss)

    # independent reachability count over the recorded graph
    reachable = set()
    stack = [loss._node_id]
    while stack:
        nid = stack.pop()
        if nid in reachable:
            continue
        reachable.add(nid)
        stack.extend(p for p in tape.nodes[nid].parents if p is not None)
    assert tape.visited_count == len(reachable)
    assert tape.visited_count < len(tape.nodes)


def test_parent_ids_precede_children():
    x = Tensor(np.ones(3, np.float32), requires_grad=True)
    with Tape() as tape:
        y = ops.relu(x)
        z = ops.add(y, y)
        ops.sum_all(z)
    for nid, node in enumerate(tape.nodes):
        assert all(p < nid for p in node.parents if p is not None)


def test_set_frozen_toggles_requires_grad():
    t = Tensor(np.ones(2, np.float32), requires_grad=True)
    set_frozen(t, True)
    assert t.frozen and not t.requires_grad
    set_frozen(t, False)
    assert not t.frozen and t.requires_grad
    buf = Tensor(np.ones(2, np.float32))
    buf.is_buffer = True
    set_frozen(buf, False)
    assert not buf.requires_grad  # buffers never take gradients


def test_shared_leaf_accumulates_across_uses():
    x = Tensor(np.full(3, 2.0, np.float32), requires_grad=True)
    with Tape() as tape:
        loss = ops.sum_all(ops.add(x, x))
    table = backward(tape, loss)
    np.testing.assert_array_equal(table[x], np.full(3, 2.0, np.float32))
