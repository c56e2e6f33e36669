"""Dense tensors and the reverse-mode gradient tape.

Everything runs in float32; float64 exists solely so analytic gradients can
be checked against central finite differences without rounding noise.
Operators live in ops.py and call record_op() to put themselves on the
currently open Tape. A tensor only ever carries a gradient if it was created
with requires_grad=True.

Concurrency: the active tape is thread-local and a Tape is single-owner
(one forward/backward per tape). Tensors that never require gradients are
immutable by convention and safe to share across threads, so concurrent
inference runs independent tapes over shared frozen parameters.
"""

import threading

import numpy as np

from .errors import NumericError, TapeError, ValidationError

_ALLOWED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

_tls = threading.local()


def _tape_stack():
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = []
        _tls.stack = stack
    return stack


def active_tape():
    """Innermost open Tape in this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """Rank 1-4 dense array in canonical N,C,H,W order.

    `frozen` and `is_buffer` are bookkeeping for model parameters: frozen
    entries are persisted as such in checkpoints and never touched by the
    optimizer; buffers (batch-norm running statistics) never require
    gradients regardless of their frozen flag.
    """

    __slots__ = ("data", "requires_grad", "grad", "frozen", "is_buffer",
                 "_tape", "_node_id")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in _ALLOWED_DTYPES:
            arr = arr.astype(np.float32)
        if arr.ndim < 1 or arr.ndim > 4:
            raise ValidationError(f"tensor rank must be 1..4, got shape {arr.shape}")
        if any(d <= 0 for d in arr.shape):
            raise ValidationError(f"tensor dimensions must be positive, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise NumericError("tensor contains non-finite values")
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.frozen = False
        self.is_buffer = False
        self._tape = None
        self._node_id = None

    @classmethod
    def _wrap(cls, arr):
        # Internal fast path for op outputs: skips validation, which holds
        # by induction (ops reject non-finite inputs where it matters).
        t = object.__new__(cls)
        t.data = arr
        t.requires_grad = False
        t.grad = None
        t.frozen = False
        t.is_buffer = False
        t._tape = None
        t._node_id = None
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def node_id(self):
        return self._node_id

    def __repr__(self):
        flags = []
        if self.requires_grad:
            flags.append("grad")
        if self.frozen:
            flags.append("frozen")
        tag = f" [{','.join(flags)}]" if flags else ""
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype}{tag})"


def set_frozen(t, flag):
    """Set a parameter's frozen flag and keep requires_grad consistent."""
    t.frozen = bool(flag)
    t.requires_grad = (not t.frozen) and (not t.is_buffer)


class Node:
    """One recorded operation: op kind, parent node ids, and a backward
    callable whose closure holds the values saved for the backward pass."""

    __slots__ = ("op", "parents", "backward")

    def __init__(self, op, parents, backward):
        self.op = op
        self.parents = parents
        self.backward = backward


class Tape:
    """Append-only record of operations, single-owner, one backward pass.

    Use as a context manager::

        with Tape() as tape:
            loss = ...
        grads = backward(tape, loss)
    """

    def __init__(self):
        self.nodes = []
        self.finished = False
        self.visited_count = None
        self._leaf_tensors = {}   # node id -> leaf Tensor

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise TapeError("tape context exited out of order")
        stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def node_of(self, t):
        return t._node_id if t._tape is self else None

    def _register_leaf(self, t):
        nid = len(self.nodes)
        self.nodes.append(Node("leaf", (), None))
        self._leaf_tensors[nid] = t
        t._tape = self
        t._node_id = nid
        return nid


def record_op(op, parents, out, backward_fn):
    """Record `op` on the active tape if any parent participates in it.

    `parents` is a tuple of Tensors (entries may be None for absent optional
    inputs); `backward_fn` maps the output gradient to a tuple of parent
    gradients aligned with `parents` (None for non-differentiable slots).
    Returns `out`, marked as tracked when recording happened.
    """
    tape = active_tape()
    if tape is None:
        return out
    participating = any(
        p is not None and (p.requires_grad or tape.node_of(p) is not None)
        for p in parents
    )
    if not participating:
        return out
    if tape.finished:
        raise TapeError("tape is frozen: backward already ran")
    parent_ids = []
    for p in parents:
        if p is None:
            parent_ids.append(None)
            continue
        nid = tape.node_of(p)
        if nid is None and p.requires_grad:
            nid = tape._register_leaf(p)
        parent_ids.append(nid)
    node_id = len(tape.nodes)
    tape.nodes.append(Node(op, tuple(parent_ids), backward_fn))
    out._tape = tape
    out._node_id = node_id
    out.requires_grad = True
    return out


def backward(tape, loss, params=None):
    """Reverse sweep over the tape from a scalar loss.

    Returns a gradient table keyed by leaf Tensor identity. Leaves that are
    unreachable from the loss receive zeros, as do any extra `params` that
    require gradients but never appeared on the tape. Each leaf's `.grad`
    slot is also filled. A tape can run backward exactly once.
    """
    if tape.finished:
        raise TapeError("backward already ran on this tape")
    if loss._tape is not tape or loss._node_id is None:
        raise TapeError("loss tensor is not recorded on this tape")
    if loss.data.size != 1:
        raise ValidationError(f"loss must be scalar, got shape {tuple(loss.shape)}")
    tape.finished = True

    grads = [None] * len(tape.nodes)
    grads[loss._node_id] = np.ones_like(loss.data)
    visited = 0
    for nid in range(len(tape.nodes) - 1, -1, -1):
        g = grads[nid]
        if g is None:
            continue
        visited += 1
        node = tape.nodes[nid]
        if node.backward is None:
            continue
        parent_grads = node.backward(g)
        for pid, pg in zip(node.parents, parent_grads):
            if pid is None or pg is None:
                continue
            if grads[pid] is None:
                grads[pid] = pg
            else:
                grads[pid] = grads[pid] + pg
    tape.visited_count = visited

    table = {}
    for nid, leaf in tape._leaf_tensors.items():
        g = grads[nid]
        if g is None:
            g = np.zeros_like(leaf.data)
        table[leaf] = g
        leaf.grad = g
    if params is not None:
        for p in params:
            if p.requires_grad and p not in table:
                z = np.zeros_like(p.data)
                table[p] = z
                p.grad = z
    return table
