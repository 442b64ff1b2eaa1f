"""Dense f64 tensors with reverse-mode automatic differentiation.

Every network operation in the package is built from the primitives here.
Operations record onto an explicit :class:`Tape`; calling :func:`backward`
replays the tape in reverse, accumulating gradients additively across
fan-out. Convolution and pooling dispatch to the selected kernel backend.
"""

import numpy as np

from . import backend

_TAPE_STACK = []
_GRAD_ENABLED = True


class Tape:
    """Ordered record of operation nodes, in (topological) creation order."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False


class no_grad:
    """Context manager disabling recording; outputs become plain constants."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def _current_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_backward", "_parents", "_tape")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._backward = None
        self._parents = ()
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(data, parents, backward_fn):
    out = Tensor(data)
    tape = _current_tape()
    if _GRAD_ENABLED and tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._backward = backward_fn
        out._parents = tuple(parents)
        out._tape = tape
        tape.nodes.append(out)
    return out


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        # Copy so a later in-place accumulation cannot corrupt the source buffer.
        t.grad = np.array(np.broadcast_to(g, t.data.shape))
    else:
        t.grad += g


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def backward(loss, tape=None):
    """Reverse-accumulate d(loss)/d(leaf) for all requires_grad leaves on the tape."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    tape = tape if tape is not None else loss._tape
    if tape is None or loss._tape is not tape:
        raise ValueError("loss was not recorded on this tape")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node.grad is not None and node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# primitives


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _record(out_data, (a, b), bwd)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _record(out_data, (a, b), bwd)


def sum_(x, axis=None):
    x = as_tensor(x)
    out_data = x.data.sum(axis=axis)

    def bwd(g):
        if axis is None:
            _accum(x, np.broadcast_to(g, x.data.shape).copy())
        else:
            _accum(x, np.broadcast_to(np.expand_dims(g, axis), x.data.shape).copy())

    return _record(out_data, (x,), bwd)


def mean_(x, axis=None):
    x = as_tensor(x)
    n = x.data.size if axis is None else x.data.shape[axis]
    return mul(sum_(x, axis=axis), 1.0 / n)


def reshape(x, shape):
    x = as_tensor(x)
    out_data = x.data.reshape(shape)

    def bwd(g):
        _accum(x, g.reshape(x.data.shape))

    return _record(out_data, (x,), bwd)


def flatten(x):
    """[B, ...] -> [B, N], row-major element order preserved."""
    x = as_tensor(x)
    return reshape(x, (x.data.shape[0], -1))


def concat(a, b, axis):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != b.data.ndim:
        raise ValueError("concat operands differ in rank")
    for ax in range(a.data.ndim):
        if ax != axis % a.data.ndim and a.data.shape[ax] != b.data.shape[ax]:
            raise ValueError(
                f"concat operands differ on axis {ax}: {a.data.shape} vs {b.data.shape}"
            )
    na = a.data.shape[axis]
    out_data = np.concatenate([a.data, b.data], axis=axis)

    def bwd(g):
        ga, gb = np.split(g, [na], axis=axis)
        _accum(a, ga)
        _accum(b, gb)

    return _record(out_data, (a, b), bwd)


def concat_time(a, b):
    """Concatenate two [B,F,T] feature maps along the time axis."""
    return concat(a, b, axis=-1)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ValueError(
            f"matmul inner dimensions disagree: {a.data.shape} @ {b.data.shape}"
        )
    out_data = a.data @ b.data

    def bwd(g):
        _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
        _accum(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))

    return _record(out_data, (a, b), bwd)


def matmul_T(a, b):
    """aᵀ·b over the shared leading feature axis; batched for [B,F,T] operands."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim not in (2, 3) or a.data.ndim != b.data.ndim:
        raise ValueError("matmul_T expects two [F,T] or two [B,F,T] tensors")
    f_axis = 0 if a.data.ndim == 2 else 1
    if a.data.shape[f_axis] != b.data.shape[f_axis]:
        raise ValueError(
            f"matmul_T feature axes disagree: {a.data.shape} vs {b.data.shape}"
        )
    at = np.swapaxes(a.data, -1, -2)
    out_data = at @ b.data

    def bwd(g):
        _accum(a, b.data @ np.swapaxes(g, -1, -2))
        _accum(b, a.data @ g)

    return _record(out_data, (a, b), bwd)


def linear(x, w, b):
    """x[B,N] · w[N,M] + b[M]."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.shape[-1] != w.data.shape[0]:
        raise ValueError(
            f"linear: input width {x.data.shape[-1]} != weight rows {w.data.shape[0]}"
        )
    if b.data.shape != (w.data.shape[1],):
        raise ValueError(f"linear: bias shape {b.data.shape} != ({w.data.shape[1]},)")
    return add(matmul(x, w), b)


def conv2d(x, w, b, stride=(1, 1)):
    """Valid cross-correlation: x[B,Cin,H,W] * w[Cout,Cin,kH,kW] + b[Cout]."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ValueError("conv2d expects 4-d input and weight")
    bsz, cin, h, wdt = x.data.shape
    cout, cin_w, kh, kw = w.data.shape
    if cin != cin_w:
        raise ValueError(f"conv2d: input channels {cin} != weight channels {cin_w}")
    if kh > h:
        raise ValueError(f"conv2d: kernel height {kh} exceeds input height {h}")
    if kw > wdt:
        raise ValueError(f"conv2d: kernel width {kw} exceeds input width {wdt}")
    if stride[0] < 1 or stride[1] < 1:
        raise ValueError("conv2d: stride components must be >= 1")
    if b.data.shape != (cout,):
        raise ValueError(f"conv2d: bias shape {b.data.shape} != ({cout},)")
    out_data = backend.conv2d_forward(x.data, w.data, b.data, stride)

    def bwd(g):
        gx, gw, gb = backend.conv2d_backward(x.data, w.data, stride, g)
        _accum(x, gx)
        _accum(w, gw)
        _accum(b, gb)

    return _record(out_data, (x, w, b), bwd)


def avg_pool2d(x, kernel, stride):
    x = as_tensor(x)
    kh, kw = kernel
    _, _, h, wdt = x.data.shape
    if kh > h or kw > wdt:
        raise ValueError(f"avg_pool2d: kernel {kernel} exceeds input extents {(h, wdt)}")
    out_data = backend.avgpool_forward(x.data, kernel, stride)

    def bwd(g):
        _accum(x, backend.avgpool_backward(x.data.shape, kernel, stride, g))

    return _record(out_data, (x,), bwd)


def elu(x):
    """x for x>0, exp(x)-1 otherwise; derivative at 0 taken as 1."""
    x = as_tensor(x)
    neg = x.data <= 0
    ex = np.exp(np.minimum(x.data, 0.0))
    out_data = np.where(neg, ex - 1.0, x.data)

    def bwd(g):
        _accum(x, g * np.where(neg, ex, 1.0))

    return _record(out_data, (x,), bwd)


def dropout(x, p, training, rng=None):
    """Inverted dropout: zero with prob p, scale survivors by 1/(1-p)."""
    x = as_tensor(x)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    mask = (rng.random(x.data.shape) >= p) / (1.0 - p)
    out_data = x.data * mask

    def bwd(g):
        _accum(x, g * mask)

    return _record(out_data, (x,), bwd)


def softmax(x):
    """Row-wise softmax over the last axis, max-shifted for stability."""
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        _accum(x, (g - (g * s).sum(axis=-1, keepdims=True)) * s)

    return _record(s, (x,), bwd)


def cross_entropy(logits, labels):
    """Mean over the batch of -log softmax(logits)[label]."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.data.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} != ({n},)")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"label out of range [0, {c})")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1))
    out_data = np.float64((lse - z[np.arange(n), labels]).mean())

    def bwd(g):
        p = np.exp(z)
        p /= p.sum(axis=-1, keepdims=True)
        p[np.arange(n), labels] -= 1.0
        _accum(logits, g * p / n)

    return _record(out_data, (logits,), bwd)
