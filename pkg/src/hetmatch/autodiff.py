"""Dense float64 tensors with define-by-run reverse-mode differentiation.

A computation graph is built per forward pass and discarded after
`backward`; gradients accumulate additively across fan-out. Everything is
64-bit: the models here are desk scale and gradient-check fidelity matters
more than speed. Ops accept leading batch dimensions with numpy broadcast
semantics and reduce gradients back to the parent shapes.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError

_GRAD_ENABLED = True


class no_grad:
    """Context manager disabling graph construction (inference mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bw")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._bw = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, bw) -> Tensor:
    """Wrap an op result, recording provenance only when a parent needs it."""
    tracked = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=tracked)
    if tracked:
        out._parents = parents
        out._bw = bw
    return out


def _acc(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g if g.shape == t.data.shape else np.broadcast_to(g, t.data.shape).copy()
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gd, sd) in enumerate(zip(g.shape, shape)) if sd == 1 and gd != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _shape_error(op: str, *shapes) -> NumericError:
    return NumericError(f"{op}: incompatible shapes {' and '.join(str(s) for s in shapes)}")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise _shape_error("matmul", a.shape, b.shape)

    if b.data.ndim == 2 and a.data.ndim > 2:
        # stacked input against a plain weight matrix: one large GEMM beats
        # numpy's per-slice batched matmul by an order of magnitude
        k = a.data.shape[-1]
        if b.data.shape[0] != k:
            raise _shape_error("matmul", a.shape, b.shape)
        a2 = np.ascontiguousarray(a.data).reshape(-1, k)
        data = (a2 @ b.data).reshape(a.data.shape[:-1] + (b.data.shape[1],))

        def bw2(g):
            g2 = g.reshape(-1, b.data.shape[1])
            if a.requires_grad:
                _acc(a, (g2 @ b.data.T).reshape(a.data.shape))
            if b.requires_grad:
                _acc(b, a2.T @ g2)
        return _result(data, (a, b), bw2)

    try:
        data = np.matmul(a.data, b.data)
    except ValueError:
        raise _shape_error("matmul", a.shape, b.shape) from None

    def bw(g):
        if a.requires_grad:
            _acc(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.data.shape))
        if b.requires_grad:
            _acc(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.data.shape))
    return _result(data, (a, b), bw)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise _shape_error("add", a.shape, b.shape) from None

    def bw(g):
        if a.requires_grad:
            _acc(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _acc(b, _unbroadcast(g, b.data.shape))
    return _result(data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError:
        raise _shape_error("sub", a.shape, b.shape) from None

    def bw(g):
        if a.requires_grad:
            _acc(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _acc(b, _unbroadcast(-g, b.data.shape))
    return _result(data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise _shape_error("mul", a.shape, b.shape) from None

    def bw(g):
        if a.requires_grad:
            _acc(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _acc(b, _unbroadcast(g * a.data, b.data.shape))
    return _result(data, (a, b), bw)


def masked_mul(x, mask) -> Tensor:
    """Multiply by a constant 0/1 mask; gradients are zeroed where masked."""
    x = as_tensor(x)
    mask = np.asarray(mask, dtype=np.float64)
    data = x.data * mask

    def bw(g):
        _acc(x, _unbroadcast(g * mask, x.data.shape))
    return _result(data, (x,), bw)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def bw(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(offset, offset + size)
                _acc(t, g[tuple(index)])
            offset += size
    return _result(data, tuple(tensors), bw)


def row_softmax(x) -> Tensor:
    """Softmax along the last axis, numerically stabilized."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        _acc(x, data * (g - (g * data).sum(axis=-1, keepdims=True)))
    return _result(data, (x,), bw)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    d = x.data
    data = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                    np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))

    def bw(g):
        _acc(x, g * data * (1.0 - data))
    return _result(data, (x,), bw)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    data = np.tanh(x.data)

    def bw(g):
        _acc(x, g * (1.0 - data * data))
    return _result(data, (x,), bw)


def relu(x) -> Tensor:
    x = as_tensor(x)
    data = np.maximum(x.data, 0.0)

    def bw(g):
        _acc(x, g * (x.data > 0))
    return _result(data, (x,), bw)


def sum_axis(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            _acc(x, np.broadcast_to(g, x.data.shape).copy())
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            _acc(x, np.broadcast_to(g, x.data.shape).copy())
    return _result(data, (x,), bw)


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    data = x.data.mean(axis=axis)
    count = x.data.size if axis is None else x.data.shape[axis]

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        _acc(x, np.broadcast_to(g / count, x.data.shape).copy())
    return _result(data, (x,), bw)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    data = x.data.reshape(shape)

    def bw(g):
        _acc(x, g.reshape(x.data.shape))
    return _result(data, (x,), bw)


def flatten(x) -> Tensor:
    """Collapse all but the leading (batch) axis."""
    x = as_tensor(x)
    return reshape(x, (x.data.shape[0], -1))


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    data = x.data.transpose(axes)
    inverse = tuple(int(i) for i in np.argsort(axes))

    def bw(g):
        _acc(x, g.transpose(inverse))
    return _result(data, (x,), bw)


def narrow(x, start: int, stop: int) -> Tensor:
    """Slice along axis 0; the gradient scatters back into place."""
    x = as_tensor(x)
    data = x.data[start:stop]

    def bw(g):
        full = np.zeros_like(x.data)
        full[start:stop] = g
        _acc(x, full)
    return _result(data, (x,), bw)


def conv2d(x, w, bias) -> Tensor:
    """2-D convolution, stride 1, zero-padded to keep the spatial size.

    x: (B, C, H, W); w: (O, C, kh, kw) with odd kernel sizes; bias: (O,).
    Computed as kh*kw shifted channel contractions, which avoids
    materializing an im2col matrix.
    """
    x, w, bias = as_tensor(x), as_tensor(w), as_tensor(bias)
    if x.data.ndim != 4 or w.data.ndim != 4 or x.data.shape[1] != w.data.shape[1]:
        raise _shape_error("conv2d", x.shape, w.shape)
    batch, chans, height, width = x.data.shape
    out_c, _, kh, kw = w.data.shape
    ph, pw = kh // 2, kw // 2
    xp = np.zeros((batch, chans, height + 2 * ph, width + 2 * pw))
    xp[:, :, ph:ph + height, pw:pw + width] = x.data

    out = np.empty((batch, out_c, height, width))
    out[:] = bias.data[None, :, None, None]
    for di in range(kh):
        for dj in range(kw):
            shifted = xp[:, :, di:di + height, dj:dj + width]
            # (O, C) x (B, C, H, W) -> (O, B, H, W)
            out += np.tensordot(w.data[:, :, di, dj], shifted,
                                axes=([1], [1])).transpose(1, 0, 2, 3)
    data = out

    def bw(g):
        if bias.requires_grad:
            _acc(bias, g.sum(axis=(0, 2, 3)))
        if w.requires_grad:
            gw = np.empty_like(w.data)
            for di in range(kh):
                for dj in range(kw):
                    shifted = xp[:, :, di:di + height, dj:dj + width]
                    gw[:, :, di, dj] = np.tensordot(g, shifted,
                                                    axes=([0, 2, 3], [0, 2, 3]))
            _acc(w, gw)
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for di in range(kh):
                for dj in range(kw):
                    gxp[:, :, di:di + height, dj:dj + width] += np.tensordot(
                        w.data[:, :, di, dj], g, axes=([0], [1])).transpose(1, 0, 2, 3)
            _acc(x, gxp[:, :, ph:ph + height, pw:pw + width])
    return _result(data, (x, w, bias), bw)


def maxpool2d(x, size: int = 2) -> Tensor:
    """Non-overlapping max pooling; trailing rows/cols beyond a multiple of
    `size` are dropped. Ties route the gradient to the first maximum."""
    x = as_tensor(x)
    batch, chans, height, width = x.data.shape
    hh, ww = (height // size) * size, (width // size) * size
    oh, ow = hh // size, ww // size
    if oh == 0 or ow == 0:
        raise _shape_error("maxpool2d", x.shape)
    xc = x.data[:, :, :hh, :ww]
    r = (xc.reshape(batch, chans, oh, size, ow, size)
         .transpose(0, 1, 2, 4, 3, 5)
         .reshape(batch, chans, oh, ow, size * size))
    idx = r.argmax(axis=-1)
    data = np.take_along_axis(r, idx[..., None], axis=-1)[..., 0]

    def bw(g):
        gr = np.zeros_like(r)
        np.put_along_axis(gr, idx[..., None], g[..., None], axis=-1)
        gxc = (gr.reshape(batch, chans, oh, ow, size, size)
               .transpose(0, 1, 2, 4, 3, 5)
               .reshape(batch, chans, hh, ww))
        if (hh, ww) == (height, width):
            _acc(x, gxc)
        else:
            full = np.zeros_like(x.data)
            full[:, :, :hh, :ww] = gxc
            _acc(x, full)
    return _result(data, (x,), bw)


def backward(loss: Tensor) -> None:
    """Reverse-topological gradient accumulation from a scalar loss."""
    if loss.data.size != 1:
        raise NumericError(f"backward requires a scalar loss, got shape {loss.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited and p.requires_grad:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._bw is not None:
            node._bw(node.grad)


def finite_diff_check(f, params, eps: float = 1e-5) -> float:
    """Max relative error between autodiff and central-difference gradients.

    `f(params)` must be a deterministic scalar-valued forward pass over the
    given parameter tensors. Relative error uses a 1e-6 denominator floor so
    identically-zero gradients compare at an absolute scale.
    """
    tensors = list(params.tensors()) if hasattr(params, "tensors") else list(params)
    loss = f(params)
    loss = loss if isinstance(loss, Tensor) else Tensor(loss)
    backward(loss)
    grads = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    for t in tensors:
        t.grad = None

    def eval_scalar() -> float:
        out = f(params)
        return float(out.data.reshape(())) if isinstance(out, Tensor) else float(out)

    worst = 0.0
    with no_grad():
        for t, g in zip(tensors, grads):
            flat = t.data.ravel()
            gflat = g.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                fp = eval_scalar()
                flat[i] = orig - eps
                fm = eval_scalar()
                flat[i] = orig
                fd = (fp - fm) / (2.0 * eps)
                err = abs(gflat[i] - fd) / max(abs(gflat[i]), abs(fd), 1e-6)
                if err > worst:
                    worst = err
    return worst
