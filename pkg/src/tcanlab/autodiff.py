"""Reverse-mode automatic differentiation over dense float64 tensors.

The op set is exactly what the TCAN graph needs: dilated causal 1-D
convolution, row-wise softmax, matmul / transpose / add / relu, an affine
layer, global average pooling over time, cross-entropy, and the scalar
plumbing (``scale``, ``sum_all``) required to average per-sample losses.
Every op records its inputs on the implicit graph; ``backward`` replays a
topologically ordered tape and accumulates gradients into ``Tensor.grad``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeMismatchError",
    "NonFiniteError",
    "GraphStateError",
    "backward",
    "reset_backward",
    "conv1d_dilated_causal",
    "softmax_rows",
    "matmul",
    "transpose",
    "add",
    "relu",
    "affine",
    "global_avg_pool_time",
    "cross_entropy",
    "scale",
    "sum_all",
]


class ShapeMismatchError(ValueError):
    """Operands do not conform (wrong rank or incompatible extents)."""


class NonFiniteError(ValueError):
    """An op received NaN/Inf input, usually a sign of numeric blow-up."""


class GraphStateError(RuntimeError):
    """The graph is in a state that forbids the requested action."""


class Tensor:
    """Dense float64 array with optional gradient storage.

    Tensors are treated as immutable once created; only the optimizer
    mutates ``data`` in place, between graph builds.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_backward_ran")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._backward_ran = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray, fresh: bool = False) -> None:
        # ``fresh`` marks arrays computed solely for this call, which can be
        # adopted without a defensive copy; shared or read-only arrays
        # (e.g. broadcast views) must be materialized before later += calls.
        if self.grad is None:
            self.grad = g if fresh else np.array(g)
        else:
            self.grad += g

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn(out)
    return out


class Tape:
    """Topologically ordered list of the grad-carrying nodes below a root.

    The order is a post-order DFS, so every node's inputs appear before
    the node itself; replaying it in reverse propagates gradients from
    the root down to every reachable ``requires_grad`` leaf.
    """

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def trace(cls, root: Tensor) -> "Tape":
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return cls(order)

    def run_backward(self) -> None:
        for node in reversed(self.nodes):
            if node._backward is not None and node.grad is not None:
                node._backward()


def backward(loss: Tensor) -> None:
    """Populate ``grad`` for every requires_grad tensor feeding ``loss``."""
    if loss.size != 1:
        raise ShapeMismatchError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphStateError("loss is not connected to any requires_grad tensor")
    if loss._backward_ran:
        raise GraphStateError("backward was already run for this loss; call reset_backward first")
    loss.grad = np.ones_like(loss.data)
    Tape.trace(loss).run_backward()
    loss._backward_ran = True


def reset_backward(loss: Tensor) -> None:
    """Clear gradients and the ran-flag on the whole graph below ``loss``."""
    for node in Tape.trace(loss).nodes:
        node.grad = None
        node._backward_ran = False


# ---------------------------------------------------------------------------
# ops


def conv1d_dilated_causal(x: Tensor, weight: Tensor, bias: Tensor, dilation: int) -> Tensor:
    """Causal dilated convolution: out[c, s] = b[c] + sum_{c', i} w[c, c', i] * x[c', s - d*i].

    Negative time indices read as zero (left zero-padding of (k-1)*d), so
    the output has the same length T as the input.
    """
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if not isinstance(dilation, (int, np.integer)) or dilation < 1:
        raise ValueError(f"dilation must be a positive integer, got {dilation!r}")
    if x.data.ndim != 2:
        raise ShapeMismatchError(f"input must be channels x time, got shape {x.shape}")
    if weight.data.ndim != 3:
        raise ShapeMismatchError(f"weight must be out x in x taps, got shape {weight.shape}")
    c_in, t = x.shape
    c_out, c_in_w, k = weight.shape
    if k < 1:
        raise ValueError("kernel size must be >= 1")
    if c_in_w != c_in:
        raise ShapeMismatchError(f"weight expects {c_in_w} input channels, input has {c_in}")
    if bias.shape != (c_out,):
        raise ShapeMismatchError(f"bias shape {bias.shape} != ({c_out},)")

    pad = (k - 1) * dilation
    xp = np.zeros((c_in, t + pad))
    xp[:, pad:] = x.data
    # taps-first copy keeps each per-tap matrix contiguous for BLAS
    w_taps = np.ascontiguousarray(weight.data.transpose(2, 0, 1))
    out = np.broadcast_to(bias.data[:, None], (c_out, t)).copy()
    for i in range(k):
        off = pad - dilation * i
        out += w_taps[i] @ xp[:, off:off + t]

    def make_backward(res: Tensor):
        def _bw():
            g = res.grad
            if x.requires_grad:
                gxp = np.zeros_like(xp)
                for i in range(k):
                    off = pad - dilation * i
                    gxp[:, off:off + t] += w_taps[i].T @ g
                x._accumulate(gxp[:, pad:], fresh=True)
            if weight.requires_grad:
                gw_taps = np.empty((k, c_out, c_in))
                for i in range(k):
                    off = pad - dilation * i
                    gw_taps[i] = g @ xp[:, off:off + t].T
                weight._accumulate(gw_taps.transpose(1, 2, 0), fresh=True)
            if bias.requires_grad:
                bias._accumulate(g.sum(axis=1), fresh=True)
        return _bw

    return _result(out, (x, weight, bias), make_backward)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax with max subtraction; each output row sums to 1."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeMismatchError(f"softmax_rows needs a 2-D input, got shape {x.shape}")
    if not np.isfinite(x.data).all():
        raise NonFiniteError("softmax_rows: input contains non-finite values")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)

    def make_backward(res: Tensor):
        def _bw():
            g = res.grad
            inner = (g * p).sum(axis=1, keepdims=True)
            x._accumulate(p * (g - inner), fresh=True)
        return _bw

    return _result(p, (x,), make_backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul shapes do not conform: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def make_backward(res: Tensor):
        def _bw():
            g = res.grad
            if a.requires_grad:
                a._accumulate(g @ b.data.T, fresh=True)
            if b.requires_grad:
                b._accumulate(a.data.T @ g, fresh=True)
        return _bw

    return _result(out, (a, b), make_backward)


def transpose(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeMismatchError(f"transpose needs a 2-D input, got shape {a.shape}")

    def make_backward(res: Tensor):
        def _bw():
            a._accumulate(res.grad.T)
        return _bw

    return _result(a.data.T.copy(), (a,), make_backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"add shapes differ: {a.shape} vs {b.shape}")

    def make_backward(res: Tensor):
        def _bw():
            if a.requires_grad:
                a._accumulate(res.grad)
            if b.requires_grad:
                b._accumulate(res.grad)
        return _bw

    return _result(a.data + b.data, (a, b), make_backward)


def relu(a: Tensor) -> Tensor:
    a = _as_tensor(a)

    def make_backward(res: Tensor):
        def _bw():
            a._accumulate(res.grad * (a.data > 0), fresh=True)
        return _bw

    return _result(np.maximum(a.data, 0.0), (a,), make_backward)


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Fully connected layer on a vector: weight @ x + bias."""
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if x.data.ndim != 1 or weight.data.ndim != 2 or weight.shape[1] != x.shape[0]:
        raise ShapeMismatchError(f"affine shapes do not conform: {weight.shape} @ {x.shape}")
    if bias.shape != (weight.shape[0],):
        raise ShapeMismatchError(f"affine bias shape {bias.shape} != ({weight.shape[0]},)")
    out = weight.data @ x.data + bias.data

    def make_backward(res: Tensor):
        def _bw():
            g = res.grad
            if x.requires_grad:
                x._accumulate(weight.data.T @ g, fresh=True)
            if weight.requires_grad:
                weight._accumulate(np.outer(g, x.data), fresh=True)
            if bias.requires_grad:
                bias._accumulate(g)
        return _bw

    return _result(out, (x, weight, bias), make_backward)


def global_avg_pool_time(x: Tensor) -> Tensor:
    """Average a channels x time tensor over time, yielding one value per channel."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeMismatchError(f"global_avg_pool_time needs channels x time, got {x.shape}")
    t = x.shape[1]

    def make_backward(res: Tensor):
        def _bw():
            x._accumulate(np.broadcast_to((res.grad / t)[:, None], x.shape))
        return _bw

    return _result(x.data.mean(axis=1), (x,), make_backward)


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """Negative log softmax probability of ``label``; returns a scalar tensor."""
    logits = _as_tensor(logits)
    if logits.data.ndim != 1:
        raise ShapeMismatchError(f"cross_entropy needs a 1-D logit vector, got {logits.shape}")
    m = logits.shape[0]
    if not isinstance(label, (int, np.integer)) or not 0 <= label < m:
        raise ValueError(f"label {label!r} out of range for {m} classes")
    z = logits.data
    zmax = z.max()
    lse = zmax + np.log(np.exp(z - zmax).sum())
    p = np.exp(z - lse)

    def make_backward(res: Tensor):
        def _bw():
            g = p.copy()
            g[label] -= 1.0
            logits._accumulate(g * res.grad, fresh=True)
        return _bw

    return _result(np.float64(lse - z[label]), (logits,), make_backward)


def scale(a: Tensor, factor: float) -> Tensor:
    a = _as_tensor(a)
    factor = float(factor)

    def make_backward(res: Tensor):
        def _bw():
            a._accumulate(res.grad * factor, fresh=True)
        return _bw

    return _result(a.data * factor, (a,), make_backward)


def sum_all(a: Tensor) -> Tensor:
    a = _as_tensor(a)

    def make_backward(res: Tensor):
        def _bw():
            a._accumulate(np.broadcast_to(res.grad, a.shape))
        return _bw

    return _result(np.float64(a.data.sum()), (a,), make_backward)
