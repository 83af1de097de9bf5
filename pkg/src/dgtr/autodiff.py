"""Reverse-mode automatic differentiation on float64 numpy arrays.

A ``Tensor`` wraps an ndarray and remembers the operation that produced it
(parents plus a backward closure), forming a computation record.  Calling
``backward`` on a scalar root walks the record once in reverse topological
order and accumulates gradients additively into every tensor that requires
them.  ``replay`` re-executes the recorded forward pass node by node, which
is used by tests to check that the record reproduces outputs bit-identically.

All arithmetic is performed in float64 with plain numpy operations in a fixed
order, so forward values, gradients, and replays are deterministic for
identical inputs.

Conventions:
    * Vectors are 1-D arrays, matrices are 2-D; ``matmul`` follows numpy's
      promotion rules for 1-D operands.
    * Reductions produce 0-d tensors; ``backward`` requires a 0-d root.
    * ``layer_norm`` uses the biased (1/n) variance and eps inside the
      square root.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, ContractError, NumericError, ShapeError

LN_EPS = 1e-5

_GELU_C = 0.7978845608028654  # sqrt(2 / pi)
_GELU_A = 0.044715


class Tensor:
    """A node in the computation record.

    Args:
        data: Array-like; stored as float64.
        requires_grad: Whether gradients should accumulate into this node.
        name: Optional label used in diagnostics (parameter names).
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_forward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[Tensor], None] | None = None
        self._forward: Callable[[Tensor], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g: np.ndarray) -> None:
        """Add ``g`` into this tensor's gradient (created lazily)."""
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # Operator sugar.  Scalars and arrays are promoted to constant tensors.
    def __add__(self, other):
        return add(self, _ensure(other))

    def __radd__(self, other):
        return add(_ensure(other), self)

    def __sub__(self, other):
        return sub(self, _ensure(other))

    def __rsub__(self, other):
        return sub(_ensure(other), self)

    def __mul__(self, other):
        return mul(self, _ensure(other))

    def __rmul__(self, other):
        return mul(_ensure(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _ensure(other))

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag}, requires_grad={self.requires_grad})"


def _ensure(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _node(data: np.ndarray, parents: tuple[Tensor, ...],
          backward: Callable[[Tensor], None],
          forward: Callable[[Tensor], None]) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    out._parents = parents
    out._backward = backward if out.requires_grad else None
    out._forward = forward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    def backward(out: Tensor) -> None:
        a.accumulate(_unbroadcast(out.grad, a.data.shape))
        b.accumulate(_unbroadcast(out.grad, b.data.shape))

    def forward(out: Tensor) -> None:
        out.data = a.data + b.data

    return _node(a.data + b.data, (a, b), backward, forward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def backward(out: Tensor) -> None:
        a.accumulate(_unbroadcast(out.grad, a.data.shape))
        b.accumulate(_unbroadcast(-out.grad, b.data.shape))

    def forward(out: Tensor) -> None:
        out.data = a.data - b.data

    return _node(a.data - b.data, (a, b), backward, forward)


def neg(a: Tensor) -> Tensor:
    def backward(out: Tensor) -> None:
        a.accumulate(-out.grad)

    def forward(out: Tensor) -> None:
        out.data = -a.data

    return _node(-a.data, (a,), backward, forward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def backward(out: Tensor) -> None:
        a.accumulate(_unbroadcast(out.grad * b.data, a.data.shape))
        b.accumulate(_unbroadcast(out.grad * a.data, b.data.shape))

    def forward(out: Tensor) -> None:
        out.data = a.data * b.data

    return _node(a.data * b.data, (a, b), backward, forward)


def power(a: Tensor, exponent: float) -> Tensor:
    """Elementwise ``a ** exponent`` for a fixed float exponent."""
    p = float(exponent)

    def backward(out: Tensor) -> None:
        a.accumulate(out.grad * p * np.power(a.data, p - 1.0))

    def forward(out: Tensor) -> None:
        out.data = np.power(a.data, p)

    return _node(np.power(a.data, p), (a,), backward, forward)


def absval(a: Tensor) -> Tensor:
    def backward(out: Tensor) -> None:
        a.accumulate(out.grad * np.sign(a.data))

    def forward(out: Tensor) -> None:
        out.data = np.abs(a.data)

    return _node(np.abs(a.data), (a,), backward, forward)


# ---------------------------------------------------------------------------
# Linear algebra and shape manipulation
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy's 1-D promotion rules.

    Supports (m,k)@(k,n), (k,)@(k,n), (m,k)@(k,), and (k,)@(k,).

    Raises:
        ShapeError: If the inner dimensions differ (message names both
            shapes) or an operand has more than two dimensions.
    """
    if a.data.ndim > 2 or b.data.ndim > 2 or a.data.ndim == 0 or b.data.ndim == 0:
        raise ShapeError(f"matmul expects 1-D or 2-D operands, got {a.data.shape} @ {b.data.shape}")
    inner_a = a.data.shape[-1]
    inner_b = b.data.shape[0]
    if inner_a != inner_b:
        raise ShapeError(f"matmul inner dimensions differ: {a.data.shape} @ {b.data.shape}")

    def backward(out: Tensor) -> None:
        g = out.grad
        if a.data.ndim == 1 and b.data.ndim == 1:  # dot -> scalar
            a.accumulate(g * b.data)
            b.accumulate(g * a.data)
        elif a.data.ndim == 1:  # (k,) @ (k,n) -> (n,)
            a.accumulate(g @ b.data.T)
            b.accumulate(np.outer(a.data, g))
        elif b.data.ndim == 1:  # (m,k) @ (k,) -> (m,)
            a.accumulate(np.outer(g, b.data))
            b.accumulate(a.data.T @ g)
        else:
            a.accumulate(g @ b.data.T)
            b.accumulate(a.data.T @ g)

    def forward(out: Tensor) -> None:
        out.data = a.data @ b.data

    return _node(a.data @ b.data, (a, b), backward, forward)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.data.shape}")

    def backward(out: Tensor) -> None:
        a.accumulate(out.grad.T)

    def forward(out: Tensor) -> None:
        out.data = a.data.T

    return _node(a.data.T, (a,), backward, forward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def backward(out: Tensor) -> None:
        a.accumulate(out.grad.reshape(a.data.shape))

    def forward(out: Tensor) -> None:
        out.data = a.data.reshape(shape)

    return _node(a.data.reshape(shape), (a,), backward, forward)


def take_row(a: Tensor, index: int) -> Tensor:
    """Extract row ``index`` of a matrix as a vector."""
    if a.data.ndim != 2:
        raise ShapeError(f"take_row expects a matrix, got shape {a.data.shape}")
    if not 0 <= index < a.data.shape[0]:
        raise ShapeError(f"take_row index {index} out of range for shape {a.data.shape}")

    def backward(out: Tensor) -> None:
        g = np.zeros_like(a.data)
        g[index] = out.grad
        a.accumulate(g)

    def forward(out: Tensor) -> None:
        out.data = a.data[index].copy()

    return _node(a.data[index].copy(), (a,), backward, forward)


def take_rows(a: Tensor, indices: Sequence[int]) -> Tensor:
    """Gather rows by index (repeats allowed; gradients scatter-add)."""
    if a.data.ndim != 2:
        raise ShapeError(f"take_rows expects a matrix, got shape {a.data.shape}")
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise ShapeError(f"take_rows indices out of range for shape {a.data.shape}")

    def backward(out: Tensor) -> None:
        g = np.zeros_like(a.data)
        np.add.at(g, idx, out.grad)
        a.accumulate(g)

    def forward(out: Tensor) -> None:
        out.data = a.data[idx].copy()

    return _node(a.data[idx].copy(), (a,), backward, forward)


def slice_cols(a: Tensor, lo: int, hi: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"slice_cols expects a matrix, got shape {a.data.shape}")

    def backward(out: Tensor) -> None:
        g = np.zeros_like(a.data)
        g[:, lo:hi] = out.grad
        a.accumulate(g)

    def forward(out: Tensor) -> None:
        out.data = a.data[:, lo:hi].copy()

    return _node(a.data[:, lo:hi].copy(), (a,), backward, forward)


def slice1d(a: Tensor, lo: int, hi: int) -> Tensor:
    if a.data.ndim != 1:
        raise ShapeError(f"slice1d expects a vector, got shape {a.data.shape}")

    def backward(out: Tensor) -> None:
        g = np.zeros_like(a.data)
        g[lo:hi] = out.grad
        a.accumulate(g)

    def forward(out: Tensor) -> None:
        out.data = a.data[lo:hi].copy()

    return _node(a.data[lo:hi].copy(), (a,), backward, forward)


def cat1d(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ShapeError(f"cat1d expects vectors, got {a.data.shape} and {b.data.shape}")
    na = a.data.shape[0]

    def backward(out: Tensor) -> None:
        a.accumulate(out.grad[:na])
        b.accumulate(out.grad[na:])

    def forward(out: Tensor) -> None:
        out.data = np.concatenate([a.data, b.data])

    return _node(np.concatenate([a.data, b.data]), (a, b), backward, forward)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate matrices along columns."""
    parts = tuple(parts)
    if not parts:
        raise ShapeError("concat_cols needs at least one operand")
    widths = [p.data.shape[1] for p in parts]
    offsets = np.concatenate([[0], np.cumsum(widths)])

    def backward(out: Tensor) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            p.accumulate(out.grad[:, lo:hi])

    def forward(out: Tensor) -> None:
        out.data = np.concatenate([p.data for p in parts], axis=1)

    return _node(np.concatenate([p.data for p in parts], axis=1), parts, backward, forward)


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------

def sum_all(a: Tensor) -> Tensor:
    def backward(out: Tensor) -> None:
        a.accumulate(np.full_like(a.data, float(out.grad)))

    def forward(out: Tensor) -> None:
        out.data = np.asarray(a.data.sum())

    return _node(np.asarray(a.data.sum()), (a,), backward, forward)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size

    def backward(out: Tensor) -> None:
        a.accumulate(np.full_like(a.data, float(out.grad) / n))

    def forward(out: Tensor) -> None:
        out.data = np.asarray(a.data.mean())

    return _node(np.asarray(a.data.mean()), (a,), backward, forward)


def sum_axis(a: Tensor, axis: int, keepdims: bool = True) -> Tensor:
    def backward(out: Tensor) -> None:
        g = out.grad if keepdims else np.expand_dims(out.grad, axis)
        a.accumulate(np.broadcast_to(g, a.data.shape).copy())

    def forward(out: Tensor) -> None:
        out.data = a.data.sum(axis=axis, keepdims=keepdims)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward, forward)


# ---------------------------------------------------------------------------
# Nonlinearities and normalization
# ---------------------------------------------------------------------------

def gelu(a: Tensor) -> Tensor:
    """Tanh-form GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    def _value(x: np.ndarray) -> np.ndarray:
        u = _GELU_C * (x + _GELU_A * x ** 3)
        return 0.5 * x * (1.0 + np.tanh(u))

    def backward(out: Tensor) -> None:
        x = a.data
        u = _GELU_C * (x + _GELU_A * x ** 3)
        t = np.tanh(u)
        du = _GELU_C * (1.0 + 3.0 * _GELU_A * x ** 2)
        a.accumulate(out.grad * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * du))

    def forward(out: Tensor) -> None:
        out.data = _value(a.data)

    return _node(_value(a.data), (a,), backward, forward)


def sigmoid(a: Tensor) -> Tensor:
    def _value(x: np.ndarray) -> np.ndarray:
        # Split by sign for overflow-free evaluation.
        pos = x >= 0
        out = np.empty_like(x)
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out

    def backward(out: Tensor) -> None:
        s = out.data
        a.accumulate(out.grad * s * (1.0 - s))

    def forward(out: Tensor) -> None:
        out.data = _value(a.data)

    return _node(_value(a.data), (a,), backward, forward)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax of a matrix with max-subtraction for stability.

    Raises:
        NumericError: If the input contains NaN or infinite entries.
    """
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got shape {a.data.shape}")
    if not np.isfinite(a.data).all():
        raise NumericError("softmax_rows input contains non-finite entries")

    def _value(x: np.ndarray) -> np.ndarray:
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def backward(out: Tensor) -> None:
        s = out.data
        g = out.grad
        a.accumulate(s * (g - (g * s).sum(axis=1, keepdims=True)))

    def forward(out: Tensor) -> None:
        out.data = _value(a.data)

    return _node(_value(a.data), (a,), backward, forward)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = LN_EPS) -> Tensor:
    """Normalize over the last axis: gain * (x - mean) / sqrt(var + eps) + bias.

    Uses the biased variance (divide by n).  Applies row-wise to matrices and
    directly to vectors.

    Raises:
        ShapeError: If the normalized axis has fewer than two entries or the
            gain/bias lengths do not match it.
    """
    n = a.data.shape[-1]
    if n < 2:
        raise ShapeError(f"layer_norm needs at least 2 entries on the last axis, got shape {a.data.shape}")
    if gain.data.shape != (n,) or bias.data.shape != (n,):
        raise ShapeError(
            f"layer_norm gain/bias shapes {gain.data.shape}/{bias.data.shape} do not match last axis {n}")

    def _stats(x: np.ndarray):
        mu = x.mean(axis=-1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
        sd = np.sqrt(var + eps)
        return mu, sd

    def backward(out: Tensor) -> None:
        x = a.data
        mu, sd = _stats(x)
        xhat = (x - mu) / sd
        g = out.grad
        if x.ndim == 1:
            gain.accumulate(g * xhat)
            bias.accumulate(g)
        else:
            gain.accumulate((g * xhat).sum(axis=0))
            bias.accumulate(g.sum(axis=0))
        gg = g * gain.data
        a.accumulate((gg - gg.mean(axis=-1, keepdims=True)
                      - xhat * (gg * xhat).mean(axis=-1, keepdims=True)) / sd)

    def _value(x: np.ndarray) -> np.ndarray:
        mu, sd = _stats(x)
        return gain.data * ((x - mu) / sd) + bias.data

    def forward(out: Tensor) -> None:
        out.data = _value(a.data)

    return _node(_value(a.data), (a, gain, bias), backward, forward)


def conv1d(seq: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Temporal convolution with zero padding and unchanged length.

    Args:
        seq: Input sequence, shape (T, C_in).
        kernel: Filter bank, shape (k, C_in, C_out) with odd k.
        bias: Per-channel bias, shape (C_out,).

    Returns:
        Tensor of shape (T, C_out) where
        out[t] = bias + sum_tau seq[t + tau - (k-1)/2] @ kernel[tau]
        (out-of-range frames contribute zero).

    Raises:
        ConfigError: If k is even.
        ShapeError: On mismatched channel counts.
    """
    if kernel.data.ndim != 3:
        raise ShapeError(f"conv1d kernel must be (k, C_in, C_out), got shape {kernel.data.shape}")
    k, c_in, c_out = kernel.data.shape
    if k % 2 == 0:
        raise ConfigError(f"conv1d kernel width must be odd, got {k}")
    if seq.data.ndim != 2 or seq.data.shape[1] != c_in:
        raise ShapeError(f"conv1d input shape {seq.data.shape} incompatible with kernel {kernel.data.shape}")
    if bias.data.shape != (c_out,):
        raise ShapeError(f"conv1d bias shape {bias.data.shape} does not match C_out={c_out}")
    half = (k - 1) // 2
    t_len = seq.data.shape[0]

    def _value(x: np.ndarray) -> np.ndarray:
        padded = np.zeros((t_len + 2 * half, c_in))
        padded[half:half + t_len] = x
        out = np.tile(bias.data, (t_len, 1))
        for tau in range(k):
            out += padded[tau:tau + t_len] @ kernel.data[tau]
        return out

    def backward(out: Tensor) -> None:
        g = out.grad
        bias.accumulate(g.sum(axis=0))
        padded = np.zeros((t_len + 2 * half, c_in))
        padded[half:half + t_len] = seq.data
        gpad = np.zeros_like(padded)
        gker = np.zeros_like(kernel.data)
        for tau in range(k):
            gker[tau] = padded[tau:tau + t_len].T @ g
            gpad[tau:tau + t_len] += g @ kernel.data[tau].T
        kernel.accumulate(gker)
        seq.accumulate(gpad[half:half + t_len])

    def forward(out: Tensor) -> None:
        out.data = _value(seq.data)

    return _node(_value(seq.data), (seq, kernel, bias), backward, forward)


# ---------------------------------------------------------------------------
# Record traversal
# ---------------------------------------------------------------------------

def topo_order(root: Tensor) -> list[Tensor]:
    """Parents-before-children ordering of the record reachable from root."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(tensor) into ``.grad`` of every leaf antecedent.

    Leaf gradients add onto whatever is already stored, so separate losses
    can be backpropagated one after another before an optimizer step.
    Intermediate (non-leaf) gradients are scratch space and are reset at the
    start of every call.

    Raises:
        ContractError: If root is not a 0-d tensor.
    """
    if root.data.shape != ():
        raise ContractError(f"backward requires a scalar root, got shape {root.data.shape}")
    order = topo_order(root)
    for node in order:
        if node._parents:
            node.grad = None
    root.grad = np.asarray(1.0) if root.grad is None else root.grad + 1.0
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node)


def replay(root: Tensor) -> np.ndarray:
    """Re-execute the recorded forward pass and return the root's new value.

    Every non-leaf node's data is recomputed in topological order from its
    parents' current data, so replaying an untouched record reproduces the
    original outputs bit-for-bit, and replaying after editing a leaf's data
    propagates the change.
    """
    for node in topo_order(root):
        if node._forward is not None:
            node._forward(node)
    return root.data.copy()


def collect_parameters(tensors: Iterable[Tensor]) -> list[Tensor]:
    """Filter an iterable down to gradient-bearing tensors (convenience)."""
    return [t for t in tensors if t.requires_grad]
