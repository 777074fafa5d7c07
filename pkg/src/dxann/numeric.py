"""Dense tensors with a small reverse-mode differentiation engine.

Every operation records its parents and a closure mapping the output
gradient to parent gradients. :func:`gradient` walks the recorded graph
backwards from a scalar and accumulates into :class:`Parameter` leaves.

Only scalar-with-tensor broadcasting is allowed for binary operations;
dense layers use the explicit :func:`add_bias` row broadcast.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, ContractError, DimensionError, DomainError

DEFAULT_DTYPE = np.float64

_Backward = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tensor:
    """Immutable dense array of real scalars (row-major, numpy-backed)."""

    __slots__ = ("data", "_parents", "_backward", "requires_grad")
    __array_priority__ = 1000

    def __init__(self, data, dtype=None):
        if dtype is None:
            if isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
                dtype = data.dtype
            else:
                dtype = DEFAULT_DTYPE
        arr = np.array(data, dtype=dtype)
        arr.setflags(write=False)
        self.data = arr
        self._parents: tuple[Tensor, ...] = ()
        self._backward: _Backward | None = None
        self.requires_grad = False

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: tuple[Tensor, ...], backward: _Backward) -> Tensor:
        out = cls.__new__(cls)
        data.setflags(write=False)
        out.data = data
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return np.array(self.data)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(shape={self.shape}, data={self.data!r})"

    def __len__(self) -> int:
        return len(self.data)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ContractError("division is only supported by a python scalar")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """A learnable leaf tensor with a gradient buffer of identical shape."""

    __slots__ = ("grad", "name")

    def __init__(self, value, name: str, dtype=None):
        super().__init__(value, dtype=dtype)
        self.data = np.array(self.data)  # writable: the optimizer updates in place
        self.grad = np.zeros_like(self.data)
        self.name = name
        self.requires_grad = True

    @property
    def value(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    # python scalars adopt the dtype of the tensor operand
    if isinstance(a, Tensor) and not isinstance(b, Tensor) and np.ndim(b) == 0:
        return a, Tensor(b, dtype=a.dtype)
    if isinstance(b, Tensor) and not isinstance(a, Tensor) and np.ndim(a) == 0:
        return Tensor(a, dtype=b.dtype), b
    return as_tensor(a), as_tensor(b)


def _check_same_or_scalar(a: Tensor, b: Tensor, opname: str) -> None:
    if a.shape == b.shape or a.data.ndim == 0 or b.data.ndim == 0:
        return
    raise DimensionError(f"{opname}: shapes {a.shape} and {b.shape} are incompatible")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    # only the scalar-with-tensor case reaches here
    return np.asarray(g.sum()).reshape(shape)


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_same_or_scalar(a, b, "add")
    return Tensor._from_op(
        a.data + b.data, (a, b),
        lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_same_or_scalar(a, b, "sub")
    return Tensor._from_op(
        a.data - b.data, (a, b),
        lambda g: (_reduce_to(g, a.shape), _reduce_to(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_same_or_scalar(a, b, "mul")
    return Tensor._from_op(
        a.data * b.data, (a, b),
        lambda g: (_reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._from_op(-a.data, (a,), lambda g: (-g,))


def square(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._from_op(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return Tensor._from_op(y, (a,), lambda g: (g * (1.0 - y * y),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return Tensor._from_op(y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        bad = a.data[a.data <= 0].reshape(-1)[0]
        raise DomainError(f"log of non-positive value {bad!r}")
    return Tensor._from_op(np.log(a.data), (a,), lambda g: (g / a.data,))


_ELEMENTWISE = {
    "add": add, "sub": sub, "mul": mul,
    "neg": neg, "square": square, "tanh": tanh, "exp": exp, "log": log,
}


def elementwise(op: str, *args) -> Tensor:
    """Apply one of add/sub/mul/neg/square/tanh/exp/log by name."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ConfigurationError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    return Tensor._from_op(
        a.data @ b.data, (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def add_bias(a, bias) -> Tensor:
    """Add a vector of length n to every row of an ``[..., n]`` tensor."""
    a, bias = as_tensor(a), as_tensor(bias)
    if bias.data.ndim != 1 or a.data.ndim < 1 or a.shape[-1] != bias.shape[0]:
        raise DimensionError(f"add_bias: shapes {a.shape} and {bias.shape} are incompatible")
    lead = tuple(range(a.data.ndim - 1))
    return Tensor._from_op(
        a.data + bias.data, (a, bias),
        lambda g: (g, g.sum(axis=lead) if lead else g),
    )


def _normalize_axes(axes, ndim: int) -> tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, (int, np.integer)):
        axes = (axes,)
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise DimensionError(f"reduce_sum: axis {ax} out of range for rank {ndim}")
        out.append(int(ax) % ndim)
    return tuple(sorted(set(out)))


def reduce_sum(a, axes=None) -> Tensor:
    """Sum over ``axes`` (all axes when omitted)."""
    a = as_tensor(a)
    axes_t = _normalize_axes(axes, a.data.ndim)
    out = np.asarray(a.data.sum(axis=axes_t), dtype=a.dtype)

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, axes_t), a.shape).copy(),)

    return Tensor._from_op(out, (a,), backward)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    try:
        out = a.data.reshape(shape).copy()
    except ValueError:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}") from None
    return Tensor._from_op(out, (a,), lambda g: (g.reshape(a.shape),))


def conv2d(inputs, kernels, bias) -> Tensor:
    """Stride-1 cross-correlation with zero "same" padding plus channel bias.

    ``inputs`` is ``[Cin, H, W]`` or batched ``[B, Cin, H, W]``; ``kernels``
    is ``[Cout, Cin, kH, kW]`` with odd ``kH`` and ``kW``.
    """
    x, k, b = as_tensor(inputs), as_tensor(kernels), as_tensor(bias)
    if k.data.ndim != 4:
        raise DimensionError(f"conv2d: kernels must be rank 4, got shape {k.shape}")
    cout, cin, kh, kw = k.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigurationError(f"conv2d: even kernel size {kh}x{kw} is unsupported")
    batched = x.data.ndim == 4
    if x.data.ndim not in (3, 4) or x.shape[-3] != cin:
        raise DimensionError(f"conv2d: input shape {x.shape} does not match kernels {k.shape}")
    if b.shape != (cout,):
        raise DimensionError(f"conv2d: bias shape {b.shape} does not match {cout} output channels")

    xb = x.data if batched else x.data[None]
    n, _, h, w = xb.shape
    ph, pw = kh // 2, kw // 2
    xpad = np.zeros((n, cin, h + 2 * ph, w + 2 * pw), dtype=xb.dtype)
    xpad[:, :, ph:ph + h, pw:pw + w] = xb

    out = np.zeros((n, cout, h, w), dtype=np.result_type(xb, k.data))
    for p in range(kh):
        for q in range(kw):
            out += np.einsum("oc,bcij->boij", k.data[:, :, p, q], xpad[:, :, p:p + h, q:q + w])
    out += b.data[None, :, None, None]

    def backward(g):
        gb = g if batched else g[None]
        dk = np.zeros_like(k.data)
        dxpad = np.zeros_like(xpad)
        for p in range(kh):
            for q in range(kw):
                win = xpad[:, :, p:p + h, q:q + w]
                dk[:, :, p, q] = np.einsum("boij,bcij->oc", gb, win)
                dxpad[:, :, p:p + h, q:q + w] += np.einsum("oc,boij->bcij", k.data[:, :, p, q], gb)
        dx = dxpad[:, :, ph:ph + h, pw:pw + w]
        return (dx if batched else dx[0]), dk, gb.sum(axis=(0, 2, 3))

    return Tensor._from_op(out if batched else out[0], (x, k, b), backward)


def _topological_order(root: Tensor) -> list[Tensor]:
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
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def gradient(loss: Tensor, params: Iterable[Parameter]) -> None:
    """Accumulate d(loss)/d(p) into ``p.grad`` for every ``p`` in ``params``.

    Repeated calls add to the existing buffers; use :func:`zero_grads`
    between optimisation steps.
    """
    if not isinstance(loss, Tensor) or loss.size != 1:
        shape = loss.shape if isinstance(loss, Tensor) else type(loss).__name__
        raise ContractError(f"gradient: loss must be a scalar tensor, got {shape}")
    wanted = {id(p) for p in params}
    if not loss.requires_grad or not wanted:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Parameter):
            if id(node) in wanted:
                node.grad += g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return None


def zero_grads(params: Iterable[Parameter]) -> None:
    for p in params:
        p.grad[...] = 0.0
