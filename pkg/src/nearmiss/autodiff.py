"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Define-by-run: every operation on gradient-tracked tensors records its
inputs and a backward closure; ``Tensor.backward()`` replays the recorded
operations once each, in reverse topological order. The set of primitives
is deliberately small: dense algebra, the elementwise nonlinearities used
by the policy networks, shape plumbing, and a first-order linear scan.
"""

from __future__ import annotations

import contextlib

import numpy as np

from .errors import ContractError, DimensionError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (used for target networks)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A float64 array plus the bookkeeping needed for reverse traversal."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) and _grad_enabled
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _result(data, parents, backward):
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    # -- basic introspection ---------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- reverse traversal -----------------------------------------------------

    def backward(self):
        """Accumulate gradients of this scalar into every reachable tensor."""
        if self.data.size != 1:
            raise ContractError(
                f"backward() requires a scalar, got shape {self.shape}"
            )
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    def _accumulate(self, grad):
        # rebind instead of mutating: backward closures may hand the same
        # array to several parents
        if self.grad is None:
            self.grad = grad
        else:
            self.grad = self.grad + grad

    # -- arithmetic -------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, -as_tensor(other))

    def __rsub__(self, other):
        return add(as_tensor(other), -self)

    def __neg__(self):
        out = Tensor._result(-self.data, (self,), None)
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(-g)
        return out

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise ContractError("only scalar exponents are supported")
        out = Tensor._result(self.data ** exponent, (self,), None)
        if out.requires_grad:
            base = self.data

            def backward(g):
                self._accumulate(g * exponent * base ** (exponent - 1))

            out._backward = backward
        return out

    def __getitem__(self, index):
        out = Tensor._result(self.data[index], (self,), None)
        if out.requires_grad:
            shape = self.data.shape

            def backward(g):
                full = np.zeros(shape, dtype=np.float64)
                full[index] = g
                self._accumulate(full)

            out._backward = backward
        return out

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` over the axes that numpy broadcasting introduced."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor._result(a.data + b.data, (a, b), None)
    if out.requires_grad:

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.data.shape))

        out._backward = backward
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor._result(a.data * b.data, (a, b), None)
    if out.requires_grad:

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.data.shape))

        out._backward = backward
    return out


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor._result(a.data / b.data, (a, b), None)
    if out.requires_grad:

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g / b.data, a.data.shape))
            if b.requires_grad:
                b._accumulate(
                    _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)
                )

        out._backward = backward
    return out


def matmul(a, b) -> Tensor:
    """Matrix product; the right operand must be a 2-D parameter matrix."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim < 1:
        raise DimensionError(
            f"matmul expects a 2-D right operand, got {a.shape} @ {b.shape}"
        )
    if a.data.shape[-1] != b.data.shape[0]:
        raise DimensionError(f"inner dimensions disagree: {a.shape} @ {b.shape}")
    out = Tensor._result(a.data @ b.data, (a, b), None)
    if out.requires_grad:

        def backward(g):
            if a.requires_grad:
                a._accumulate(g @ b.data.T)
            if b.requires_grad:
                k, n = b.data.shape
                b._accumulate(a.data.reshape(-1, k).T @ g.reshape(-1, n))

        out._backward = backward
    return out


def exp(x) -> Tensor:
    x = as_tensor(x)
    value = np.exp(x.data)
    out = Tensor._result(value, (x,), None)
    if out.requires_grad:
        out._backward = lambda g: x._accumulate(g * value)
    return out


def log(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor._result(np.log(x.data), (x,), None)
    if out.requires_grad:
        out._backward = lambda g: x._accumulate(g / x.data)
    return out


def tanh(x) -> Tensor:
    x = as_tensor(x)
    value = np.tanh(x.data)
    out = Tensor._result(value, (x,), None)
    if out.requires_grad:
        out._backward = lambda g: x._accumulate(g * (1.0 - value * value))
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # 0.5*(1+tanh(x/2)) avoids overflow at large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    value = _sigmoid(x.data)
    out = Tensor._result(value, (x,), None)
    if out.requires_grad:
        out._backward = lambda g: x._accumulate(g * value * (1.0 - value))
    return out


def relu(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor._result(np.maximum(x.data, 0.0), (x,), None)
    if out.requires_grad:
        mask = x.data > 0.0
        out._backward = lambda g: x._accumulate(g * mask)
    return out


def _softplus(x: np.ndarray) -> np.ndarray:
    # max(x, 0) + log1p(exp(-|x|)) is stable and much faster than logaddexp
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def softplus(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor._result(_softplus(x.data), (x,), None)
    if out.requires_grad:
        out._backward = lambda g: x._accumulate(g * _sigmoid(x.data))
    return out


def silu(x) -> Tensor:
    x = as_tensor(x)
    sig = _sigmoid(x.data)
    out = Tensor._result(x.data * sig, (x,), None)
    if out.requires_grad:
        out._backward = lambda g: x._accumulate(g * sig * (1.0 + x.data * (1.0 - sig)))
    return out


def sum_(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    out = Tensor._result(x.data.sum(axis=axis, keepdims=keepdims), (x,), None)
    if out.requires_grad:
        shape = x.data.shape

        def backward(g):
            g = np.asarray(g)
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(g, shape).copy())

        out._backward = backward
    return out


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else np.prod(
        [x.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
    )
    return sum_(x, axis=axis, keepdims=keepdims) * (1.0 / float(count))


def reshape(x, *shape) -> Tensor:
    x = as_tensor(x)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out = Tensor._result(x.data.reshape(shape), (x,), None)
    if out.requires_grad:
        original = x.data.shape
        out._backward = lambda g: x._accumulate(g.reshape(original))
    return out


def concatenate(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor._result(
        np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), None
    )
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def backward(g):
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    index = [slice(None)] * g.ndim
                    index[axis] = slice(lo, hi)
                    t._accumulate(g[tuple(index)])

        out._backward = backward
    return out


def _pscan(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hillis-Steele inclusive scan of h_t = a_t*h_{t-1} + b_t along axis 1."""
    coeff = a.copy()
    accum = b.copy()
    length = a.shape[1]
    shift = 1
    while shift < length:
        accum[:, shift:] = accum[:, shift:] + coeff[:, shift:] * accum[:, :-shift]
        coeff[:, shift:] = coeff[:, shift:] * coeff[:, :-shift]
        shift *= 2
    return accum


def linear_scan(a, b, parallel: bool = False) -> Tensor:
    """First-order linear recurrence h_t = a_t*h_{t-1} + b_t with h_0 = 0.

    Inputs are shaped (batch, time, ...) and scanned along axis 1. The
    sequential and parallel evaluations compute the same values; the
    parallel path trades extra multiplies for log-depth combination.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"scan operands disagree: {a.shape} vs {b.shape}")
    if a.ndim < 2:
        raise DimensionError("scan operands need a (batch, time, ...) layout")
    if parallel:
        h = _pscan(a.data, b.data)
    else:
        h = np.empty_like(b.data)
        state = np.zeros_like(b.data[:, 0])
        for t in range(a.shape[1]):
            state = a.data[:, t] * state + b.data[:, t]
            h[:, t] = state
    out = Tensor._result(h, (a, b), None)
    if out.requires_grad:

        def backward(g):
            length = a.shape[1]
            grad_b = np.empty_like(g)
            carry = np.zeros_like(g[:, 0])
            # reverse recurrence: q_t = g_t + a_{t+1} * q_{t+1}
            for t in range(length - 1, -1, -1):
                carry = g[:, t] + carry
                grad_b[:, t] = carry
                if t > 0:
                    carry = a.data[:, t] * carry
            if b.requires_grad:
                b._accumulate(grad_b)
            if a.requires_grad:
                grad_a = np.zeros_like(grad_b)
                grad_a[:, 1:] = grad_b[:, 1:] * h[:, :-1]
                a._accumulate(grad_a)

        out._backward = backward
    return out
