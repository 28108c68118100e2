"""Dense float64 tensors with reverse-mode automatic differentiation.

Every learnable quantity in this package lives in a :class:`Tensor`. Operations
on tracked tensors build a computation graph; ``backward`` replays it in
reverse topological order to accumulate gradients. Values are always float64
and row-major.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested operation."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of the operation."""


class NumericsError(ArithmeticError):
    """A computation produced or would produce non-finite values."""


def _unbroadcast(grad, shape):
    # Reduce a broadcast gradient back to the original operand shape.
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, values, requires_grad=False, _parents=(), _backward=None, op="leaf"):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self):
        return self.values.size

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, tracked={self.requires_grad})"

    def item(self):
        return float(self.values)

    def backward(self):
        backward(self)

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return tslice(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def parameter(values, rng=None):
    """A tracked leaf tensor."""
    return Tensor(np.array(values, dtype=np.float64), requires_grad=True)


def constant(values):
    return Tensor(values)


def zeros(shape):
    return Tensor(np.zeros(shape))


def _coerce(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _check_broadcast(op, a_vals, b_vals):
    try:
        np.broadcast_shapes(a_vals.shape, b_vals.shape)
    except ValueError:
        raise ShapeError(
            f"{op}: incompatible shapes {a_vals.shape} and {b_vals.shape}"
        ) from None


def add(a, b):
    a, b = _coerce(a), _coerce(b)
    _check_broadcast("add", a.values, b.values)
    out = a.values + b.values
    if not (a.requires_grad or b.requires_grad):
        return Tensor(out, op="add")
    ash, bsh = a.values.shape, b.values.shape

    def bwd(g):
        return _unbroadcast(g, ash), _unbroadcast(g, bsh)

    return Tensor(out, True, (a, b), bwd, "add")


def sub(a, b):
    a, b = _coerce(a), _coerce(b)
    _check_broadcast("sub", a.values, b.values)
    out = a.values - b.values
    if not (a.requires_grad or b.requires_grad):
        return Tensor(out, op="sub")
    ash, bsh = a.values.shape, b.values.shape

    def bwd(g):
        return _unbroadcast(g, ash), _unbroadcast(-g, bsh)

    return Tensor(out, True, (a, b), bwd, "sub")


def mul(a, b):
    a, b = _coerce(a), _coerce(b)
    _check_broadcast("mul", a.values, b.values)
    out = a.values * b.values
    if not (a.requires_grad or b.requires_grad):
        return Tensor(out, op="mul")
    av, bv = a.values, b.values

    def bwd(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return Tensor(out, True, (a, b), bwd, "mul")


def div(a, b):
    a, b = _coerce(a), _coerce(b)
    _check_broadcast("div", a.values, b.values)
    if np.any(b.values == 0.0):
        raise DomainError("div: division by zero denominator")
    out = a.values / b.values
    if not (a.requires_grad or b.requires_grad):
        return Tensor(out, op="div")
    av, bv = a.values, b.values

    def bwd(g):
        return _unbroadcast(g / bv, av.shape), _unbroadcast(-g * av / (bv * bv), bv.shape)

    return Tensor(out, True, (a, b), bwd, "div")


def matmul(a, b):
    a, b = _coerce(a), _coerce(b)
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ShapeError(
            f"matmul: expects 2-d operands, got {a.values.shape} and {b.values.shape}"
        )
    if a.values.shape[1] != b.values.shape[0]:
        raise ShapeError(
            f"matmul: inner dimensions differ, {a.values.shape} @ {b.values.shape}"
        )
    out = a.values @ b.values
    if not (a.requires_grad or b.requires_grad):
        return Tensor(out, op="matmul")
    av, bv = a.values, b.values

    def bwd(g):
        return g @ bv.T, av.T @ g

    return Tensor(out, True, (a, b), bwd, "matmul")


def tanh(a):
    a = _coerce(a)
    out = np.tanh(a.values)
    if not a.requires_grad:
        return Tensor(out, op="tanh")

    def bwd(g):
        return (g * (1.0 - out * out),)

    return Tensor(out, True, (a,), bwd, "tanh")


def _expit(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def sigmoid(a):
    a = _coerce(a)
    out = _expit(a.values)
    if not a.requires_grad:
        return Tensor(out, op="sigmoid")

    def bwd(g):
        return (g * out * (1.0 - out),)

    return Tensor(out, True, (a,), bwd, "sigmoid")


def softplus(a):
    # max(x, 0) + log1p(exp(-|x|)): overflow-safe for large |x|
    a = _coerce(a)
    x = a.values
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    if not a.requires_grad:
        return Tensor(out, op="softplus")
    s = _expit(x)

    def bwd(g):
        return (g * s,)

    return Tensor(out, True, (a,), bwd, "softplus")


def exp(a):
    a = _coerce(a)
    out = np.exp(a.values)
    if not a.requires_grad:
        return Tensor(out, op="exp")

    def bwd(g):
        return (g * out,)

    return Tensor(out, True, (a,), bwd, "exp")


def log(a):
    a = _coerce(a)
    if np.any(a.values <= 0.0):
        idx = np.argwhere(a.values <= 0.0)[0]
        raise DomainError(f"log: non-positive input at index {tuple(idx)}")
    out = np.log(a.values)
    if not a.requires_grad:
        return Tensor(out, op="log")
    av = a.values

    def bwd(g):
        return (g / av,)

    return Tensor(out, True, (a,), bwd, "log")


def square(a):
    a = _coerce(a)
    out = a.values * a.values
    if not a.requires_grad:
        return Tensor(out, op="square")
    av = a.values

    def bwd(g):
        return (2.0 * g * av,)

    return Tensor(out, True, (a,), bwd, "square")


def tsum(a, axis=None, keepdims=False):
    a = _coerce(a)
    out = a.values.sum(axis=axis, keepdims=keepdims)
    if not a.requires_grad:
        return Tensor(out, op="sum")
    ash = a.values.shape

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, ash).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, ash).copy(),)

    return Tensor(out, True, (a,), bwd, "sum")


def tmean(a, axis=None, keepdims=False):
    a = _coerce(a)
    if axis is None:
        n = a.values.size
    else:
        n = a.values.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def concat(tensors, axis=-1):
    tensors = [_coerce(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: empty input list")
    try:
        out = np.concatenate([t.values for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(
            f"concat: incompatible shapes {[t.values.shape for t in tensors]}"
        ) from None
    if not any(t.requires_grad for t in tensors):
        return Tensor(out, op="concat")
    sizes = [t.values.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(out, True, tuple(tensors), bwd, "concat")


def tslice(a, key):
    a = _coerce(a)
    out = a.values[key]
    if not a.requires_grad:
        return Tensor(out, op="slice")
    ash = a.values.shape

    def bwd(g):
        z = np.zeros(ash)
        z[key] = g
        return (z,)

    return Tensor(out, True, (a,), bwd, "slice")


def reshape(a, shape):
    a = _coerce(a)
    try:
        out = a.values.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.values.shape} as {shape}") from None
    if not a.requires_grad:
        return Tensor(out, op="reshape")
    ash = a.values.shape

    def bwd(g):
        return (g.reshape(ash),)

    return Tensor(out, True, (a,), bwd, "reshape")


# ln(n!) cache, extended on demand; entry i holds ln(i!)
_LN_FACT = np.zeros(1)


def _ln_factorial_table(n_max):
    global _LN_FACT
    if n_max >= _LN_FACT.size:
        start = _LN_FACT.size
        ext = _LN_FACT[-1] + np.cumsum(np.log(np.arange(start, n_max + 1, dtype=np.float64)))
        _LN_FACT = np.concatenate([_LN_FACT, ext])
    return _LN_FACT


def lgamma_int(k):
    """ln(Gamma(k)) = ln((k-1)!) for integer k >= 1.

    Constant with respect to any tracked input; the result is never tracked.
    """
    kv = k.values if isinstance(k, Tensor) else np.asarray(k, dtype=np.float64)
    if np.any(kv != np.round(kv)):
        idx = np.argwhere(kv != np.round(kv))[0]
        raise DomainError(f"lgamma_int: non-integer input at index {tuple(idx)}")
    if np.any(kv < 1):
        idx = np.argwhere(kv < 1)[0]
        raise DomainError(f"lgamma_int: input < 1 at index {tuple(idx)}")
    ki = kv.astype(np.int64)
    table = _ln_factorial_table(int(ki.max()) - 1 if ki.size else 0)
    return Tensor(table[ki - 1], op="lgamma_int")


class GradientTape:
    """Ordered record of the operations reachable from one output.

    The order is topological: every operation's inputs precede it.
    """

    __slots__ = ("operations",)

    def __init__(self, operations):
        self.operations = operations

    @classmethod
    def from_output(cls, out):
        order = []
        visited = set()
        stack = [(out, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        return cls(order)


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every tracked leaf."""
    if np.size(loss.values) != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    tape = GradientTape.from_output(loss)
    grads = {id(loss): np.ones_like(loss.values)}
    for node in reversed(tape.operations):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is not None:
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        elif node.requires_grad:
            node.grad = g.copy() if node.grad is None else node.grad + g


def gradients(loss, params):
    """Gradient of ``loss`` for each tensor in ``params``; zeros if unreachable."""
    for p in params:
        p.grad = None
    backward(loss)
    return [p.grad if p.grad is not None else np.zeros_like(p.values) for p in params]


class Adam:
    """Adam with bias correction. Defaults: lr 1e-3, betas (0.9, 0.999), eps 1e-8."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if isinstance(params, dict):
            params = list(params.values())
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.values)
            if g.shape != p.values.shape:
                raise ShapeError(
                    f"adam: gradient shape {g.shape} does not match parameter {p.values.shape}"
                )
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g
            m_hat = self.m[i] / (1.0 - b1 ** self.t)
            v_hat = self.v[i] / (1.0 - b2 ** self.t)
            p.values -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def save_checkpoint(path, params):
    """Write named parameters as an .npz map {name -> float64 array}."""
    np.savez(path, **{name: p.values for name, p in params.items()})


def load_checkpoint(path):
    with np.load(path) as data:
        return {name: data[name].astype(np.float64) for name in data.files}


def restore_checkpoint(params, path):
    """Load values from ``path`` into an existing named parameter map."""
    loaded = load_checkpoint(path)
    for name, p in params.items():
        if name not in loaded:
            raise KeyError(f"checkpoint missing parameter '{name}'")
        if loaded[name].shape != p.values.shape:
            raise ShapeError(
                f"checkpoint parameter '{name}' has shape {loaded[name].shape}, "
                f"expected {p.values.shape}"
            )
        p.values[...] = loaded[name]
