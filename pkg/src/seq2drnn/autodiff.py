"""Small reverse-mode automatic differentiation engine over numpy arrays.

Only the operations needed by the encoder, attention and tree decoder are
provided. Operations are recorded on the innermost active :class:`Tape`; when
no tape is active (inference) nothing is recorded and the ops are plain numpy.

    >>> W = Tensor(np.eye(2), requires_grad=True)
    >>> x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    >>> with Tape() as tape:
    ...     y = dot(matvec(W, x), x)
    ...     tape.backward(y)
    >>> x.grad
    array([2., 4.])
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

PROB_FLOOR = 1e-12


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class OptimizerStateError(RuntimeError):
    """The optimizer was stepped without any populated gradient."""


class Tensor:
    """Dense array with a gradient slot.

    Leaf tensors created with ``requires_grad=True`` (parameters, or inputs of
    a gradient check) own a zero-initialised ``grad`` array that backward
    passes accumulate into. Intermediate results carry a transient gradient
    that is reset at the start of every backward pass.
    """

    __slots__ = ("data", "grad", "requires_grad", "is_leaf", "populated")

    def __init__(self, data, requires_grad: bool = False, dtype=None, _leaf: bool = True):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else None)
        if self.data.dtype.kind != "f":
            self.data = self.data.astype(np.float64)
        self.requires_grad = requires_grad
        self.is_leaf = _leaf
        self.populated = False
        self.grad = np.zeros_like(self.data) if (requires_grad and _leaf) else None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        if self.is_leaf and self.requires_grad:
            self.grad.fill(0.0)
            self.populated = False

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class _RowGrad:
    """Sparse gradient touching a single row of a table."""

    __slots__ = ("index", "values")

    def __init__(self, index: int, values: np.ndarray):
        self.index = index
        self.values = values

    def dense(self, shape, dtype) -> np.ndarray:
        out = np.zeros(shape, dtype=dtype)
        out[self.index] += self.values
        return out


_local = threading.local()


def _stack() -> list:
    s = getattr(_local, "tapes", None)
    if s is None:
        s = _local.tapes = []
    return s


def active_tape() -> "Tape | None":
    s = _stack()
    return s[-1] if s else None


class Tape:
    """Ordered record of executed operations.

    Use as a context manager; ops executed inside the block on tensors that
    require gradients are appended in execution order. :meth:`backward` walks
    the record in exact reverse order.
    """

    def __init__(self):
        self.records: list[tuple[tuple, tuple, Callable]] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        s = _stack()
        if s and s[-1] is self:
            s.pop()

    def __len__(self) -> int:
        return len(self.records)

    def record(self, outputs: tuple, inputs: tuple, backward: Callable) -> None:
        self.records.append((outputs, inputs, backward))

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise DomainError(f"backward needs a scalar loss, got shape {loss.shape}")
        for outputs, _, _ in self.records:
            for out in outputs:
                out.grad = None
        if loss.is_leaf:
            if loss.requires_grad:
                loss.grad += 1.0
                loss.populated = True
            return
        loss.grad = np.ones_like(loss.data)
        for outputs, inputs, fn in reversed(self.records):
            gouts = [o.grad for o in outputs]
            if all(g is None for g in gouts):
                continue
            if len(outputs) == 1:
                grads = fn(gouts[0])
            else:
                grads = fn(*[np.zeros_like(o.data) if g is None else g for o, g in zip(outputs, gouts)])
            for inp, g in zip(inputs, grads):
                if g is None or not inp.requires_grad:
                    continue
                if inp.is_leaf:
                    if isinstance(g, _RowGrad):
                        inp.grad[g.index] += g.values
                    else:
                        inp.grad += g
                    inp.populated = True
                else:
                    if isinstance(g, _RowGrad):
                        g = g.dense(inp.data.shape, inp.data.dtype)
                    inp.grad = g if inp.grad is None else inp.grad + g


def _result(data: np.ndarray, inputs: tuple, backward: Callable) -> Tensor:
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out = Tensor(data, requires_grad=True, _leaf=False)
        tape.record((out,), inputs, backward)
        return out
    return Tensor(data, _leaf=False)


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


# -- linear algebra ---------------------------------------------------------


def matvec(W: Tensor, x: Tensor) -> Tensor:
    """``W @ x`` for a matrix ``W`` [m x n] and vector ``x`` [n]."""
    if W.data.ndim != 2 or x.data.ndim != 1 or W.data.shape[1] != x.data.shape[0]:
        raise DimensionError(f"matvec: cannot multiply {W.data.shape} by {x.data.shape}")
    Wd, xd = W.data, x.data

    def backward(g):
        return np.outer(g, xd), Wd.T @ g

    return _result(Wd @ xd, (W, x), backward)


def matmul(A: Tensor, B: Tensor) -> Tensor:
    if A.data.ndim != 2 or B.data.ndim != 2 or A.data.shape[1] != B.data.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {A.data.shape} by {B.data.shape}")
    Ad, Bd = A.data, B.data

    def backward(g):
        return g @ Bd.T, Ad.T @ g

    return _result(Ad @ Bd, (A, B), backward)


def transpose(A: Tensor) -> Tensor:
    if A.data.ndim != 2:
        raise DimensionError(f"transpose: expected a matrix, got {A.data.shape}")
    return _result(A.data.T.copy(), (A,), lambda g: (g.T,))


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two vectors, as a scalar tensor."""
    if a.data.ndim != 1:
        raise DimensionError(f"dot: expected vectors, got {a.data.shape}")
    _check_same(a, b, "dot")
    ad, bd = a.data, b.data
    return _result(np.asarray(ad @ bd), (a, b), lambda g: (g * bd, g * ad))


# -- elementwise ------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "add")
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def add_n(terms: Sequence[Tensor]) -> Tensor:
    """Sum of equally shaped tensors."""
    if not terms:
        raise DomainError("add_n: no terms")
    for t in terms[1:]:
        _check_same(terms[0], t, "add_n")
    total = terms[0].data.copy()
    for t in terms[1:]:
        total = total + t.data
    n = len(terms)
    return _result(total, tuple(terms), lambda g: (g,) * n)


def add_row(M: Tensor, v: Tensor) -> Tensor:
    """Add vector ``v`` to every row of matrix ``M``."""
    if M.data.ndim != 2 or v.data.ndim != 1 or M.data.shape[1] != v.data.shape[0]:
        raise DimensionError(f"add_row: cannot add {v.data.shape} to rows of {M.data.shape}")
    return _result(M.data + v.data, (M, v), lambda g: (g, g.sum(axis=0)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "mul")
    ad, bd = a.data, b.data
    return _result(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, s: float) -> Tensor:
    return _result(a.data * s, (a,), lambda g: (g * s,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _result(y, (a,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid(a.data)
    return _result(y, (a,), lambda g: (g * y * (1.0 - y),))


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise DomainError("concat: no operands")
    datas = [p.data for p in parts]
    try:
        out = np.concatenate(datas, axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {[d.shape for d in datas]} along axis {axis}: {exc}") from None
    cuts = np.cumsum([d.shape[axis] for d in datas])[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _result(out, tuple(parts), backward)


def stack(rows: Sequence[Tensor]) -> Tensor:
    """Stack equally shaped vectors into the rows of a matrix."""
    if not rows:
        raise DomainError("stack: no rows")
    for r in rows[1:]:
        _check_same(rows[0], r, "stack")
    n = len(rows)
    return _result(np.stack([r.data for r in rows]), tuple(rows), lambda g: tuple(g[i] for i in range(n)))


def take_row(table: Tensor, index: int) -> Tensor:
    """Row ``index`` of ``table`` (embedding lookup)."""
    if table.data.ndim != 2:
        raise DimensionError(f"take_row: expected a matrix, got {table.data.shape}")
    if not 0 <= index < table.data.shape[0]:
        raise DomainError(f"take_row: index {index} outside [0, {table.data.shape[0]})")
    return _result(table.data[index].copy(), (table,), lambda g: (_RowGrad(index, g),))


# -- normalisation and losses -----------------------------------------------


def softmax_array(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max())
    return z / z.sum()


def softmax(x: Tensor) -> Tensor:
    if x.data.ndim != 1:
        raise DimensionError(f"softmax: expected a vector, got {x.data.shape}")
    if x.data.size == 0:
        raise DomainError("softmax of an empty vector")
    s = softmax_array(x.data)

    def backward(g):
        return (s * (g - g @ s),)

    return _result(s, (x,), backward)


def cross_entropy(probs: Tensor, target: int) -> Tensor:
    """Negative log probability of class ``target`` under a distribution."""
    n = probs.data.shape[0]
    if not 0 <= target < n:
        raise DomainError(f"cross_entropy: class {target} outside [0, {n})")
    p = probs.data[target]
    clamped = p < PROB_FLOOR
    value = -np.log(max(p, PROB_FLOOR))

    def backward(g):
        out = np.zeros_like(probs.data)
        if not clamped:
            out[target] = -g / p
        return (out,)

    return _result(np.asarray(value, dtype=probs.data.dtype), (probs,), backward)


def binary_cross_entropy(prob: Tensor, target: int) -> Tensor:
    """Negative log likelihood of a Bernoulli outcome ``target`` in {0, 1}."""
    if target not in (0, 1):
        raise DomainError(f"binary_cross_entropy: target must be 0 or 1, got {target}")
    p = float(prob.data.reshape(-1)[0]) if prob.data.size == 1 else None
    if p is None:
        raise DimensionError(f"binary_cross_entropy: expected a scalar, got {prob.data.shape}")
    q = p if target == 1 else 1.0 - p
    clamped = q < PROB_FLOOR
    value = -np.log(max(q, PROB_FLOOR))

    def backward(g):
        if clamped:
            return (np.zeros_like(prob.data),)
        d = -g / q if target == 1 else g / q
        return (np.full_like(prob.data, d),)

    return _result(np.asarray(value, dtype=prob.data.dtype), (prob,), backward)


# -- fused recurrent cell -----------------------------------------------------


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, W: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM step with gates stacked as (input, forget, candidate, output).

    ``W`` is [4H x (I + H)] acting on ``[x; h]``. Fused into a single tape
    record; the composite form built from primitive ops is used in the tests
    as an oracle.
    """
    H = h.data.shape[0]
    I = x.data.shape[0]
    if W.data.shape != (4 * H, I + H) or b.data.shape != (4 * H,) or c.data.shape != (H,):
        raise DimensionError(
            f"lstm_cell: W {W.data.shape}, b {b.data.shape} incompatible with input {I}, hidden {H}"
        )
    xh = np.concatenate([x.data, h.data])
    z = W.data @ xh + b.data
    i = _sigmoid(z[:H])
    f = _sigmoid(z[H : 2 * H])
    g = np.tanh(z[2 * H : 3 * H])
    o = _sigmoid(z[3 * H :])
    c_new = f * c.data + i * g
    tc = np.tanh(c_new)
    h_new = o * tc

    inputs = (x, h, c, W, b)
    tape = active_tape()
    if tape is None or not any(t.requires_grad for t in inputs):
        return Tensor(h_new, _leaf=False), Tensor(c_new, _leaf=False)

    h_out = Tensor(h_new, requires_grad=True, _leaf=False)
    c_out = Tensor(c_new, requires_grad=True, _leaf=False)
    c_prev, Wd = c.data, W.data

    def backward(gh, gc):
        do = gh * tc
        dc = gc + gh * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                do * o * (1.0 - o),
            ]
        )
        dxh = Wd.T @ dz
        return dxh[:I], dxh[I:], dc * f, np.outer(dz, xh), dz

    tape.record((h_out, c_out), inputs, backward)
    return h_out, c_out


# -- initialisation and optimisation -----------------------------------------


def glorot(rng: np.random.Generator, shape: tuple, dtype=np.float64) -> np.ndarray:
    if len(shape) == 1:
        fan_in, fan_out = shape[0], 1
    else:
        fan_out, fan_in = shape[0], shape[1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Adam:
    """Adam with bias correction; per-parameter step counters."""

    def __init__(self, params: Iterable[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.steps = [0] * len(self.params)

    def step(self) -> None:
        if not any(p.populated for p in self.params):
            raise OptimizerStateError("adam step requested but no gradients were populated")
        b1, b2 = self.beta1, self.beta2
        for k, p in enumerate(self.params):
            if not p.populated:
                continue
            self.steps[k] += 1
            t = self.steps[k]
            g = p.grad
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * (g * g)
            m_hat = self.m[k] / (1.0 - b1**t)
            v_hat = self.v[k] / (1.0 - b2**t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)
        self.zero_grad()

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


# -- gradient checking --------------------------------------------------------


def numerical_gradient(f: Callable[[], float], t: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f`` with respect to ``t.data``."""
    grad = np.zeros_like(t.data)
    flat = t.data.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        old = flat[k]
        flat[k] = old + h
        up = f()
        flat[k] = old - h
        down = f()
        flat[k] = old
        gflat[k] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative error; zero when both gradients vanish."""
    scale_ = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale_ < 1e-10:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale_)


def gradient_check(build_loss: Callable[[], Tensor], tensors: Sequence[Tensor],
                   h: float = 1e-5) -> dict[int, float]:
    """Relative error per tensor between backprop and finite differences.

    ``build_loss`` must rebuild the forward computation from scratch; it is
    called once under a tape and many times without one.
    """
    for t in tensors:
        t.zero_grad()
    with Tape() as tape:
        loss = build_loss()
    tape.backward(loss)
    analytic = [t.grad.copy() for t in tensors]
    errors = {}
    for k, t in enumerate(tensors):
        numeric = numerical_gradient(lambda: build_loss().item(), t, h)
        errors[k] = relative_error(analytic[k], numeric)
    for t in tensors:
        t.zero_grad()
    return errors
