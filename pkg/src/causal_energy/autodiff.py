"""Reverse-mode differentiation of scalar expressions on an explicit tape.

A :class:`Tape` is an append-only list of nodes, each storing the indices of its
parents and the local partial derivative with respect to each parent.  Because
nodes are only ever appended, parents always precede children and a single
reverse sweep accumulates exact adjoints.

The module-level functions (:func:`exp`, :func:`log`, ...) accept plain floats
as well as :class:`DiffScalar` values, so the same model code can be evaluated
numerically or recorded for differentiation.

Example:
    >>> tape = Tape()
    >>> x = tape.leaf(3.0)
    >>> y = x * x
    >>> tape.gradient(y)[0]
    6.0
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import DomainError, TapeMismatchError

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class Tape:
    __slots__ = ("values", "parents", "partials", "kinds", "leaves", "names")

    def __init__(self):
        self.values: list[float] = []
        self.parents: list[tuple[int, ...]] = []
        self.partials: list[tuple[float, ...]] = []
        self.kinds: list[str] = []
        self.leaves: list[int] = []
        self.names: list[str | None] = []

    def __len__(self) -> int:
        return len(self.values)

    def _push(self, kind: str, value: float, parents: tuple[int, ...], partials: tuple[float, ...]) -> "DiffScalar":
        idx = len(self.values)
        self.values.append(value)
        self.parents.append(parents)
        self.partials.append(partials)
        self.kinds.append(kind)
        return DiffScalar(value, self, idx)

    def leaf(self, value: float, name: str | None = None) -> "DiffScalar":
        node = self._push("leaf", float(value), (), ())
        self.leaves.append(node.idx)
        self.names.append(name)
        return node

    def constant(self, value: float) -> "DiffScalar":
        return self._push("const", float(value), (), ())

    def custom(self, value: float, inputs: Sequence["DiffScalar"], partials: Sequence[float], kind: str = "custom"):
        """Record a fused node whose local partials were computed elsewhere."""
        if len(inputs) != len(partials):
            raise ValueError("one partial per input required")
        for x in inputs:
            _check_same(self, x)
        return self._push(kind, float(value), tuple(x.idx for x in inputs), tuple(float(p) for p in partials))

    def adjoints(self, root: "DiffScalar") -> list[float]:
        _check_same(self, root)
        adj = [0.0] * (root.idx + 1)
        adj[root.idx] = 1.0
        parents, partials = self.parents, self.partials
        for i in range(root.idx, -1, -1):
            a = adj[i]
            if a == 0.0:
                continue
            for p, d in zip(parents[i], partials[i]):
                adj[p] += a * d
        return adj

    def gradient(self, root: "DiffScalar") -> np.ndarray:
        """d root / d leaf for every leaf, in creation order; unreachable leaves get 0."""
        adj = self.adjoints(root)
        n = len(adj)
        return np.array([adj[i] if i < n else 0.0 for i in self.leaves])


def backward(root: "DiffScalar") -> np.ndarray:
    return root.tape.gradient(root)


def _check_same(tape: Tape, x: "DiffScalar") -> None:
    if x.tape is not tape:
        raise TapeMismatchError("operands belong to different tapes")


class DiffScalar:
    __slots__ = ("value", "tape", "idx")

    def __init__(self, value: float, tape: Tape, idx: int):
        self.value = value
        self.tape = tape
        self.idx = idx

    def __repr__(self) -> str:
        return f"DiffScalar({self.value!r}, node={self.idx})"

    def __float__(self) -> float:
        return self.value

    def _unary(self, kind: str, value: float, partial: float) -> "DiffScalar":
        return self.tape._push(kind, value, (self.idx,), (partial,))

    def _binary(self, other, kind, value, d_self, d_other) -> "DiffScalar":
        if isinstance(other, DiffScalar):
            _check_same(self.tape, other)
            return self.tape._push(kind, value, (self.idx, other.idx), (d_self, d_other))
        return self.tape._push(kind, value, (self.idx,), (d_self,))

    def __add__(self, other):
        o = other.value if isinstance(other, DiffScalar) else float(other)
        return self._binary(other, "add", self.value + o, 1.0, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        o = other.value if isinstance(other, DiffScalar) else float(other)
        return self._binary(other, "sub", self.value - o, 1.0, -1.0)

    def __rsub__(self, other):
        return self._unary("rsub", float(other) - self.value, -1.0)

    def __mul__(self, other):
        if isinstance(other, DiffScalar):
            return self._binary(other, "mul", self.value * other.value, other.value, self.value)
        o = float(other)
        return self._unary("scale", self.value * o, o)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, DiffScalar):
            if other.value == 0.0:
                raise DomainError(f"division by zero at node {other.idx}")
            q = self.value / other.value
            return self._binary(other, "div", q, 1.0 / other.value, -q / other.value)
        o = float(other)
        if o == 0.0:
            raise DomainError(f"division of node {self.idx} by constant zero")
        return self._unary("scale", self.value / o, 1.0 / o)

    def __rtruediv__(self, other):
        if self.value == 0.0:
            raise DomainError(f"division by zero at node {self.idx}")
        q = float(other) / self.value
        return self._unary("rdiv", q, -q / self.value)

    def __neg__(self):
        return self._unary("neg", -self.value, -1.0)

    def __pos__(self):
        return self

    def __pow__(self, k):
        if isinstance(k, DiffScalar):
            return exp(k * log(self))
        k = float(k)
        if k == 2.0:
            return self._unary("square", self.value * self.value, 2.0 * self.value)
        if self.value <= 0.0 and not k.is_integer():
            raise DomainError(f"non-integer power of non-positive value at node {self.idx}")
        return self._unary("pow", self.value**k, k * self.value ** (k - 1.0))

    def __abs__(self):
        v = self.value
        # subgradient 0 at the kink
        return self._unary("abs", abs(v), 1.0 if v > 0 else (-1.0 if v < 0 else 0.0))

    def __lt__(self, other):
        return self.value < float(other)

    def __le__(self, other):
        return self.value <= float(other)

    def __gt__(self, other):
        return self.value > float(other)

    def __ge__(self, other):
        return self.value >= float(other)


# ---------------------------------------------------------------------------
# elementary functions


def exp(x):
    if isinstance(x, DiffScalar):
        v = math.exp(x.value)
        return x._unary("exp", v, v)
    return math.exp(x)


def log(x):
    if isinstance(x, DiffScalar):
        if not x.value > 0.0:
            raise DomainError(f"log of non-positive value {x.value} at node {x.idx}")
        return x._unary("log", math.log(x.value), 1.0 / x.value)
    if not x > 0.0:
        raise DomainError(f"log of non-positive value {x}")
    return math.log(x)


def sqrt(x):
    if isinstance(x, DiffScalar):
        if not x.value > 0.0:
            raise DomainError(f"sqrt of non-positive value {x.value} at node {x.idx}")
        v = math.sqrt(x.value)
        return x._unary("sqrt", v, 0.5 / v)
    if x < 0.0:
        raise DomainError(f"sqrt of negative value {x}")
    return math.sqrt(x)


def sin(x):
    if isinstance(x, DiffScalar):
        return x._unary("sin", math.sin(x.value), math.cos(x.value))
    return math.sin(x)


def cos(x):
    if isinstance(x, DiffScalar):
        return x._unary("cos", math.cos(x.value), -math.sin(x.value))
    return math.cos(x)


def _softplus(v: float) -> float:
    return max(v, 0.0) + math.log1p(math.exp(-abs(v)))


def _sigmoid(v: float) -> float:
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


def softplus(x):
    if isinstance(x, DiffScalar):
        return x._unary("softplus", _softplus(x.value), _sigmoid(x.value))
    return _softplus(x)


def lgamma(x):
    if isinstance(x, DiffScalar):
        if not x.value > 0.0:
            raise DomainError(f"lgamma of non-positive value {x.value} at node {x.idx}")
        return x._unary("lgamma", math.lgamma(x.value), float(special.digamma(x.value)))
    return math.lgamma(x)


def log_ndtr(x):
    """log of the standard normal CDF."""
    if isinstance(x, DiffScalar):
        v = float(special.log_ndtr(x.value))
        mills = math.exp(-0.5 * x.value * x.value - _LOG_SQRT_2PI - v)
        return x._unary("log_ndtr", v, mills)
    return float(special.log_ndtr(x))


def fsum(items: Sequence) -> "DiffScalar | float":
    """Sum with a correctly rounded value (``math.fsum``) recorded as one node.

    Long chains of ``+`` round at every step; this keeps the value within half
    an ulp, which matters when the result is finite-differenced.
    """
    items = list(items)
    tracked = [x for x in items if isinstance(x, DiffScalar)]
    total = math.fsum(value(x) for x in items)
    if not tracked:
        return total
    tape = tracked[0].tape
    return tape.custom(total, tracked, [1.0] * len(tracked), kind="sum")


def indicator(condition: bool, operand=None):
    """1.0 if ``condition`` else 0.0, with zero gradient to ``operand``.

    Passing the operand the condition was computed from records the
    dependency explicitly so the zero partial is visible on the tape.
    """
    v = 1.0 if condition else 0.0
    if isinstance(operand, DiffScalar):
        return operand._unary("indicator", v, 0.0)
    return v


def value(x) -> float:
    return x.value if isinstance(x, DiffScalar) else float(x)


# ---------------------------------------------------------------------------
# verification


def check_gradients(
    f: Callable[[Sequence], object], point: Sequence[float], h: float = 1e-5
) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``f`` receives a list of inputs (DiffScalars or floats) and returns a scalar.
    """
    point = [float(p) for p in point]
    tape = Tape()
    leaves = [tape.leaf(p) for p in point]
    out = f(leaves)
    analytic = tape.gradient(out) if isinstance(out, DiffScalar) else np.zeros(len(point))
    worst = 0.0
    for i in range(len(point)):
        up = list(point)
        dn = list(point)
        up[i] += h
        dn[i] -= h
        fd = (value(f(up)) - value(f(dn))) / (2.0 * h)
        worst = max(worst, abs(analytic[i] - fd) / (abs(fd) + 1e-12))
    return worst
