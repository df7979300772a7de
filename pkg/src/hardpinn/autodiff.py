"""Mixed-mode differentiation over numpy arrays.

Values are recorded on a reverse-mode :class:`Tape`. Input derivatives travel
as :class:`DualScalar` tangents whose arithmetic is itself recorded on the
tape, so one reverse sweep yields parameter gradients of quantities built from
both values and input derivatives (forward-over-reverse).

Every node holds a whole numpy array, so a batch of collocation points costs
one node per operation instead of one per point. A ``DualScalar`` stores its
tangents along a leading axis: ``tangent[i]`` is the derivative of ``value``
along input direction ``i``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "DomainError",
    "TapeError",
    "Tape",
    "Var",
    "DualScalar",
    "Jet2",
    "lift_input",
    "lift_inputs",
    "input_gradient",
    "parameter_gradient",
    "value_of",
    "tanh",
    "exp",
    "log",
    "sin",
    "cos",
    "cosh",
    "sqrt",
    "power",
    "minimum",
    "reshape",
    "transpose",
    "concatenate",
    "broadcast_to",
    "sum_",
]


class DomainError(ArithmeticError):
    """Raised when an operation leaves its mathematical domain (x/0, log(x<=0))."""


class TapeError(RuntimeError):
    pass


def _unbroadcast(g, shape):
    shape = tuple(shape)
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead > 0:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _is_basic_index(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(
        isinstance(i, (slice, int, np.integer)) or i is Ellipsis or i is None
        for i in items
    )


class Tape:
    """Append-only record of array operations.

    Node ``i`` stores its operation kind, the indices of its operands (always
    smaller than ``i``) and a closure mapping the output cotangent to operand
    cotangents. Leaves created with :meth:`param` are the trainable slots.
    """

    def __init__(self):
        self.kinds: list[str] = []
        self.links: list[tuple] = []
        self.vjps: list = []
        self.param_slots: list[int] = []
        self.leaf_values: dict[int, np.ndarray] = {}
        self.finalized = False

    def __len__(self):
        return len(self.kinds)

    def _push(self, kind, value, links, vjp):
        if self.finalized:
            raise TapeError("cannot record on a finalized tape")
        self.kinds.append(kind)
        self.links.append(tuple(links))
        self.vjps.append(vjp)
        return Var(self, len(self.kinds) - 1, value)

    def param(self, value) -> "Var":
        v = self._push("param", np.array(value, dtype=np.float64), (), None)
        self.param_slots.append(v.index)
        self.leaf_values[v.index] = v.value
        return v

    def finalize(self):
        self.finalized = True
        return self

    def gradient(self, root: "Var") -> list[np.ndarray]:
        """One reverse sweep from ``root``; returns a cotangent per parameter slot."""
        if not self.finalized:
            raise TapeError("reverse sweep requested on an unfinalized tape")
        if root.tape is not self:
            raise TapeError("root belongs to a different tape")
        grads: list = [None] * (root.index + 1)
        grads[root.index] = np.ones_like(root.value)
        for i in range(root.index, -1, -1):
            g = grads[i]
            links = self.links[i]
            if g is None or not links:
                continue
            pg = self.vjps[i](g)
            for parent, pos in links:
                gp = pg[pos]
                if gp is None:
                    continue
                grads[parent] = gp if grads[parent] is None else grads[parent] + gp
            grads[i] = None
        out = []
        for slot in self.param_slots:
            g = grads[slot] if slot <= root.index else None
            out.append(np.zeros_like(self.leaf_values[slot]) if g is None else np.asarray(g))
        return out


def _record(kind, value, operands, vjp):
    tape = None
    links = []
    for pos, op in enumerate(operands):
        if isinstance(op, Var):
            if tape is None:
                tape = op.tape
            elif op.tape is not tape:
                raise TapeError("operands recorded on different tapes")
            links.append((op.index, pos))
    if tape is None:
        return value
    return tape._push(kind, value, links, vjp)


def value_of(x):
    """Strip tape/dual wrappers down to the plain numpy value."""
    if isinstance(x, Var):
        return x.value
    if isinstance(x, (DualScalar, Jet2)):
        return value_of(x.value)
    return x


def _v(x):
    return x.value if isinstance(x, Var) else x


class Var:
    """A tape-recorded array value."""

    __array_ufunc__ = None
    __slots__ = ("tape", "index", "value")

    def __init__(self, tape, index, value):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self):
        return np.shape(self.value)

    @property
    def ndim(self):
        return np.ndim(self.value)

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        return f"Var(#{self.index}, shape={self.shape})"

    def __float__(self):
        return float(self.value)

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
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        n = self.value.size if axis is None else self.value.shape[axis]
        return sum_(self, axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)


# ---------------------------------------------------------------------------
# primitive array operations (work on Var or plain ndarray operands)


def add(a, b):
    av, bv = _v(a), _v(b)
    out = av + bv
    if not (isinstance(a, Var) or isinstance(b, Var)):
        return out
    sa, sb = np.shape(av), np.shape(bv)

    def vjp(g):
        return (
            _unbroadcast(g, sa) if isinstance(a, Var) else None,
            _unbroadcast(g, sb) if isinstance(b, Var) else None,
        )

    return _record("add", out, (a, b), vjp)


def sub(a, b):
    av, bv = _v(a), _v(b)
    out = av - bv
    if not (isinstance(a, Var) or isinstance(b, Var)):
        return out
    sa, sb = np.shape(av), np.shape(bv)

    def vjp(g):
        return (
            _unbroadcast(g, sa) if isinstance(a, Var) else None,
            _unbroadcast(-g, sb) if isinstance(b, Var) else None,
        )

    return _record("sub", out, (a, b), vjp)


def neg(a):
    if not isinstance(a, Var):
        return -a
    return _record("neg", -a.value, (a,), lambda g: (-g,))


def mul(a, b):
    av, bv = _v(a), _v(b)
    out = av * bv
    if not (isinstance(a, Var) or isinstance(b, Var)):
        return out
    sa, sb = np.shape(av), np.shape(bv)

    def vjp(g):
        return (
            _unbroadcast(g * bv, sa) if isinstance(a, Var) else None,
            _unbroadcast(g * av, sb) if isinstance(b, Var) else None,
        )

    return _record("mul", out, (a, b), vjp)


def div(a, b):
    av, bv = _v(a), _v(b)
    if np.any(np.asarray(bv) == 0):
        raise DomainError("division by zero")
    out = av / bv
    if not (isinstance(a, Var) or isinstance(b, Var)):
        return out
    sa, sb = np.shape(av), np.shape(bv)

    def vjp(g):
        ga = g / bv
        return (
            _unbroadcast(ga, sa) if isinstance(a, Var) else None,
            _unbroadcast(-ga * out, sb) if isinstance(b, Var) else None,
        )

    return _record("div", out, (a, b), vjp)


def power(a, p):
    """``a ** p`` for a constant real exponent ``p``."""
    av = _v(a)
    if p != int(p) and np.any(np.asarray(av) < 0):
        raise DomainError("fractional power of a negative number")
    out = np.power(av, p)
    if not isinstance(a, Var):
        return out
    if p == 2:
        return _record("pow", out, (a,), lambda g: (g * (2.0 * av),))
    return _record("pow", out, (a,), lambda g: (g * (p * np.power(av, p - 1)),))


def matmul(a, b):
    av, bv = _v(a), _v(b)
    out = av @ bv
    if not (isinstance(a, Var) or isinstance(b, Var)):
        return out
    sa, sb = np.shape(av), np.shape(bv)

    def vjp(g):
        ga = gb = None
        if isinstance(a, Var):
            ga = _unbroadcast(g @ np.swapaxes(bv, -1, -2), sa)
        if isinstance(b, Var):
            if len(sb) == 2:
                gb = av.reshape(-1, sa[-1]).T @ g.reshape(-1, sb[-1])
            else:
                gb = _unbroadcast(np.swapaxes(av, -1, -2) @ g, sb)
        return ga, gb

    return _record("matmul", out, (a, b), vjp)


def getitem(a, idx):
    av = _v(a)
    out = av[idx]
    if not isinstance(a, Var):
        return out
    shape = av.shape
    basic = _is_basic_index(idx)

    def vjp(g):
        z = np.zeros(shape)
        if basic:
            z[idx] += g
        else:
            np.add.at(z, idx, g)
        return (z,)

    return _record("getitem", out, (a,), vjp)


def sum_(a, axis=None, keepdims=False):
    av = _v(a)
    out = np.sum(av, axis=axis, keepdims=keepdims)
    if not isinstance(a, Var):
        return out
    shape = av.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _record("sum", out, (a,), vjp)


def reshape(a, shape):
    av = _v(a)
    out = np.reshape(av, shape)
    if not isinstance(a, Var):
        return out
    orig = av.shape
    return _record("reshape", out, (a,), lambda g: (np.reshape(g, orig),))


def transpose(a, axes=None):
    av = _v(a)
    out = np.transpose(av, axes)
    if not isinstance(a, Var):
        return out
    inv = None if axes is None else np.argsort(axes)
    return _record("transpose", out, (a,), lambda g: (np.transpose(g, inv),))


def broadcast_to(a, shape):
    av = _v(a)
    out = np.broadcast_to(av, shape)
    if not isinstance(a, Var):
        return out
    orig = np.shape(av)
    return _record("broadcast", out, (a,), lambda g: (_unbroadcast(g, orig),))


def concatenate(items, axis=-1):
    vals = [_v(x) for x in items]
    out = np.concatenate(vals, axis=axis)
    if not any(isinstance(x, Var) for x in items):
        return out
    sizes = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def vjp(g):
        parts = np.split(g, sizes, axis=axis)
        return tuple(p if isinstance(x, Var) else None for p, x in zip(parts, items))

    return _record("concat", out, tuple(items), vjp)


def minimum(a, b):
    av, bv = _v(a), _v(b)
    out = np.minimum(av, bv)
    if not (isinstance(a, Var) or isinstance(b, Var)):
        return out
    pick_a = av <= bv
    sa, sb = np.shape(av), np.shape(bv)

    def vjp(g):
        return (
            _unbroadcast(np.where(pick_a, g, 0.0), sa) if isinstance(a, Var) else None,
            _unbroadcast(np.where(pick_a, 0.0, g), sb) if isinstance(b, Var) else None,
        )

    return _record("minimum", out, (a, b), vjp)


def _unary(kind, fwd, dfdx):
    """Build an elementwise primitive; ``dfdx(x, y)`` gives the local slope."""

    def op(a):
        if isinstance(a, (DualScalar, Jet2)):
            return getattr(a, kind)()
        av = _v(a)
        out = fwd(av)
        if not isinstance(a, Var):
            return out
        return _record(kind, out, (a,), lambda g: (g * dfdx(av, out),))

    op.__name__ = kind
    return op


def _checked_log(x):
    if np.any(np.asarray(x) <= 0):
        raise DomainError("log of a non-positive number")
    return np.log(x)


def _checked_sqrt(x):
    if np.any(np.asarray(x) < 0):
        raise DomainError("sqrt of a negative number")
    return np.sqrt(x)


tanh = _unary("tanh", np.tanh, lambda x, y: 1.0 - y * y)
exp = _unary("exp", np.exp, lambda x, y: y)
log = _unary("log", _checked_log, lambda x, y: 1.0 / x)
sin = _unary("sin", np.sin, lambda x, y: np.cos(x))
cos = _unary("cos", np.cos, lambda x, y: -np.sin(x))
cosh = _unary("cosh", np.cosh, lambda x, y: np.sinh(x))
sinh = _unary("sinh", np.sinh, lambda x, y: np.cosh(x))
sqrt = _unary("sqrt", _checked_sqrt, lambda x, y: 0.5 / y)


# ---------------------------------------------------------------------------
# forward-mode layer


def _ndim(x):
    return np.ndim(_v(x))


def _align(t, ndim):
    """Insert singleton axes so a tangent ``(k,)+S`` lines up with rank-``ndim`` values."""
    extra = ndim - (_ndim(t) - 1)
    if extra <= 0:
        return t
    shape = np.shape(_v(t))
    return reshape(t, (shape[0],) + (1,) * extra + shape[1:])


def _fit(t, k, shape):
    t = _align(t, len(shape))
    full = (k,) + tuple(shape)
    if np.shape(_v(t)) != full:
        t = broadcast_to(t, full)
    return t


def _tangent_index(idx):
    if not isinstance(idx, tuple):
        idx = (idx,)
    if Ellipsis in idx:
        return (slice(None),) + idx
    return (slice(None),) + idx


class DualScalar:
    """Value plus first derivatives along ``k`` input directions.

    ``value`` has any shape ``S`` (a single point or a batch); ``tangent`` has
    shape ``(k,) + S``. Either part may be a plain array or a tape ``Var``.
    """

    __array_ufunc__ = None
    __slots__ = ("value", "tangent")

    def __init__(self, value, tangent):
        self.value = value
        self.tangent = tangent

    def __repr__(self):
        return f"DualScalar(value={value_of(self.value)!r}, tangent={value_of(self.tangent)!r})"

    @property
    def n_directions(self):
        return np.shape(_v(self.tangent))[0]

    @property
    def shape(self):
        return np.shape(_v(self.value))

    @property
    def ndim(self):
        return len(self.shape)

    def _k_shape(self, value):
        return self.n_directions, np.shape(_v(value))

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, DualScalar):
            v = add(self.value, other.value)
            k, s = self._k_shape(v)
            return DualScalar(v, add(_fit(self.tangent, k, s), _fit(other.tangent, k, s)))
        v = add(self.value, other)
        k, s = self._k_shape(v)
        return DualScalar(v, _fit(self.tangent, k, s))

    __radd__ = __add__

    def __neg__(self):
        return DualScalar(neg(self.value), neg(self.tangent))

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, DualScalar):
            v = mul(self.value, other.value)
            r = _ndim(v)
            t = add(
                mul(_align(self.tangent, r), other.value),
                mul(self.value, _align(other.tangent, r)),
            )
            return DualScalar(v, t)
        v = mul(self.value, other)
        k, s = self._k_shape(v)
        return DualScalar(v, _fit(mul(_align(self.tangent, len(s)), other), k, s))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, DualScalar):
            v = div(self.value, other.value)
            r = _ndim(v)
            num = sub(_align(self.tangent, r), mul(v, _align(other.tangent, r)))
            return DualScalar(v, div(num, other.value))
        v = div(self.value, other)
        k, s = self._k_shape(v)
        return DualScalar(v, _fit(div(_align(self.tangent, len(s)), other), k, s))

    def __rtruediv__(self, other):
        v = div(other, self.value)
        r = _ndim(v)
        return DualScalar(v, neg(div(mul(_align(self.tangent, r), v), self.value)))

    def __pow__(self, p):
        v = power(self.value, p)
        return DualScalar(v, mul(self.tangent, mul(p, power(self.value, p - 1))))

    def __matmul__(self, w):
        return DualScalar(matmul(self.value, w), matmul(self.tangent, w))

    def __getitem__(self, idx):
        return DualScalar(getitem(self.value, idx), getitem(self.tangent, _tangent_index(idx)))

    def sum(self, axis=-1, keepdims=False):
        taxis = axis if axis < 0 else axis + 1
        return DualScalar(
            sum_(self.value, axis=axis, keepdims=keepdims),
            sum_(self.tangent, axis=taxis, keepdims=keepdims),
        )

    # elementwise functions ------------------------------------------------
    def tanh(self):
        y = tanh(self.value)
        return DualScalar(y, mul(self.tangent, sub(1.0, mul(y, y))))

    def exp(self):
        y = exp(self.value)
        return DualScalar(y, mul(self.tangent, y))

    def log(self):
        return DualScalar(log(self.value), div(self.tangent, self.value))

    def sin(self):
        return DualScalar(sin(self.value), mul(self.tangent, cos(self.value)))

    def cos(self):
        return DualScalar(cos(self.value), neg(mul(self.tangent, sin(self.value))))

    def cosh(self):
        return DualScalar(cosh(self.value), mul(self.tangent, sinh(self.value)))

    def sinh(self):
        return DualScalar(sinh(self.value), mul(self.tangent, cosh(self.value)))

    def sqrt(self):
        y = sqrt(self.value)
        return DualScalar(y, mul(self.tangent, div(0.5, y)))

    @classmethod
    def constant(cls, value, k):
        value = np.asarray(value, dtype=np.float64)
        return cls(value, np.zeros((k,) + value.shape))

    @classmethod
    def concat(cls, items, axis=-1):
        """Concatenate duals (and plain arrays, treated as constants) along ``axis``."""
        k = next(x.n_directions for x in items if isinstance(x, DualScalar))
        duals = [x if isinstance(x, DualScalar) else cls.constant(x, k) for x in items]
        taxis = axis if axis < 0 else axis + 1
        return cls(
            concatenate([d.value for d in duals], axis=axis),
            concatenate([d.tangent for d in duals], axis=taxis),
        )


class Jet2:
    """Second-order jet: value, first derivatives along ``k`` directions, and
    the second derivative along one chosen direction.

    Only the operations needed to push inputs through a tanh MLP are provided;
    it exists for the no-extra-fields arm of the stability ablation.
    """

    __array_ufunc__ = None
    __slots__ = ("value", "tangent", "curv", "axis")

    def __init__(self, value, tangent, curv, axis=0):
        self.value = value
        self.tangent = tangent
        self.curv = curv
        self.axis = axis

    def __matmul__(self, w):
        return Jet2(matmul(self.value, w), matmul(self.tangent, w), matmul(self.curv, w), self.axis)

    def __add__(self, other):
        if isinstance(other, Jet2):
            return Jet2(
                add(self.value, other.value),
                add(self.tangent, other.tangent),
                add(self.curv, other.curv),
                self.axis,
            )
        return Jet2(add(self.value, other), self.tangent, self.curv, self.axis)

    __radd__ = __add__

    def __getitem__(self, idx):
        return Jet2(
            getitem(self.value, idx),
            getitem(self.tangent, _tangent_index(idx)),
            getitem(self.curv, idx),
            self.axis,
        )

    def tanh(self):
        y = tanh(self.value)
        s = sub(1.0, mul(y, y))
        ta = getitem(self.tangent, self.axis)
        curv = add(mul(self.curv, s), mul(mul(ta, ta), mul(-2.0, mul(y, s))))
        return Jet2(y, mul(self.tangent, s), curv, self.axis)

    @classmethod
    def lift(cls, x, axis=0, offset=0, n_directions=None):
        """Seed a batch of points ``x`` (N, d) with unit tangents and zero curvature."""
        x = np.asarray(x, dtype=np.float64)
        d = lift_inputs(x, offset=offset, n_directions=n_directions)
        return cls(d.value, d.tangent, np.zeros_like(x), axis + offset)


# ---------------------------------------------------------------------------
# public entry points


def lift_input(value, direction_index, n_directions):
    """Seed a scalar input with the unit tangent ``e_direction_index``."""
    if not 0 <= direction_index < n_directions:
        raise IndexError(
            f"direction_index {direction_index} out of range for {n_directions} directions"
        )
    t = np.zeros(n_directions)
    t[direction_index] = 1.0
    return DualScalar(np.float64(value), t)


def lift_inputs(x, offset=0, n_directions=None):
    """Seed a batch of points ``x`` of shape (N, d): column ``i`` gets direction ``offset + i``."""
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    k = d + offset if n_directions is None else n_directions
    if offset + d > k:
        raise IndexError("not enough directions for the lifted columns")
    t = np.zeros((k, n, d))
    for i in range(d):
        t[offset + i, :, i] = 1.0
    return DualScalar(x, t)


def input_gradient(f, x):
    """Exact forward-mode gradient of scalar ``f(x_1, ..., x_d)`` at the point ``x``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    d = x.size
    y = f(*[lift_input(x[i], i, d) for i in range(d)])
    if not isinstance(y, DualScalar):
        return np.zeros(d)
    return np.asarray(value_of(y.tangent), dtype=np.float64).reshape(d)


def parameter_gradient(loss: Var) -> np.ndarray:
    """Gradient of a scalar tape root with respect to every parameter slot, flattened."""
    if not isinstance(loss, Var):
        raise TapeError("loss does not depend on any parameter")
    if np.ndim(loss.value) != 0:
        raise TapeError("loss must be a scalar")
    grads = loss.tape.gradient(loss)
    if not grads:
        return np.zeros(0)
    return np.concatenate([g.ravel() for g in grads])
