"""Truncated Taylor jets and closed-form smooth functions.

A :class:`Jet` stores the Taylor coefficients of a function of one or two
variables, truncated at a fixed total degree, at a whole batch of points at
once.  Arithmetic on jets is exact up to rounding, so derivatives of order
four (needed by the Gamma-2 operator) are obtained without finite
differences.

:class:`SmoothFunction` is a small expression tree over constants,
coordinates, ``+ - * /``, constant powers, ``exp``, ``log``, ``sqrt``,
``cos`` and ``sin``.  It evaluates to plain arrays or to jets, can be
differentiated symbolically, and round-trips through a Python-syntax string.
"""

from __future__ import annotations

import ast
import math
from functools import lru_cache

import numpy as np

from .errors import ArgumentError, DomainError

__all__ = [
    "Jet",
    "SmoothFunction",
    "coordinate",
    "constant",
    "parse_expression",
    "exp",
    "log",
    "sqrt",
    "cos",
    "sin",
    "X",
    "Y",
]


# ---------------------------------------------------------------------------
# multi-index bookkeeping


@lru_cache(maxsize=None)
def _basis(dim, order):
    out = []
    for deg in range(order + 1):
        if dim == 1:
            out.append((deg,))
        else:
            for i in range(deg, -1, -1):
                out.append((i, deg - i))
    return tuple(out)


@lru_cache(maxsize=None)
def _index(dim, order):
    return {a: k for k, a in enumerate(_basis(dim, order))}


@lru_cache(maxsize=None)
def _mul_tables(dim, order):
    basis = _basis(dim, order)
    index = _index(dim, order)
    ia, ib, ic = [], [], []
    for i, a in enumerate(basis):
        for j, b in enumerate(basis):
            c = tuple(p + q for p, q in zip(a, b))
            if sum(c) <= order:
                ia.append(i)
                ib.append(j)
                ic.append(index[c])
    scatter = np.zeros((len(basis), len(ia)))
    scatter[ic, np.arange(len(ia))] = 1.0
    return np.array(ia), np.array(ib), scatter


@lru_cache(maxsize=None)
def _diff_table(dim, order, axis):
    """Source positions and factors for d/dx_axis of an order-`order` jet."""
    src_index = _index(dim, order)
    pos, fac = [], []
    for a in _basis(dim, order - 1):
        up = list(a)
        up[axis] += 1
        pos.append(src_index[tuple(up)])
        fac.append(up[axis])
    return np.array(pos), np.array(fac, dtype=float)


def _multi_factorial(alpha):
    return math.prod(math.factorial(k) for k in alpha)


# ---------------------------------------------------------------------------
# jets


class Jet:
    """Taylor coefficients ``coef[k]`` of a function at a batch of points.

    ``coef`` has shape ``(ncoef, *batch)``; coefficient ``k`` belongs to the
    multi-index ``_basis(dim, order)[k]``.  The partial derivative of
    multi-index ``alpha`` equals ``alpha! * coef[alpha]``.
    """

    __slots__ = ("coef", "dim", "order")
    __array_priority__ = 1000

    def __init__(self, coef, dim, order):
        self.coef = coef
        self.dim = dim
        self.order = order

    # construction -----------------------------------------------------

    @classmethod
    def constant(cls, value, dim, order, batch_shape=()):
        value = np.broadcast_to(np.asarray(value, dtype=float), batch_shape)
        coef = np.zeros((len(_basis(dim, order)),) + tuple(batch_shape))
        coef[0] = value
        return cls(coef, dim, order)

    @classmethod
    def variable(cls, values, axis, dim, order):
        values = np.asarray(values, dtype=float)
        coef = np.zeros((len(_basis(dim, order)),) + values.shape)
        coef[0] = values
        if order >= 1:
            e = [0] * dim
            e[axis] = 1
            coef[_index(dim, order)[tuple(e)]] = 1.0
        return cls(coef, dim, order)

    @property
    def batch_shape(self):
        return self.coef.shape[1:]

    # derivative access -------------------------------------------------

    @property
    def value(self):
        return self.coef[0]

    def derivative(self, alpha):
        alpha = tuple(alpha)
        if sum(alpha) > self.order:
            raise ArgumentError(f"derivative {alpha} exceeds jet order {self.order}")
        return _multi_factorial(alpha) * self.coef[_index(self.dim, self.order)[alpha]]

    def tensor(self, k):
        """k-th derivative: scalar array in 1D, symmetric (2,)*k tensor in 2D."""
        if k > self.order:
            raise ArgumentError(f"derivative order {k} exceeds jet order {self.order}")
        if self.dim == 1:
            return math.factorial(k) * self.coef[k]
        out = np.empty((2,) * k + self.batch_shape)
        for idx in np.ndindex(*((2,) * k)):
            alpha = (idx.count(0), idx.count(1))
            out[idx] = self.derivative(alpha)
        return out

    @property
    def d1(self):
        return self.tensor(1)

    @property
    def d2(self):
        return self.tensor(2)

    @property
    def d3(self):
        return self.tensor(3)

    @property
    def d4(self):
        return self.tensor(4)

    def gradient(self):
        """Gradient with a leading axis of length ``dim`` (also in 1D)."""
        if self.dim == 1:
            return self.tensor(1)[None]
        return self.tensor(1)

    def hessian(self):
        if self.dim == 1:
            return self.tensor(2)[None, None]
        return self.tensor(2)

    # structure ----------------------------------------------------------

    def truncate(self, order):
        if order >= self.order:
            return self
        n = len(_basis(self.dim, order))
        return Jet(self.coef[:n], self.dim, order)

    def diff(self, axis):
        """Exact partial derivative; the result has order one less."""
        if self.order == 0:
            raise ArgumentError("cannot differentiate an order-0 jet")
        pos, fac = _diff_table(self.dim, self.order, axis)
        fac = fac.reshape((-1,) + (1,) * len(self.batch_shape))
        return Jet(self.coef[pos] * fac, self.dim, self.order - 1)

    def compose(self, derivs):
        """``g(self)`` for a univariate ``g`` given ``derivs[k] = g^(k)(value)``."""
        if len(derivs) < self.order + 1:
            raise ArgumentError("not enough derivatives for composition")
        h = Jet(self.coef.copy(), self.dim, self.order)
        h.coef[0] = 0.0
        out = Jet.constant(derivs[0], self.dim, self.order, self.batch_shape)
        power = None
        for k in range(1, self.order + 1):
            power = h if power is None else power * h
            out = out + power * (np.asarray(derivs[k]) / math.factorial(k))
        return out

    # arithmetic ---------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.dim != self.dim:
                raise ArgumentError("jets of different dimensions")
            return other
        return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            coef = self.coef.copy()
            coef[0] = coef[0] + other
            return Jet(coef, self.dim, self.order)
        order = min(self.order, o.order)
        a, b = self.truncate(order), o.truncate(order)
        return Jet(a.coef + b.coef, self.dim, order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coef, self.dim, self.order)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        if o is None:
            return Jet(self.coef * np.asarray(other, dtype=float), self.dim, self.order)
        order = min(self.order, o.order)
        a, b = self.truncate(order), o.truncate(order)
        ia, ib, scatter = _mul_tables(self.dim, order)
        prod = a.coef[ia] * b.coef[ib]
        shape = prod.shape
        coef = (scatter @ prod.reshape(shape[0], -1)).reshape((scatter.shape[0],) + shape[1:])
        return Jet(coef, self.dim, order)

    __rmul__ = __mul__

    def reciprocal(self):
        return self.power(-1.0)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, c):
        return self.power(c)

    # elementary functions ----------------------------------------------

    def power(self, c):
        a = self.value
        c = float(c)
        integral = c == round(c)
        if not integral and np.any(a <= 0):
            raise DomainError("non-integer power of a non-positive value")
        if integral and c < 0 and np.any(a == 0):
            raise DomainError("negative power of zero")
        derivs = []
        fall = 1.0
        for k in range(self.order + 1):
            if k > 0:
                fall *= c - (k - 1)
            if fall == 0.0:
                derivs.append(np.zeros_like(a))
            else:
                with np.errstate(divide="ignore", invalid="ignore"):
                    derivs.append(fall * np.power(a, c - k))
        return self.compose(derivs)

    def exp(self):
        e = np.exp(self.value)
        return self.compose([e] * (self.order + 1))

    def log(self):
        a = self.value
        if np.any(a <= 0):
            raise DomainError("log of a non-positive value")
        derivs = [np.log(a)]
        for k in range(1, self.order + 1):
            derivs.append((-1) ** (k - 1) * math.factorial(k - 1) / a**k)
        return self.compose(derivs)

    def sqrt(self):
        return self.power(0.5)

    def cos(self):
        c, s = np.cos(self.value), np.sin(self.value)
        cycle = [c, -s, -c, s]
        return self.compose([cycle[k % 4] for k in range(self.order + 1)])

    def sin(self):
        c, s = np.cos(self.value), np.sin(self.value)
        cycle = [s, c, -s, -c]
        return self.compose([cycle[k % 4] for k in range(self.order + 1)])

    def __repr__(self):
        return f"Jet(dim={self.dim}, order={self.order}, batch={self.batch_shape})"


def coordinate_jets(points, dim, order):
    """Coordinate jets for points of shape ``batch`` (1D) or ``batch+(2,)`` (2D)."""
    pts = np.asarray(points, dtype=float)
    if dim == 1:
        return [Jet.variable(pts, 0, 1, order)]
    if pts.shape[-1] != dim:
        raise ArgumentError(f"points must have a trailing axis of length {dim}")
    return [Jet.variable(pts[..., i], i, dim, order) for i in range(dim)]


def split_points(points, dim):
    pts = np.asarray(points, dtype=float)
    if dim == 1:
        return [pts], pts.shape
    if pts.shape[-1] != dim:
        raise ArgumentError(f"points must have a trailing axis of length {dim}")
    return [pts[..., i] for i in range(dim)], pts.shape[:-1]


# ---------------------------------------------------------------------------
# expression trees

_UNARY = ("exp", "log", "sqrt", "cos", "sin")


class SmoothFunction:
    """Immutable expression tree; see the module docstring for the grammar."""

    __slots__ = ("op", "args", "param")

    def __init__(self, op, args=(), param=None):
        self.op = op
        self.args = tuple(args)
        self.param = param

    # construction helpers ------------------------------------------------

    @staticmethod
    def wrap(value):
        if isinstance(value, SmoothFunction):
            return value
        if isinstance(value, (int, float, np.floating, np.integer)):
            return SmoothFunction("const", param=float(value))
        raise TypeError(f"cannot build a SmoothFunction from {type(value).__name__}")

    @property
    def dim(self):
        """Smallest dimension the expression can be evaluated in."""
        if self.op == "coord":
            return self.param + 1
        return max([1] + [a.dim for a in self.args])

    def is_const(self, value=None):
        if self.op != "const":
            return False
        return value is None or self.param == value

    # operators -------------------------------------------------------------

    def __add__(self, other):
        other = SmoothFunction.wrap(other)
        if self.is_const() and other.is_const():
            return constant(self.param + other.param)
        if other.is_const(0.0):
            return self
        if self.is_const(0.0):
            return other
        return SmoothFunction("add", (self, other))

    def __radd__(self, other):
        return SmoothFunction.wrap(other) + self

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-SmoothFunction.wrap(other))

    def __rsub__(self, other):
        return SmoothFunction.wrap(other) + (-self)

    def __mul__(self, other):
        other = SmoothFunction.wrap(other)
        if self.is_const() and other.is_const():
            return constant(self.param * other.param)
        if self.is_const(0.0) or other.is_const(0.0):
            return constant(0.0)
        if other.is_const(1.0):
            return self
        if self.is_const(1.0):
            return other
        return SmoothFunction("mul", (self, other))

    def __rmul__(self, other):
        return SmoothFunction.wrap(other) * self

    def __truediv__(self, other):
        other = SmoothFunction.wrap(other)
        if other.is_const():
            if other.param == 0.0:
                raise ZeroDivisionError("division by the constant 0")
            return self * (1.0 / other.param)
        return self * other ** -1.0

    def __rtruediv__(self, other):
        return SmoothFunction.wrap(other) / self

    def __pow__(self, c):
        if isinstance(c, SmoothFunction):
            if c.is_const():
                c = c.param
            else:
                return exp(c * log(self))
        c = float(c)
        if c == 0.0:
            return constant(1.0)
        if c == 1.0:
            return self
        if self.is_const():
            return constant(self.param**c)
        return SmoothFunction("pow", (self,), c)

    def __rpow__(self, base):
        base = float(base)
        if base <= 0:
            raise DomainError("only positive bases are supported for x -> b**f")
        return exp(self * math.log(base))

    # evaluation --------------------------------------------------------------

    def __call__(self, points, dim=None):
        dim = self.dim if dim is None else dim
        coords, shape = split_points(points, dim)
        return np.broadcast_to(self._eval(coords, shape), shape).copy() if shape else float(self._eval(coords, shape))

    def _eval(self, coords, shape):
        op = self.op
        if op == "const":
            return np.full(shape, self.param) if shape else self.param
        if op == "coord":
            if self.param >= len(coords):
                raise ArgumentError(f"coordinate x{self.param} used in dimension {len(coords)}")
            return coords[self.param]
        if op == "add":
            return self.args[0]._eval(coords, shape) + self.args[1]._eval(coords, shape)
        if op == "mul":
            return self.args[0]._eval(coords, shape) * self.args[1]._eval(coords, shape)
        u = np.asarray(self.args[0]._eval(coords, shape), dtype=float)
        if op == "pow":
            c = self.param
            if c != round(c) and np.any(u < 0):
                raise DomainError(f"non-integer power {c} of a negative value")
            if c < 0 and np.any(u == 0):
                raise DomainError("negative power of zero")
            return np.power(u, c)
        if op == "exp":
            return np.exp(u)
        if op == "log":
            if np.any(u <= 0):
                raise DomainError("log of a non-positive value")
            return np.log(u)
        if op == "sqrt":
            if np.any(u < 0):
                raise DomainError("sqrt of a negative value")
            return np.sqrt(u)
        if op == "cos":
            return np.cos(u)
        if op == "sin":
            return np.sin(u)
        raise AssertionError(op)

    def jet(self, points, order=4, dim=None):
        """Jet of the function at ``points`` up to total degree ``order``."""
        dim = self.dim if dim is None else dim
        xs = coordinate_jets(points, dim, order)
        return self._jet(xs, dim, order, xs[0].batch_shape)

    def _jet(self, xs, dim, order, shape):
        op = self.op
        if op == "const":
            return Jet.constant(self.param, dim, order, shape)
        if op == "coord":
            if self.param >= dim:
                raise ArgumentError(f"coordinate x{self.param} used in dimension {dim}")
            return xs[self.param]
        if op == "add":
            return self.args[0]._jet(xs, dim, order, shape) + self.args[1]._jet(xs, dim, order, shape)
        if op == "mul":
            return self.args[0]._jet(xs, dim, order, shape) * self.args[1]._jet(xs, dim, order, shape)
        u = self.args[0]._jet(xs, dim, order, shape)
        if op == "pow":
            return u.power(self.param)
        if op == "sqrt" and np.any(u.value <= 0):
            raise DomainError("sqrt of a non-positive value inside a jet")
        return getattr(u, op)()

    # symbolic derivative -----------------------------------------------------

    def diff(self, axis=0):
        op = self.op
        if op == "const":
            return constant(0.0)
        if op == "coord":
            return constant(1.0 if self.param == axis else 0.0)
        if op == "add":
            return self.args[0].diff(axis) + self.args[1].diff(axis)
        if op == "mul":
            a, b = self.args
            return a.diff(axis) * b + a * b.diff(axis)
        u = self.args[0]
        du = u.diff(axis)
        if du.is_const(0.0):
            return constant(0.0)
        if op == "pow":
            return self.param * u ** (self.param - 1.0) * du
        if op == "exp":
            return self * du
        if op == "log":
            return du / u
        if op == "sqrt":
            return du * 0.5 / self
        if op == "cos":
            return -sin(u) * du
        if op == "sin":
            return cos(u) * du
        raise AssertionError(op)

    # text form ---------------------------------------------------------------

    def to_string(self):
        op = self.op
        if op == "const":
            return repr(self.param)
        if op == "coord":
            return f"x{self.param}"
        if op == "add":
            return f"({self.args[0].to_string()} + {self.args[1].to_string()})"
        if op == "mul":
            return f"({self.args[0].to_string()} * {self.args[1].to_string()})"
        if op == "pow":
            return f"({self.args[0].to_string()} ** {self.param!r})"
        return f"{op}({self.args[0].to_string()})"

    __str__ = to_string

    def __repr__(self):
        return f"SmoothFunction({self.to_string()!r})"

    def same_as(self, other):
        """Structural equality."""
        return (
            isinstance(other, SmoothFunction)
            and self.op == other.op
            and self.param == other.param
            and len(self.args) == len(other.args)
            and all(a.same_as(b) for a, b in zip(self.args, other.args))
        )


def coordinate(i):
    return SmoothFunction("coord", param=int(i))


def constant(c):
    return SmoothFunction("const", param=float(c))


def _unary(name):
    npfunc = getattr(np, name)

    def f(u):
        if isinstance(u, SmoothFunction):
            if u.is_const():
                return constant(float(npfunc(u.param)))
            return SmoothFunction(name, (u,))
        if isinstance(u, Jet):
            return getattr(u, name)()
        return npfunc(u)

    f.__name__ = name
    f.__doc__ = f"{name} of a SmoothFunction, Jet or array."
    return f


exp = _unary("exp")
log = _unary("log")
sqrt = _unary("sqrt")
cos = _unary("cos")
sin = _unary("sin")

X = coordinate(0)
Y = coordinate(1)


# ---------------------------------------------------------------------------
# parser

_NAMES = {"x": 0, "y": 1, "x0": 0, "x1": 1}
_CONSTS = {"pi": math.pi, "e": math.e}
_FUNCS = {"exp": exp, "log": log, "sqrt": sqrt, "cos": cos, "sin": sin}


def parse_expression(text):
    """Parse a Python-syntax expression in ``x``/``y`` (or ``x0``/``x1``)."""
    try:
        tree = ast.parse(str(text).strip(), mode="eval")
    except SyntaxError as exc:
        raise ArgumentError(f"cannot parse expression {text!r}: {exc.msg}") from None
    return _build(tree.body, text)


def _build(node, text):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return constant(node.value)
    if isinstance(node, ast.Name):
        if node.id in _NAMES:
            return coordinate(_NAMES[node.id])
        if node.id in _CONSTS:
            return constant(_CONSTS[node.id])
        raise ArgumentError(f"unknown name {node.id!r} in {text!r}")
    if isinstance(node, ast.UnaryOp):
        operand = _build(node.operand, text)
        if isinstance(node.op, ast.USub):
            return -operand
        if isinstance(node.op, ast.UAdd):
            return operand
    if isinstance(node, ast.BinOp):
        a, b = _build(node.left, text), _build(node.right, text)
        if isinstance(node.op, ast.Add):
            return a + b
        if isinstance(node.op, ast.Sub):
            return a - b
        if isinstance(node.op, ast.Mult):
            return a * b
        if isinstance(node.op, ast.Div):
            return a / b
        if isinstance(node.op, ast.Pow):
            return a**b
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        if len(node.args) != 1 or node.keywords:
            raise ArgumentError(f"{node.func.id} takes exactly one argument in {text!r}")
        return _FUNCS[node.func.id](_build(node.args[0], text))
    raise ArgumentError(f"unsupported syntax {ast.dump(node)[:40]} in {text!r}")
