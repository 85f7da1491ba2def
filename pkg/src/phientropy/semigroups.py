"""Markov semigroups ``P_t f(x)``: exact Gaussian kernels and PDE solvers.

``HeatSemigroup`` and ``OrnsteinUhlenbeckSemigroup`` integrate against
their Gaussian transition kernels with Gauss-Hermite rules.
``NumericSemigroup`` solves the backward equation ``du/dt = L u`` by
Crank-Nicolson on a box with reflecting (Neumann) ends, and
``InhomogeneousSemigroup`` does the same for a time-dependent drift.

Every evaluator takes the function as anything callable on an array of
points (a :class:`SmoothFunction`, a :class:`GridFunction`, a lambda).
"""

from __future__ import annotations

import csv
import io

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_hermitenorm
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import splu

from .calculus import ConstantMatrix, DiffusionGenerator, heat, ornstein_uhlenbeck
from .errors import ArgumentError, TruncationError, UnsupportedError
from .jets import SmoothFunction, constant, parse_expression

__all__ = [
    "HeatSemigroup",
    "OrnsteinUhlenbeckSemigroup",
    "NumericSemigroup",
    "InhomogeneousSemigroup",
    "GridFunction",
    "apply",
    "apply_inhomogeneous",
    "local_entropy",
    "gradient_of",
]


def _callable(f, dim=1):
    """Turn ``f`` into a function of an array of points of dimension ``dim``."""
    if isinstance(f, str):
        f = parse_expression(f)
    if isinstance(f, (int, float)):
        f = constant(f)
    if isinstance(f, SmoothFunction):
        expr = f

        def fn(y):
            y = np.asarray(y, dtype=float)
            shape = y.shape if dim == 1 else y.shape[:-1]
            return np.broadcast_to(expr(y, dim), shape)

        fn.expression = expr
        return fn
    return f


def _expression(f):
    if isinstance(f, str):
        return parse_expression(f)
    return getattr(f, "expression", f)


def _points(x, dim):
    x = np.asarray(x, dtype=float)
    if dim == 1:
        return x.reshape(-1), x.ndim == 0
    return x.reshape(-1, dim), x.ndim == 1


def _finish(v, single):
    return float(v[0]) if single else v


def gradient_of(f, dim):
    """Partial derivatives of ``f`` as callables."""
    f = _expression(f)
    if isinstance(f, SmoothFunction):
        return [_callable(f.diff(i), dim) for i in range(dim)]
    if isinstance(f, GridFunction):
        return [f.derivative_function(1, axis=i) for i in range(dim)]
    raise UnsupportedError("derivatives need a SmoothFunction or a GridFunction")


# ---------------------------------------------------------------------------
# Gaussian-kernel semigroups


class _KernelSemigroup:
    """``P_t h(x) = E h(m_t(x) + s_t Z)`` with ``Z`` standard Gaussian."""

    kind = "kernel"
    tail_tol = 1e-12

    def __init__(self, dim=1, order=None, check_tail=True):
        if dim not in (1, 2):
            raise ArgumentError("only dimensions 1 and 2 are supported")
        self.dim = dim
        self.order = order or (200 if dim == 1 else 48)
        self.check_tail = check_tail
        self._rules = {}

    def _rule(self, order):
        if order not in self._rules:
            z, w = roots_hermitenorm(order)
            w = w / np.sqrt(2.0 * np.pi)
            if self.dim == 2:
                Z1, Z2 = np.meshgrid(z, z, indexing="ij")
                z = np.stack([Z1.ravel(), Z2.ravel()], axis=-1)
                w = np.outer(w, w).ravel()
            self._rules[order] = (z, w)
        return self._rules[order]

    def center(self, x, t):
        raise NotImplementedError

    def scale(self, t):
        raise NotImplementedError

    def derivative_factor(self, t):
        raise NotImplementedError

    def _expect(self, h, t, pts):
        z, w = self._rule(self.order)
        m = self.center(pts, t)
        s = self.scale(t)
        if self.dim == 1:
            y = m[:, None] + s * z[None, :]
            vals = np.asarray(h(y.ravel()), dtype=float).reshape(y.shape)
            far = np.abs(z) > 0.5 * np.abs(z).max()
        else:
            y = m[:, None, :] + s * z[None, :, :]
            vals = np.asarray(h(y.reshape(-1, 2)), dtype=float).reshape(y.shape[:2])
            far = np.abs(z).max(axis=1) > 0.5 * np.abs(z).max()
        out = vals @ w
        if self.check_tail:
            with np.errstate(invalid="ignore", over="ignore"):
                total = np.abs(vals) @ w
                tail = np.abs(vals[:, far]) @ w[far]
            # a bounded f puts about the rule's own far mass in the tail
            allowed = max(self.tail_tol, 1e3 * float(np.sum(w[far])))
            bad = ~(tail <= allowed * np.maximum(total, 1e-300)) & (tail > 0)
            if np.any(bad):
                k = int(np.argmax(bad))
                raise TruncationError(
                    f"kernel tail carries a fraction {tail[k] / total[k]:.2e} of the integral at x={pts[k]}; f grows too fast"
                )
        return out

    def apply(self, f, t, x):
        """``P_t f(x)``."""
        if t < 0:
            raise ArgumentError(f"time must be nonnegative, got {t}")
        h = _callable(f, self.dim)
        pts, single = _points(x, self.dim)
        if t == 0:
            return _finish(np.broadcast_to(np.asarray(h(pts), dtype=float), pts.shape[:1]).copy(), single)
        out = self._expect(h, t, pts)
        if not np.all(np.isfinite(out)):
            raise TruncationError("kernel integral is not finite; f grows too fast for the Gaussian kernel")
        return _finish(out, single)

    def gradient(self, f, t, x):
        """``grad P_t f(x)`` with a leading axis of length ``dim``."""
        parts = gradient_of(f, self.dim)
        c = self.derivative_factor(t)
        return np.stack([c * np.atleast_1d(self.apply(g, t, x)) for g in parts])


class HeatSemigroup(_KernelSemigroup):
    """Heat semigroup ``e^{t Laplacian}``: Gaussian kernel of variance ``2t``."""

    name = "heat"

    @property
    def generator(self):
        return heat(self.dim)

    def center(self, x, t):
        return x

    def scale(self, t):
        return np.sqrt(2.0 * t)

    def derivative_factor(self, t):
        return 1.0


class OrnsteinUhlenbeckSemigroup(_KernelSemigroup):
    """Mehler formula ``P_t f(x) = E f(e^{-t} x + sqrt(1 - e^{-2t}) Z)``."""

    name = "ou"

    @property
    def generator(self):
        return ornstein_uhlenbeck(self.dim)

    def center(self, x, t):
        return np.exp(-t) * x

    def scale(self, t):
        return np.sqrt(-np.expm1(-2.0 * t))

    def derivative_factor(self, t):
        return np.exp(-t)


# ---------------------------------------------------------------------------
# grid functions


_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def _five_point(values, h, k, axis=0):
    """Order-4 central differences; second-order one-sided near the ends."""
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    out = np.empty_like(v)
    stencil = _D1 if k == 1 else _D2
    n = v.shape[0]
    if n < 5:
        raise ArgumentError("need at least five nodes for derivatives")
    out[2:-2] = sum(stencil[j] * v[j : n - 4 + j] for j in range(5)) / h**k
    if k == 1:
        out[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
        out[1] = (v[2] - v[0]) / (2 * h)
        out[-2] = (v[-1] - v[-3]) / (2 * h)
        out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
    else:
        out[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / h**2
        out[1] = (v[2] - 2 * v[1] + v[0]) / h**2
        out[-2] = (v[-1] - 2 * v[-2] + v[-3]) / h**2
        out[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h**2
    return np.moveaxis(out, 0, axis)


class GridFunction:
    """Samples on a uniform tensor grid with cubic interpolation."""

    def __init__(self, axes, values):
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.values = np.asarray(values, dtype=float)
        self.dim = len(self.axes)
        self._interp = None

    @property
    def nodes(self):
        if self.dim == 1:
            return self.axes[0]
        X, Y = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=-1)

    def _interpolant(self):
        if self._interp is None:
            if self.dim == 1:
                self._interp = CubicSpline(self.axes[0], self.values)
            else:
                from scipy.interpolate import RegularGridInterpolator

                self._interp = RegularGridInterpolator(self.axes, self.values, method="cubic")
        return self._interp

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            lo, hi = self.axes[0][0], self.axes[0][-1]
            if np.any((x < lo - 1e-12) | (x > hi + 1e-12)):
                raise TruncationError(f"evaluation outside the grid box [{lo}, {hi}]")
            return self._interpolant()(x)
        shape = x.shape[:-1]
        return self._interpolant()(x.reshape(-1, 2)).reshape(shape)

    def spacing(self, axis=0):
        a = self.axes[axis]
        return (a[-1] - a[0]) / (a.size - 1)

    def derivative_function(self, k=1, axis=0):
        vals = _five_point(self.values, self.spacing(axis), k, axis)
        return GridFunction(self.axes, vals)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.dim == 1:
            w.writerow(["x", "value"])
            for a, b in zip(self.axes[0], self.values):
                w.writerow([repr(float(a)), repr(float(b))])
        else:
            w.writerow(["x0", "x1", "value"])
            for (a, b), v in zip(self.nodes, self.values.ravel()):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(v))])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# finite-difference backward solvers


def _coeffs_on_grid(L, nodes):
    """Diffusion diagonal and drift at grid nodes."""
    n = L.dim
    if isinstance(L.diffusion, ConstantMatrix):
        m = L.diffusion.matrix
        if n == 2 and abs(m[0, 1]) > 0:
            raise UnsupportedError("the 2D backward solver needs a diagonal diffusion matrix")
        diag = [np.full(nodes.shape[0], m[i, i]) for i in range(n)]
    else:
        d = L.diffusion.d(nodes, n)
        diag = [np.broadcast_to(d, nodes.shape[:1]).astype(float) for _ in range(n)]
    drift = [np.broadcast_to(a(nodes, n), nodes.shape[:1]).astype(float) for a in L.drift]
    return diag, drift


def _operator_1d(x, diff, drift):
    """Central-difference ``D u'' - a u'`` with reflecting ends."""
    h = x[1] - x[0]
    n = x.size
    lower = diff / h**2 + drift / (2 * h)
    upper = diff / h**2 - drift / (2 * h)
    main = -2.0 * diff / h**2
    up = upper[:-1].copy()
    lo = lower[1:].copy()
    # Neumann: ghost value equals the first interior neighbour
    up[0] = lower[0] + upper[0]
    lo[-1] = lower[-1] + upper[-1]
    return sp.diags([lo, main, up], [-1, 0, 1], shape=(n, n), format="csc")


def _operator_2d(axes, diag, drift):
    nx, ny = axes[0].size, axes[1].size
    Ix, Iy = sp.identity(nx, format="csc"), sp.identity(ny, format="csc")
    ops = []
    for axis in range(2):
        a = axes[axis]
        m = a.size
        h = a[1] - a[0]
        # 1D building blocks with unit coefficients
        second = sp.diags([np.ones(m - 1), -2 * np.ones(m), np.ones(m - 1)], [-1, 0, 1], format="lil") / h**2
        first = sp.diags([-np.ones(m - 1), np.ones(m - 1)], [-1, 1], format="lil") / (2 * h)
        second[0, 1] = 2.0 / h**2
        second[m - 1, m - 2] = 2.0 / h**2
        first[0, 1] = 0.0
        first[m - 1, m - 2] = 0.0
        second, first = second.tocsc(), first.tocsc()
        if axis == 0:
            S, F = sp.kron(second, Iy), sp.kron(first, Iy)
        else:
            S, F = sp.kron(Ix, second), sp.kron(Ix, first)
        ops.append(sp.diags(diag[axis]) @ S - sp.diags(drift[axis]) @ F)
    return (ops[0] + ops[1]).tocsc()


class NumericSemigroup:
    """Crank-Nicolson solution of ``du/dt = L u`` on a box.

    Default grid: 2048 nodes on ``[-10, 10]`` in 1D, 128 x 128 on
    ``[-8, 8]^2`` in 2D; time step ``1e-3``.
    """

    kind = "numeric"
    name = "numeric"

    def __init__(self, generator, box=None, n=None, dt=1e-3):
        if not isinstance(generator, DiffusionGenerator):
            raise ArgumentError("NumericSemigroup needs a DiffusionGenerator")
        self.generator = generator
        self.dim = generator.dim
        if self.dim not in (1, 2):
            raise ArgumentError("only dimensions 1 and 2 are supported")
        if box is None:
            box = ((-10.0, 10.0),) if self.dim == 1 else ((-8.0, 8.0), (-8.0, 8.0))
        elif np.ndim(box[0]) == 0:
            box = (tuple(box),) * self.dim
        self.box = tuple(tuple(map(float, b)) for b in box)
        n = n or (2048 if self.dim == 1 else 128)
        self.axes = [np.linspace(lo, hi, n) for lo, hi in self.box]
        self.dt = float(dt)
        grid = GridFunction(self.axes, np.zeros((n,) * self.dim))
        self.nodes = grid.nodes
        diag, drift = _coeffs_on_grid(generator, self.nodes)
        if self.dim == 1:
            self.A = _operator_1d(self.axes[0], diag[0], drift[0])
        else:
            self.A = _operator_2d(self.axes, diag, drift)
        self._lu = {}

    def _stepper(self, dt):
        if dt not in self._lu:
            I = sp.identity(self.A.shape[0], format="csc")
            self._lu[dt] = (splu((I - 0.5 * dt * self.A).tocsc()), (I + 0.5 * dt * self.A).tocsr())
        return self._lu[dt]

    def sample(self, f):
        vals = np.asarray(_callable(f, self.dim)(self.nodes), dtype=float)
        return np.broadcast_to(vals, self.nodes.shape[:1]).copy()

    def _shape(self, u):
        return u if self.dim == 1 else u.reshape(self.axes[0].size, self.axes[1].size)

    def solve(self, f, times):
        """Grid functions ``P_t f`` for each time in ``times`` (sorted)."""
        times = [float(t) for t in times]
        if any(t < 0 for t in times):
            raise ArgumentError("times must be nonnegative")
        u = self.sample(f)
        out, now = {}, 0.0
        for t in sorted(set(times)):
            steps = int(round((t - now) / self.dt))
            if steps > 0:
                dt = (t - now) / steps
                lu, rhs = self._stepper(dt)
                for _ in range(steps):
                    u = lu.solve(rhs @ u)
            now = t
            out[t] = GridFunction(self.axes, self._shape(u.copy()))
        return [out[t] for t in times]

    def grid_function(self, f, t):
        return self.solve(f, [t])[0]

    def apply(self, f, t, x):
        if t < 0:
            raise ArgumentError(f"time must be nonnegative, got {t}")
        pts, single = _points(x, self.dim)
        return _finish(np.atleast_1d(self.grid_function(f, t)(pts)), single)

    def gradient(self, f, t, x):
        g = self.grid_function(f, t)
        pts, _ = _points(x, self.dim)
        return np.stack([np.atleast_1d(g.derivative_function(1, i)(pts)) for i in range(self.dim)])


class InhomogeneousSemigroup:
    """``P_{s,t} f(x) = E f(X_t)`` for ``dX = sqrt(2 D) dB - a(X, tau) dtau``, 1D.

    The backward equation ``d_tau v + D v'' - a(., tau) v' = 0`` is marched
    from ``tau = t`` down to ``s`` by Crank-Nicolson with the drift frozen at
    each step midpoint.  ``drift(x, tau)`` returns drift values at nodes.
    """

    kind = "inhomogeneous"
    name = "inhomogeneous"

    def __init__(self, drift, diffusion=1.0, box=(-10.0, 10.0), n=2048, dt=1e-3):
        self.drift = drift
        self.D = float(diffusion)
        self.dim = 1
        self.axes = [np.linspace(box[0], box[1], n)]
        self.x = self.axes[0]
        self.dt = float(dt)
        self._cache = {}

    def grid_function(self, f, s, t):
        if s > t:
            raise ArgumentError(f"need s <= t, got s={s}, t={t}")
        u = np.asarray(_callable(f, 1)(self.x), dtype=float) * np.ones_like(self.x)
        if t == s:
            return GridFunction(self.axes, u)
        for lu, B in self._factors(s, t):
            u = lu.solve(B @ u)
        return GridFunction(self.axes, u)

    def _factors(self, s, t):
        key = (float(s), float(t))
        if key not in self._cache:
            steps = max(1, int(round((t - s) / self.dt)))
            dt = (t - s) / steps
            I = sp.identity(self.x.size, format="csc")
            diff = np.full_like(self.x, self.D)
            out = []
            for k in range(steps):
                tau_mid = t - (k + 0.5) * dt
                A = _operator_1d(self.x, diff, np.asarray(self.drift(self.x, tau_mid), dtype=float))
                out.append((splu((I - 0.5 * dt * A).tocsc()), (I + 0.5 * dt * A).tocsr()))
            self._cache = {key: out}
        return self._cache[key]

    def apply(self, f, s, t, x):
        pts, single = _points(x, 1)
        if s == t:
            return _finish(np.atleast_1d(np.asarray(_callable(f, 1)(pts), dtype=float) * np.ones_like(pts)), single)
        return _finish(np.atleast_1d(self.grid_function(f, s, t)(pts)), single)

    def gradient(self, f, s, t, x):
        pts, _ = _points(x, 1)
        if s == t:
            return np.stack([np.atleast_1d(g(pts)) for g in gradient_of(f, 1)])
        return self.grid_function(f, s, t).derivative_function(1)(pts)[None]


# ---------------------------------------------------------------------------
# module-level operations


def apply(P, f, t, x):
    """``P_t f(x)``."""
    return P.apply(f, t, x)


def apply_inhomogeneous(P, f, s, t, x):
    """``P_{s,t} f(x)``."""
    return P.apply(f, s, t, x)


def local_entropy(P, phi, f, t, x):
    """``P_t Phi(f)(x) - Phi(P_t f(x))``."""
    h = _callable(f, P.dim)

    def phi_of_f(y):
        return phi.evaluate(np.asarray(h(y), dtype=float))

    pf = np.atleast_1d(P.apply(h, t, x))
    phi.check_range(pf)
    out = np.atleast_1d(P.apply(phi_of_f, t, x)) - phi.value(pf)
    return float(out[0]) if np.ndim(x) == (0 if P.dim == 1 else 1) else out
