"""Diffusion generators, carre du champ, Gamma-2 and curvature estimates.

A generator acts as ``L f = sum_ij D_ij d_ij f - sum_i a_i d_i f`` with the
diffusion ``D`` either a constant matrix or a scalar field ``d(x) I``.  All
operators are evaluated pointwise from order-4 Taylor jets, so the
Gamma-2 operator can be computed straight from its definition
``1/2 (L Gamma(f) - 2 Gamma(f, L f))`` as well as from closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DomainError, UnsupportedError
from .jets import Jet, SmoothFunction, constant, coordinate, parse_expression

__all__ = [
    "ConstantMatrix",
    "ScalarField",
    "DiffusionGenerator",
    "AuditGrid",
    "CDEstimate",
    "heat",
    "ornstein_uhlenbeck",
    "gibbs_generator",
    "fokker_planck_generator",
    "augmented_generator",
    "gamma",
    "gamma_bilinear",
    "gamma_from_definition",
    "gamma2",
    "generator_value",
    "cd_rho_estimate",
    "pointwise_rho",
    "diffusion_identity_check",
]

DEFINITION = "definition"
CLOSED_FORM = "closed_form"


def _as_function(f):
    if isinstance(f, SmoothFunction):
        return f
    if isinstance(f, str):
        return parse_expression(f)
    return SmoothFunction.wrap(f)


@dataclass(frozen=True)
class ConstantMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise ArgumentError("diffusion matrix must be square")
        if not np.allclose(m, m.T, atol=1e-14):
            raise ArgumentError("diffusion matrix must be symmetric")
        if np.linalg.eigvalsh(m).min() < -1e-12:
            raise ArgumentError("diffusion matrix must be nonnegative")
        object.__setattr__(self, "matrix", m)

    def to_dict(self):
        return {"type": "constant", "matrix": self.matrix.tolist()}


@dataclass(frozen=True)
class ScalarField:
    d: SmoothFunction

    def __post_init__(self):
        object.__setattr__(self, "d", _as_function(self.d))

    def to_dict(self):
        return {"type": "scalar", "d": self.d.to_string()}


@dataclass(frozen=True)
class DiffusionGenerator:
    """``L f = D : Hess f - <a, grad f>`` in dimension 1 or 2.

    ``domain`` is an optional box ``((lo, hi), ...)``; points outside it are
    rejected with :class:`DomainError`.
    """

    dim: int
    diffusion: ConstantMatrix | ScalarField
    drift: tuple
    domain: tuple | None = None
    name: str = "generator"

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ArgumentError("only dimensions 1 and 2 (3 for augmented 2D) are supported")
        drift = tuple(_as_function(a) for a in self.drift)
        if len(drift) != self.dim:
            raise ArgumentError(f"drift needs {self.dim} components, got {len(drift)}")
        object.__setattr__(self, "drift", drift)
        if isinstance(self.diffusion, ConstantMatrix) and self.diffusion.matrix.shape != (self.dim, self.dim):
            raise ArgumentError("diffusion matrix shape does not match the dimension")

    @property
    def is_constant(self):
        return isinstance(self.diffusion, ConstantMatrix)

    def to_dict(self):
        return {
            "name": self.name,
            "dim": self.dim,
            "diffusion": self.diffusion.to_dict(),
            "drift": [a.to_string() for a in self.drift],
            "domain": None if self.domain is None else [list(b) for b in self.domain],
        }

    @classmethod
    def from_dict(cls, data):
        diff = data["diffusion"]
        if diff["type"] == "constant":
            diffusion = ConstantMatrix(np.array(diff["matrix"], dtype=float))
        elif diff["type"] == "scalar":
            diffusion = ScalarField(parse_expression(diff["d"]))
        else:
            raise ArgumentError(f"unknown diffusion type {diff['type']!r}")
        domain = data.get("domain")
        return cls(
            int(data["dim"]),
            diffusion,
            tuple(parse_expression(a) for a in data["drift"]),
            None if domain is None else tuple(tuple(b) for b in domain),
            data.get("name", "generator"),
        )

    # pointwise coefficients ------------------------------------------

    def check_points(self, points):
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 0 if self.dim == 1 else pts.ndim == 1
        pts = pts.reshape(-1) if self.dim == 1 else pts.reshape(-1, self.dim)
        if self.domain is not None:
            cols = pts[:, None] if self.dim == 1 else pts
            for i, (lo, hi) in enumerate(self.domain):
                bad = (cols[:, i] < lo) | (cols[:, i] > hi)
                if np.any(bad):
                    raise DomainError(f"point {cols[np.argmax(bad)].tolist()} lies outside the domain {self.domain}")
        return pts, single

    def coefficients(self, pts, order=4):
        if self.is_constant:
            d = self.diffusion.matrix
        else:
            d = self.diffusion.d.jet(pts, order, self.dim)
            if np.any(d.value < 0):
                raise DomainError("scalar diffusion is negative at an audited point")
        a = [ai.jet(pts, order, self.dim) for ai in self.drift]
        return d, a

    # jet-level operators ------------------------------------------------

    def apply_jet(self, F, coeffs):
        """Jet of ``L F`` (two orders lower than ``F``)."""
        d, a = coeffs
        grads = [F.diff(i) for i in range(self.dim)]
        out = None
        for i in range(self.dim):
            for j in range(self.dim):
                if self.is_constant:
                    if d[i, j] == 0.0:
                        continue
                    term = grads[i].diff(j) * d[i, j]
                elif i == j:
                    term = d * grads[i].diff(j)
                else:
                    continue
                out = term if out is None else out + term
        for i in range(self.dim):
            term = -(a[i] * grads[i])
            out = term if out is None else out + term
        return out

    def gamma_jet(self, F, G, coeffs):
        """Jet of ``<grad F, D grad G>``."""
        d, _ = coeffs
        gf = [F.diff(i) for i in range(self.dim)]
        gg = [G.diff(i) for i in range(self.dim)]
        out = None
        for i in range(self.dim):
            for j in range(self.dim):
                if self.is_constant:
                    if d[i, j] == 0.0:
                        continue
                    term = gf[i] * gg[j] * d[i, j]
                elif i == j:
                    term = d * gf[i] * gg[j]
                else:
                    continue
                out = term if out is None else out + term
        if out is None:
            return Jet.constant(0.0, self.dim, min(F.order, G.order) - 1, F.batch_shape)
        return out


# ---------------------------------------------------------------------------
# presets


def heat(dim=1):
    """Generator of the heat semigroup, ``L = Laplacian``."""
    return DiffusionGenerator(dim, ConstantMatrix(np.eye(dim)), tuple(constant(0.0) for _ in range(dim)), name=f"heat{dim}d")


def ornstein_uhlenbeck(dim=1):
    """``L = Laplacian - <x, grad>`` with invariant measure the standard Gaussian."""
    return DiffusionGenerator(dim, ConstantMatrix(np.eye(dim)), tuple(coordinate(i) for i in range(dim)), name=f"ou{dim}d")


def gibbs_generator(potential, dim=None):
    """``L = Laplacian - <grad Psi, grad>``, reversible for ``exp(-Psi)``."""
    potential = _as_function(potential)
    dim = potential.dim if dim is None else dim
    drift = tuple(potential.diff(i) for i in range(dim))
    return DiffusionGenerator(dim, ConstantMatrix(np.eye(dim)), drift, name="gibbs")


def fokker_planck_generator(potential, diffusion=None, flux=None, dim=None):
    """Dual generator ``L f = div(D grad f) - <D (grad V - F), grad f>``."""
    potential = _as_function(potential)
    dim = potential.dim if dim is None else dim
    if diffusion is None:
        diffusion = ConstantMatrix(np.eye(dim))
    flux = tuple(constant(0.0) for _ in range(dim)) if flux is None else tuple(_as_function(c) for c in flux)
    w = [potential.diff(i) - flux[i] for i in range(dim)]
    if isinstance(diffusion, ConstantMatrix):
        m = diffusion.matrix
        drift = tuple(sum((m[i, j] * w[j] for j in range(dim)), constant(0.0)) for i in range(dim))
    else:
        d = diffusion.d
        drift = tuple(d * w[i] - d.diff(i) for i in range(dim))
    return DiffusionGenerator(dim, diffusion, drift, name="fokker_planck")


def augmented_generator(diffusion_matrix, drift):
    """Space-time generator for a drift ``a(x, t)``.

    The last coordinate is time; the diffusion is ``diag(D, 0)`` and the
    drift is ``(a, 1)``, so the diffusion matrix is degenerate.
    """
    m = np.atleast_2d(np.asarray(diffusion_matrix, dtype=float))
    n = m.shape[0]
    big = np.zeros((n + 1, n + 1))
    big[:n, :n] = m
    drift = tuple(_as_function(a) for a in drift) + (constant(1.0),)
    return DiffusionGenerator(n + 1, ConstantMatrix(big), drift, name="augmented")


# ---------------------------------------------------------------------------
# operators


def _finish(values, single):
    values = np.asarray(values, dtype=float)
    return float(values[0]) if single else values


def gamma(L, f, x):
    """``Gamma(f)(x) = <grad f, D grad f>``."""
    f = _as_function(f)
    pts, single = L.check_points(x)
    F = f.jet(pts, 1, L.dim)
    g = F.gradient()
    if L.is_constant:
        val = np.einsum("i...,ij,j...->...", g, L.diffusion.matrix, g)
    else:
        val = L.diffusion.d(pts, L.dim) * np.sum(g * g, axis=0)
    return _finish(val, single)


def gamma_bilinear(L, f, g, x):
    """``Gamma(f, g)(x)`` from the polarisation of the jet carre du champ."""
    f, g = _as_function(f), _as_function(g)
    pts, single = L.check_points(x)
    coeffs = L.coefficients(pts, 1)
    val = L.gamma_jet(f.jet(pts, 1, L.dim), g.jet(pts, 1, L.dim), coeffs).value
    return _finish(val, single)


def gamma_from_definition(L, f, x):
    """``1/2 (L(f^2) - 2 f L f)`` evaluated with jets."""
    f = _as_function(f)
    pts, single = L.check_points(x)
    coeffs = L.coefficients(pts, 2)
    F = f.jet(pts, 2, L.dim)
    val = 0.5 * (L.apply_jet(F * F, coeffs).value - 2.0 * F.value * L.apply_jet(F, coeffs).value)
    return _finish(val, single)


def generator_value(L, f, x):
    """``L f(x)``."""
    f = _as_function(f)
    pts, single = L.check_points(x)
    coeffs = L.coefficients(pts, 2)
    return _finish(L.apply_jet(f.jet(pts, 2, L.dim), coeffs).value, single)


def _gamma2_definition(L, F, coeffs):
    LF = L.apply_jet(F, coeffs)
    gam = 0.5 * (L.apply_jet(F * F, coeffs) - 2.0 * F * LF)
    # Gamma(f, Lf) = 1/2 (L(f Lf) - f L(Lf) - Lf Lf)
    cross = 0.5 * (L.apply_jet(F * LF, coeffs).value - F.value * L.apply_jet(LF, coeffs).value - LF.value**2)
    return 0.5 * (L.apply_jet(gam, coeffs).value - 2.0 * cross)


def _gamma2_closed(L, F, coeffs, pts):
    n = L.dim
    g = F.gradient()
    H = F.hessian()
    _, a = coeffs
    Ja = np.stack([a[i].gradient() for i in range(n)])  # Ja[i, j] = d a_i / d x_j
    if L.is_constant:
        D = L.diffusion.matrix
        DH = np.einsum("ij,jk...->ik...", D, H)
        trace = np.einsum("ij...,ji...->...", DH, DH)
        JaD = np.einsum("ij...,jk->ik...", Ja, D)
        return trace + np.einsum("i...,ij...,j...->...", g, JaD, g)
    dj = coeffs[0]
    d = dj.value
    gd = dj.gradient()
    lap_d = np.trace(dj.hessian())
    gdf = np.sum(gd * g, axis=0)
    total = np.zeros_like(d)
    for i in range(n):
        total = total + (d * H[i, i] + gd[i] * g[i] - 0.5 * gdf) ** 2
        for j in range(n):
            if i != j:
                total = total + (d * H[i, j] + 0.5 * (gd[i] * g[j] + gd[j] * g[i])) ** 2
    M = _scalar_matrix(d, gd, lap_d, a, Ja, n)
    return total + np.einsum("i...,ij...,j...->...", g, M, g)


def _scalar_matrix(d, gd, lap_d, a, Ja, n):
    a_dot = sum(a[i].value * gd[i] for i in range(n))
    iso = 0.5 * (d * lap_d - a_dot - np.sum(gd * gd, axis=0))
    eye = np.eye(n).reshape((n, n) + (1,) * np.ndim(d))
    return iso * eye + (0.5 - n / 4.0) * np.einsum("i...,j...->ij...", gd, gd) + d * Ja


def gamma2(L, f, x, method=DEFINITION):
    """Gamma-2 of ``f`` at ``x`` by the definition or by a closed form."""
    f = _as_function(f)
    pts, single = L.check_points(x)
    coeffs = L.coefficients(pts, 4)
    if method == DEFINITION:
        F = f.jet(pts, 4, L.dim)
        return _finish(_gamma2_definition(L, F, coeffs), single)
    if method != CLOSED_FORM:
        raise ArgumentError(f"unknown gamma2 method {method!r}")
    if not isinstance(L.diffusion, (ConstantMatrix, ScalarField)):
        raise UnsupportedError("closed-form Gamma-2 needs a constant or scalar diffusion")
    F = f.jet(pts, 2, L.dim)
    return _finish(_gamma2_closed(L, F, coeffs, pts), single)


# ---------------------------------------------------------------------------
# curvature estimate


@dataclass(frozen=True)
class AuditGrid:
    """Uniform audit grid on a box with a given spacing."""

    box: tuple
    spacing: float

    @classmethod
    def default(cls, dim):
        if dim == 1:
            return cls(((-12.0, 12.0),), 0.01)
        return cls(tuple((-6.0, 6.0) for _ in range(dim)), 0.05)

    def axes(self):
        out = []
        for lo, hi in self.box:
            if hi < lo or self.spacing <= 0:
                raise ArgumentError("empty audit grid")
            n = int(round((hi - lo) / self.spacing)) + 1
            out.append(np.linspace(lo, hi, n))
        return out

    def points(self):
        axes = self.axes()
        if len(axes) == 1:
            return axes[0]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def to_dict(self):
        return {"box": [list(b) for b in self.box], "spacing": self.spacing}


@dataclass(frozen=True)
class CDEstimate:
    rho_star: float
    witness_point: tuple
    grid_spec: dict = field(default_factory=dict)

    def to_dict(self):
        return {"rho_star": self.rho_star, "witness_point": list(self.witness_point), "grid": self.grid_spec}


def pointwise_rho(L, points):
    """Largest ``rho`` with the curvature criterion holding at each point."""
    pts, _ = L.check_points(points)
    if pts.shape[0] == 0:
        raise ArgumentError("empty audit grid")
    n = L.dim
    coeffs = L.coefficients(pts, 2)
    _, a = coeffs
    Ja = np.stack([a[i].gradient() for i in range(n)])  # (n, n, N)
    Ja = np.moveaxis(Ja, -1, 0)
    if L.is_constant:
        D = L.diffusion.matrix
        w, U = np.linalg.eigh(D)
        keep = w > 1e-12 * max(w.max(), 1e-300)
        if not np.any(keep):
            return np.full(pts.shape[0], np.inf)
        B = U[:, keep] / np.sqrt(w[keep])
        S = Ja @ D
        S = 0.5 * (S + np.swapaxes(S, -1, -2))
        R = np.einsum("ki,nkl,lj->nij", B, S, B)
        return np.linalg.eigvalsh(R)[:, 0]
    dj = coeffs[0]
    d = dj.value
    M = _scalar_matrix(d, dj.gradient(), np.trace(dj.hessian()), a, np.moveaxis(Ja, 0, -1), n)
    M = np.moveaxis(M, -1, 0)
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    if np.any(d <= 0):
        raise DomainError("scalar diffusion must be positive on the audit grid")
    return np.linalg.eigvalsh(M)[:, 0] / d


def cd_rho_estimate(L, grid=None):
    """Infimum over an audit grid of the pointwise curvature bound."""
    grid = AuditGrid.default(L.dim) if grid is None else grid
    if not isinstance(grid, AuditGrid):
        grid = AuditGrid(*grid)
    if len(grid.box) != L.dim:
        raise ArgumentError("audit grid dimension does not match the generator")
    pts = grid.points()
    if pts.shape[0] == 0:
        raise ArgumentError("empty audit grid")
    rho = pointwise_rho(L, pts)
    k = int(np.argmin(rho))
    witness = (float(pts[k]),) if L.dim == 1 else tuple(float(v) for v in pts[k])
    return CDEstimate(float(rho[k]), witness, grid.to_dict())


# ---------------------------------------------------------------------------
# diffusion identities


def diffusion_identity_check(L, phi, f, points):
    """Max residual of the chain rules ``L Phi(f) = Phi'(f) L f + Phi''(f) Gamma(f)``
    and ``Gamma(Phi'(f)) = Phi''(f)^2 Gamma(f)``."""
    f = _as_function(f)
    pts, _ = L.check_points(points)
    coeffs = L.coefficients(pts, 2)
    F = f.jet(pts, 2, L.dim)
    phi.check_range(F.value)
    P0 = phi.compose(F, 0)
    P1 = phi.compose(F, 1)
    P2 = phi.compose(F, 2).value
    gam = L.gamma_jet(F, F, coeffs).value
    r1 = L.apply_jet(P0, coeffs).value - P1.value * L.apply_jet(F, coeffs).value - P2 * gam
    r2 = L.gamma_jet(P1, P1, coeffs).value - P2**2 * gam
    return float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))
