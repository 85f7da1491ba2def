"""Linear Fokker-Planck equation ``du/dt = div[D (grad u + u a)]`` on a box.

Finite volumes on a cell-centred grid with exponentially fitted
(Scharfetter-Gummel) face fluxes, zero-flux walls and theta-stepping.  For
gradient drift the face drift is the difference quotient of ``V``, so
``e^{-V}`` is an exact discrete equilibrium.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.special import exprel, logsumexp

from .errors import ArgumentError, ConvergenceError, DomainError, StabilityError, UnsupportedError, WindowError
from .jets import SmoothFunction, constant, parse_expression
from .jets import exp as jexp
from .phi import PhiFunction, catalog

__all__ = [
    "Gradient",
    "GradientPlusFlux",
    "Raw",
    "FPProblem",
    "FPSolution",
    "solve_fp",
    "stationary_state",
    "flux_residual",
    "grid_entropy",
    "entropy_dissipation",
    "DecayFit",
    "decay_rate",
    "PeriodicHeat",
    "AlgebraicDecayReport",
    "algebraic_decay_check",
    "IdentityResidual",
    "entropy_production_identity",
]


def _expr(f):
    if isinstance(f, SmoothFunction):
        return f
    if isinstance(f, str):
        return parse_expression(f)
    if isinstance(f, (int, float)):
        return constant(float(f))
    raise ArgumentError(f"cannot interpret {f!r} as an expression")


@dataclass(frozen=True)
class Gradient:
    """Drift ``a = grad V``; the equilibrium is ``e^{-V}``."""

    V: object

    def to_dict(self):
        return {"kind": "gradient", "V": _expr(self.V).to_string()}


@dataclass(frozen=True)
class GradientPlusFlux:
    """Drift ``a = grad V - F`` with ``div(e^{-V} D F) = 0``."""

    V: object
    F: tuple

    def to_dict(self):
        return {"kind": "gradient_plus_flux", "V": _expr(self.V).to_string(), "F": [_expr(c).to_string() for c in self.F]}


@dataclass(frozen=True)
class Raw:
    """Arbitrary drift field ``a``; the equilibrium must be computed."""

    a: tuple

    def to_dict(self):
        return {"kind": "raw", "a": [_expr(c).to_string() for c in self.a]}


def _drift_from_dict(d):
    kind = d.get("kind")
    if kind == "gradient":
        return Gradient(d["V"])
    if kind == "gradient_plus_flux":
        return GradientPlusFlux(d["V"], tuple(d["F"]))
    if kind == "raw":
        return Raw(tuple(d["a"]))
    raise ArgumentError(f"unknown drift kind {kind!r}")


@dataclass
class FPProblem:
    """Problem data.  ``diffusion`` is a number, an expression (scalar field)
    or a diagonal matrix; ``u0`` an expression or an array on the grid."""

    dim: int
    drift: object
    u0: object
    diffusion: object = 1.0
    box: tuple = (-10.0, 10.0)
    n: int = 1024
    horizon: float = 5.0
    dt: float = 1e-2
    save_every: int = 10
    theta: float = 0.5
    startup_steps: int = 2
    normalize_u0: bool = True

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ArgumentError("only dimensions 1 and 2 are supported")
        if self.dim == 2 and np.ndim(self.box[0]) == 0:
            self.box = (tuple(self.box), tuple(self.box))
        if self.n < 4 or self.dt <= 0 or self.horizon < 0:
            raise ArgumentError("need n >= 4, dt > 0 and horizon >= 0")

    # grid ------------------------------------------------------------

    @property
    def boxes(self):
        return [tuple(self.box)] if self.dim == 1 else [tuple(b) for b in self.box]

    @property
    def spacing(self):
        return [(hi - lo) / self.n for lo, hi in self.boxes]

    @property
    def axes(self):
        return [lo + (np.arange(self.n) + 0.5) * h for (lo, _), h in zip(self.boxes, self.spacing)]

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def points(self):
        if self.dim == 1:
            return self.axes[0]
        X, Y = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def initial_density(self):
        if isinstance(self.u0, np.ndarray):
            u = np.asarray(self.u0, dtype=float).reshape(self.shape)
        else:
            u = np.broadcast_to(_expr(self.u0)(self.points(), self.dim), self.shape).astype(float)
        if np.any(u < 0):
            raise DomainError("initial density must be nonnegative")
        mass = u.sum() * self.cell_volume
        if self.normalize_u0:
            if not mass > 0:
                raise ArgumentError("initial density has zero mass on the grid")
            u = u / mass
        elif abs(mass - 1.0) > 1e-10:
            raise ArgumentError(f"initial density has mass {mass!r}; expected 1 within 1e-10")
        return u

    # serialisation -----------------------------------------------------

    def to_dict(self):
        u0 = self.u0.tolist() if isinstance(self.u0, np.ndarray) else _expr(self.u0).to_string()
        diff = self.diffusion
        if isinstance(diff, (SmoothFunction, str)):
            diff = {"field": _expr(diff).to_string()}
        elif np.ndim(diff) > 0:
            diff = {"matrix": np.asarray(diff, dtype=float).tolist()}
        return {"dim": self.dim, "drift": self.drift.to_dict(), "u0": u0, "diffusion": diff,
                "box": [list(b) for b in self.boxes] if self.dim == 2 else list(self.box),
                "n": self.n, "horizon": self.horizon, "dt": self.dt, "save_every": self.save_every,
                "theta": self.theta, "startup_steps": self.startup_steps, "normalize_u0": self.normalize_u0}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["drift"] = _drift_from_dict(d["drift"])
        diff = d.get("diffusion", 1.0)
        if isinstance(diff, dict):
            diff = diff["field"] if "field" in diff else np.asarray(diff["matrix"], dtype=float)
        d["diffusion"] = diff
        if isinstance(d["u0"], list):
            d["u0"] = np.asarray(d["u0"], dtype=float)
        d["box"] = tuple(tuple(b) for b in d["box"]) if d["dim"] == 2 else tuple(d["box"])
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict())


# ---------------------------------------------------------------------------
# discretisation


def _bernoulli(z):
    """``z / (e^z - 1)``."""
    return 1.0 / exprel(z)


def _face_points(problem, axis):
    """Coordinates of the interior faces normal to ``axis``, shape (..., dim)."""
    axes = list(problem.axes)
    axes[axis] = 0.5 * (axes[axis][1:] + axes[axis][:-1])
    if problem.dim == 1:
        return axes[0]
    X, Y = np.meshgrid(*axes, indexing="ij")
    return np.stack([X, Y], axis=-1)


def _diffusion_on_faces(problem, axis, pts):
    diff = problem.diffusion
    shape = pts.shape if problem.dim == 1 else pts.shape[:-1]
    if isinstance(diff, (SmoothFunction, str)):
        d = np.broadcast_to(_expr(diff)(pts, problem.dim), shape).astype(float)
        if np.any(d <= 0):
            raise DomainError("diffusion coefficient must be positive on the box")
        return d
    if np.ndim(diff) == 0:
        if diff <= 0:
            raise DomainError("diffusion coefficient must be positive")
        return np.full(shape, float(diff))
    m = np.asarray(diff, dtype=float).reshape(problem.dim, problem.dim)
    if np.any(m - np.diag(np.diag(m))):
        raise UnsupportedError("finite-volume solver supports diagonal diffusion matrices only")
    return np.full(shape, m[axis, axis])


def _face_drift(problem, axis, pts):
    drift = problem.drift
    shape = pts.shape if problem.dim == 1 else pts.shape[:-1]
    h = problem.spacing[axis]
    if isinstance(drift, (Gradient, GradientPlusFlux)):
        V = np.broadcast_to(_expr(drift.V)(problem.points(), problem.dim), problem.shape)
        a = np.diff(V, axis=axis) / h
        return a
    if isinstance(drift, Raw):
        return np.broadcast_to(_expr(drift.a[axis])(pts, problem.dim), shape).astype(float)
    raise ArgumentError(f"unknown drift spec {drift!r}")


FACE_NODES = 8


def _skew_coefficients(problem, axis):
    """Face transport of ``-D u F`` written as ``e^{-V} D F * (u e^V)``.

    The face factor is the face average of ``e^{-V} D F . n`` by
    Gauss-Legendre quadrature, so the discrete divergence of the face
    fluxes vanishes whenever ``div(e^{-V} D F) = 0``, and ``e^{-V}`` stays an
    exact discrete equilibrium.  ``u e^V`` is averaged across the face.
    Returns ``(sl, sr)`` with skew flux ``-(sl u_left + sr u_right)``.
    """
    drift = problem.drift
    V = _expr(drift.V)
    Vc = np.broadcast_to(V(problem.points(), problem.dim), problem.shape)
    VL = np.take(Vc, np.arange(problem.n - 1), axis=axis)
    VR = np.take(Vc, np.arange(1, problem.n), axis=axis)
    pts = _face_points(problem, axis)
    if problem.dim == 1:
        nodes, weights = [pts], [1.0]
    else:
        other = 1 - axis
        xi, wq = np.polynomial.legendre.leggauss(FACE_NODES)
        nodes, weights = [], 0.5 * wq
        for q in xi:
            shifted = pts.copy()
            shifted[..., other] += 0.5 * problem.spacing[other] * q
            nodes.append(shifted)
    sl = np.zeros_like(VL)
    sr = np.zeros_like(VR)
    for y, w in zip(nodes, weights):
        shape = VL.shape
        Vy = np.broadcast_to(V(y, problem.dim), shape)
        flux = _diffusion_on_faces(problem, axis, y) * np.broadcast_to(_expr(drift.F[axis])(y, problem.dim), shape)
        sl = sl + w * 0.5 * np.exp(VL - Vy) * flux
        sr = sr + w * 0.5 * np.exp(VR - Vy) * flux
    return sl, sr


def assemble(problem):
    """Sparse generator ``A`` with ``du/dt = A u`` (columns sum to zero)."""
    N = int(np.prod(problem.shape))
    idx = np.arange(N).reshape(problem.shape)
    rows, cols, vals = [], [], []
    for axis in range(problem.dim):
        h = problem.spacing[axis]
        pts = _face_points(problem, axis)
        d = _diffusion_on_faces(problem, axis, pts)
        z = _face_drift(problem, axis, pts) * h
        cr = (d / h) * _bernoulli(-z)  # flux J = cr u_right - cl u_left
        cl = (d / h) * _bernoulli(z)
        left = np.take(idx, np.arange(problem.n - 1), axis=axis).ravel()
        right = np.take(idx, np.arange(1, problem.n), axis=axis).ravel()
        if isinstance(problem.drift, GradientPlusFlux):
            sl, sr = _skew_coefficients(problem, axis)
            cr, cl = cr - sr, cl + sl
        cr, cl = cr.ravel() / h, cl.ravel() / h
        rows += [left, left, right, right]
        cols += [right, left, right, left]
        vals += [cr, -cl, -cr, cl]
    return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))


def flux_residual(problem):
    """``||div(e^{-V} D F)||_inf`` at the grid nodes (exact derivatives)."""
    from .calculus import _as_function

    drift = problem.drift
    if not isinstance(drift, GradientPlusFlux):
        return 0.0
    pts = problem.points().reshape(-1, problem.dim) if problem.dim > 1 else problem.points()
    V = _as_function(drift.V)
    diff = problem.diffusion
    if isinstance(diff, (SmoothFunction, str)):
        dfield = _as_function(diff)
    else:
        dfield = None
        dm = np.eye(problem.dim) * float(diff) if np.ndim(diff) == 0 else np.asarray(diff, dtype=float)
    w = jexp(-V.jet(pts, 1, problem.dim))
    Fj = [_as_function(c).jet(pts, 1, problem.dim) for c in drift.F]
    total = 0.0
    for i in range(problem.dim):
        if dfield is not None:
            comp = dfield.jet(pts, 1, problem.dim) * Fj[i]
        else:
            comp = sum(float(dm[i, j]) * Fj[j] for j in range(problem.dim))
        total = total + (w * comp).diff(i).value
    return float(np.max(np.abs(total)))


# ---------------------------------------------------------------------------
# solutions


@dataclass
class FPSolution:
    problem: FPProblem
    times: np.ndarray
    densities: np.ndarray
    mass: np.ndarray
    entropies: dict
    u_inf: np.ndarray
    stationary_rule: str
    min_density: float
    notes: list = field(default_factory=list)

    def moments(self, axis=0):
        """Mean and variance of coordinate ``axis`` at every saved time."""
        pts = self.problem.points()
        x = pts if self.problem.dim == 1 else pts[..., axis]
        w = self.problem.cell_volume
        m1 = np.array([np.sum(u * x) * w for u in self.densities])
        m2 = np.array([np.sum(u * x**2) * w for u in self.densities])
        return m1, m2 - m1**2

    def traces_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = sorted(self.entropies)
        w.writerow(["t", "mass"] + [f"ent[{k}]" for k in names])
        for i, t in enumerate(self.times):
            w.writerow([repr(float(t)), repr(float(self.mass[i]))] + [repr(float(self.entropies[k][i])) for k in names])
        return buf.getvalue()

    def snapshot_csv(self, i):
        buf = io.StringIO()
        np.savetxt(buf, np.atleast_2d(self.densities[i]), delimiter=",", fmt="%.17g")
        return buf.getvalue()


def _phi(phi):
    return phi if isinstance(phi, PhiFunction) else catalog(phi)


def grid_entropy(problem, u, u_inf, phi):
    """``Ent^Phi_{u_inf}(u/u_inf)`` on the grid, in Bregman form."""
    phi = _phi(phi)
    w = problem.cell_volume
    m = u_inf * w
    if phi.name == "log":
        # u log(u/u_inf) with 0 log 0 = 0; tiny negative roundoff is zeroed
        if np.any(u < -1e-12):
            raise DomainError(f"density is negative ({u.min():.3e}); entropy undefined")
        up = np.clip(u, 0.0, None)
        mass = up.sum() * w
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(up > 0, up * (np.log(up) - np.log(u_inf)), 0.0)
        return float(terms.sum() * w - mass * np.log(mass))
    g = u / u_inf
    gbar = float(np.sum(m * g))
    integrand = phi.evaluate(g) - phi.value(np.asarray(gbar)) - phi.derivative(gbar, 1) * (g - gbar)
    return float(np.sum(m * integrand))


def entropy_dissipation(problem, u, u_inf, phi):
    """``mu(Phi''(g) Gamma(g))`` with ``g = u/u_inf``, ``mu = u_inf``, by centred differences."""
    phi = _phi(phi)
    g = u / u_inf
    grads = np.gradient(g, *problem.spacing) if problem.dim > 1 else [np.gradient(g, problem.spacing[0])]
    total = np.zeros_like(g)
    for axis, gr in enumerate(grads):
        pts = problem.points()
        d = _diffusion_on_faces(problem, axis, pts)
        total = total + d * gr**2
    return float(np.sum(u_inf * phi.second(g) * total) * problem.cell_volume)


def stationary_state(problem, tol=1e-10, max_steps=10_000, dt=None):
    """Equilibrium density on the grid and the rule that produced it.

    Gradient and gradient-plus-flux drifts give normalised ``e^{-V}``.  Raw
    drift is marched with implicit Euler until ``||A u||_inf <= tol``.
    """
    drift = problem.drift
    if isinstance(drift, (Gradient, GradientPlusFlux)):
        logu = -np.broadcast_to(_expr(drift.V)(problem.points(), problem.dim), problem.shape).astype(float)
        logz = logsumexp(logu) + np.log(problem.cell_volume)
        return np.exp(logu - logz), "exp(-V)"
    A = assemble(problem)
    N = A.shape[0]
    dt = 1.0 if dt is None else dt
    lu = splu(sp.identity(N, format="csc") - dt * A)
    u = problem.initial_density().ravel()
    res = np.inf
    for _ in range(max_steps):
        u = lu.solve(u)
        res = float(np.max(np.abs(A @ u)))
        if res <= tol:
            u = u / (u.sum() * problem.cell_volume)
            return u.reshape(problem.shape), "long-run"
    raise ConvergenceError(f"long-run state did not settle: ||du/dt||_inf = {res:.3e} after {max_steps} steps", res)


def solve_fp(problem, phis=("square", "log"), mass_tol=1e-6):
    """March the problem to its horizon; densities are saved every ``save_every`` steps."""
    u = problem.initial_density().ravel()
    A = assemble(problem)
    N = A.shape[0]
    eye = sp.identity(N, format="csc")
    th, dt = problem.theta, problem.dt
    lhs = splu((eye - th * dt * A).tocsc())
    rhs = (eye + (1.0 - th) * dt * A).tocsr()
    # implicit Euler half steps share the factorisation when theta = 1/2
    half = lhs if th == 0.5 else splu((eye - 0.5 * dt * A).tocsc())
    u_inf, rule = stationary_state(problem)
    phis = [_phi(p) for p in phis]
    nsteps = int(round(problem.horizon / dt))
    w = problem.cell_volume
    mass0 = u.sum() * w
    times, dens, mass = [0.0], [u.copy()], [mass0]
    umin = float(u.min())
    for k in range(1, nsteps + 1):
        if k <= problem.startup_steps:
            u = half.solve(half.solve(u))
        else:
            u = lhs.solve(rhs @ u)
        umin = min(umin, float(u.min()))
        if k % problem.save_every == 0 or k == nsteps:
            m = u.sum() * w
            if abs(m - mass0) > mass_tol:
                raise StabilityError(f"mass drifted by {m - mass0:.3e} at t={k * dt:.4g}; reduce the step size")
            times.append(k * dt)
            dens.append(u.copy())
            mass.append(m)
    dens = np.array(dens).reshape((len(times),) + problem.shape)
    ent = {p.name: np.array([grid_entropy(problem, v, u_inf, p) for v in dens]) for p in phis}
    notes = [] if rule == "exp(-V)" else ["stationary state is a long-run estimate; decay fits are lower-confidence"]
    return FPSolution(problem, np.array(times), dens, np.array(mass), ent, u_inf, rule, umin, notes)


# ---------------------------------------------------------------------------
# decay


@dataclass
class DecayFit:
    slope: float
    intercept: float
    r2: float
    window: tuple
    lower_confidence: bool

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "window": list(self.window), "lower_confidence": self.lower_confidence}


def decay_rate(solution, phi, window=None, floor=1e-14):
    """Least-squares slope of ``log Ent^Phi(u_t/u_inf)`` against ``t`` on a window."""
    name = _phi(phi).name
    if name not in solution.entropies:
        raise ArgumentError(f"entropy trace for {name!r} was not recorded")
    t, e = solution.times, solution.entropies[name]
    lo, hi = window if window is not None else (t[0], t[-1])
    sel = (t >= lo) & (t <= hi)
    if sel.sum() < 2:
        raise WindowError(f"fit window [{lo}, {hi}] holds fewer than two samples", None)
    if np.any(e[sel] < floor):
        k = np.flatnonzero(sel & (e < floor))[0]
        raise WindowError(f"entropy {e[k]:.3e} below {floor} at t={t[k]:.4g} inside the fit window", t[k])
    y = np.log(e[sel])
    A = np.vstack([t[sel], np.ones(sel.sum())]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    fit = A @ np.array([slope, icpt])
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum((y - fit) ** 2) / ss if ss > 0 else 1.0
    return DecayFit(float(slope), float(icpt), float(r2), (float(lo), float(hi)), solution.stationary_rule != "exp(-V)")


# ---------------------------------------------------------------------------
# curvature zero: heat flow on a periodic box


@dataclass
class PeriodicHeat:
    """Heat flow ``df/dt = f''`` on the circle of the given length, solved by FFT.

    The invariant measure is the normalised Lebesgue measure.
    """

    f0: object
    length: float = 20.0
    n: int = 512

    @property
    def x(self):
        return -0.5 * self.length + self.length * np.arange(self.n) / self.n

    @property
    def k(self):
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.length / self.n)

    def initial(self):
        return np.broadcast_to(_expr(self.f0)(self.x, 1), (self.n,)).astype(float)

    def solve(self, times):
        fhat = np.fft.fft(self.initial())
        k = self.k
        times = np.asarray(times, dtype=float)
        vals = np.array([np.fft.ifft(fhat * np.exp(-(k**2) * t)).real for t in times])
        ders = np.array([np.fft.ifft(1j * k * fhat * np.exp(-(k**2) * t)).real for t in times])
        return times, vals, ders


@dataclass
class AlgebraicDecayReport:
    p: float
    alpha: float
    times: np.ndarray
    production: np.ndarray
    bound: np.ndarray
    rtol: float

    @property
    def violated(self):
        return bool(np.any(self.production > self.bound * (1.0 + self.rtol)))

    @property
    def worst_ratio(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(self.bound > 0, self.production / self.bound, 0.0)
        return float(np.max(r))

    def to_dict(self):
        return {"p": self.p, "alpha": self.alpha, "violated": self.violated, "worst_ratio": self.worst_ratio,
                "t": self.times.tolist(), "production": self.production.tolist(), "bound": self.bound.tolist()}


def algebraic_decay_check(heat, p, times=None, rtol=1e-6):
    """Compare ``|H'(t)|`` with ``|H'(0)|/(1 + alpha t)`` for ``H(t) = Ent^{Phi_p}(P_t f)``.

    ``alpha = ((2-p)/p) |H'(0)| / H(0)``.
    """
    if not 1 < p < 2:
        raise ArgumentError("needs p in (1, 2)")
    times = np.linspace(0.0, 5.0, 101) if times is None else np.asarray(times, dtype=float)
    if times[0] != 0.0:
        times = np.concatenate([[0.0], times])
    _, vals, ders = heat.solve(times)
    if np.any(vals <= 0):
        raise DomainError("Phi_p entropy needs positive data")
    prod = np.mean(vals ** (p - 2.0) * ders**2, axis=1)
    m = np.mean(vals[0])
    ent0 = (np.mean(vals[0] ** p) - m**p) / (p * (p - 1.0))
    alpha = 0.0 if ent0 <= 0 or prod[0] == 0 else (2.0 - p) / p * prod[0] / ent0
    bound = prod[0] / (1.0 + alpha * times)
    return AlgebraicDecayReport(p, float(alpha), times, prod, bound, rtol)


# ---------------------------------------------------------------------------
# integration by parts


@dataclass
class IdentityResidual:
    outer: float
    middle: float
    energy: float

    @property
    def residual(self):
        return max(self.outer, self.middle)

    def to_dict(self):
        return {"outer": self.outer, "middle": self.middle, "energy": self.energy, "residual": self.residual}


def entropy_production_identity(mu, L, phi, f):
    """Residuals of ``mu(L Phi'(f) f) = mu(L f Phi'(f)) = -mu(Phi''(f) Gamma(f))``."""
    from .calculus import _as_function
    from .measures import integrate

    phi = _phi(phi)
    f = _as_function(f)
    pts, _ = L.check_points(mu.nodes)
    coeffs = L.coefficients(pts, 2)
    F = f.jet(pts, 2, L.dim)
    phi.check_range(F.value)
    dphi = phi.compose(F, 1)
    energy = integrate(mu, phi.second(F.value) * L.gamma_jet(F, F, coeffs).value)
    outer = integrate(mu, L.apply_jet(dphi, coeffs).value * F.value)
    middle = integrate(mu, L.apply_jet(F, coeffs).value * dphi.value)
    return IdentityResidual(abs(outer + energy), abs(middle + energy), energy)
