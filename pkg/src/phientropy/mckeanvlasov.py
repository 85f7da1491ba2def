"""McKean-Vlasov equation ``du/dt = u'' + (u (V + W * u)')'`` in one dimension.

The PDE is solved with the finite-volume scheme of :mod:`fokkerplanck`, the
convolution drift being re-evaluated by quadrature at every step.  The
particle system ``dX_i = sqrt(2) dB_i - (V'(X_i) + mean_j W'(X_i - X_j)) dt``
is simulated by Euler-Maruyama.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .calculus import _as_function
from .errors import ArgumentError, DomainError, StabilityError
from .families import test_family
from .fokkerplanck import _bernoulli
from .inequalities import InequalityReport, forward_factor
from .jets import X, constant, parse_expression
from .phi import PhiFunction, catalog
from .semigroups import InhomogeneousSemigroup

__all__ = [
    "SMOOTHING",
    "interaction",
    "convexity_audit",
    "MKVProblem",
    "MKVSolution",
    "solve_mkv_pde",
    "ParticleTrajectory",
    "simulate_particles",
    "PropagationSchedule",
    "PropagationReport",
    "check_propagation",
    "inhomogeneous_commutation",
]

SMOOTHING = 1e-6


def interaction(kind="cubic", strength=1.0, eps=SMOOTHING):
    """Named interaction potentials ``W``.

    ``cubic``: ``(x^2 + eps^2)^{3/2} / 3``, a smoothed convex ``|x|^3/3``;
    ``cubic_literal``: ``x^3/3`` (not convex); ``quadratic``:
    ``strength x^2 / 2``; ``none``: zero.
    """
    if kind == "cubic":
        return (X**2 + eps**2) ** 1.5 / 3.0
    if kind == "cubic_literal":
        return X**3 / 3.0
    if kind == "quadratic":
        return 0.5 * strength * X**2
    if kind == "none":
        return constant(0.0)
    raise ArgumentError(f"unknown interaction kind {kind!r}")


def convexity_audit(V, W, box=(-12.0, 12.0), spacing=0.01, tol=1e-10):
    """Lower bound ``rho`` of ``V''`` and the convexity verdict for ``W``."""
    x = np.arange(box[0], box[1] + 0.5 * spacing, spacing)
    v2 = np.broadcast_to(_as_function(V).jet(x, 2, 1).d2, x.shape)
    w2 = np.broadcast_to(_as_function(W).jet(x, 2, 1).d2, x.shape)
    k = int(np.argmin(w2))
    return {"rho": float(np.min(v2)), "rho_witness": float(x[np.argmin(v2)]),
            "w_convex": bool(w2[k] >= -tol), "w_min_second": float(w2[k]), "w_witness": float(x[k]),
            "box": list(box), "spacing": spacing}


@dataclass
class MKVProblem:
    """One-dimensional McKean-Vlasov problem; ``W_kind`` names ``W`` from
    :func:`interaction` (``custom`` means ``W`` is given explicitly)."""

    V: object = "x**2/2"
    W_kind: str = "cubic"
    W: object = None
    u0: object = "exp(-(x-1)**2/(2*0.25))/sqrt(2*pi*0.25)"
    box: tuple = (-8.0, 8.0)
    n: int = 800
    horizon: float = 4.0
    dt: float = 1e-2
    save_every: int = 10
    particles: int = 10_000
    particle_dt: float = 1e-3
    sigma: float = float(np.sqrt(2.0))

    def __post_init__(self):
        if isinstance(self.V, str):
            self.V = parse_expression(self.V)
        if self.W is None:
            self.W = interaction(self.W_kind)
        elif isinstance(self.W, str):
            self.W = parse_expression(self.W)
            self.W_kind = "custom"
        if isinstance(self.u0, str):
            self.u0 = parse_expression(self.u0)
        if self.n < 4 or self.dt <= 0 or self.particle_dt <= 0:
            raise ArgumentError("need n >= 4 and positive steps")

    @property
    def h(self):
        return (self.box[1] - self.box[0]) / self.n

    @property
    def x(self):
        return self.box[0] + (np.arange(self.n) + 0.5) * self.h

    def audit(self):
        return convexity_audit(self.V, self.W)

    def initial_density(self):
        u = np.broadcast_to(self.u0(self.x, 1), (self.n,)).astype(float)
        if np.any(u < 0):
            raise DomainError("initial density must be nonnegative")
        return u / (u.sum() * self.h)

    def to_dict(self):
        return {"V": self.V.to_string(), "W_kind": self.W_kind,
                "W": self.W.to_string() if self.W_kind == "custom" else None,
                "u0": self.u0.to_string(), "box": list(self.box), "n": self.n, "horizon": self.horizon,
                "dt": self.dt, "save_every": self.save_every, "particles": self.particles,
                "particle_dt": self.particle_dt, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["box"] = tuple(d.get("box", (-8.0, 8.0)))
        return cls(**d)


# ---------------------------------------------------------------------------
# PDE


@dataclass
class MKVSolution:
    problem: MKVProblem
    times: np.ndarray
    densities: np.ndarray
    mass: np.ndarray
    drift: np.ndarray  # a(x, t) at cell centres, one row per saved time
    notes: list = field(default_factory=list)

    @property
    def x(self):
        return self.problem.x

    def moments(self):
        h = self.problem.h
        m1 = self.densities @ self.x * h
        m2 = self.densities @ self.x**2 * h
        return m1, m2 - m1**2

    def density_at(self, t):
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9:
            raise ArgumentError(f"time {t} was not saved")
        return self.densities[i]

    def drift_function(self):
        """``a(x, tau)``, linear in ``tau`` between saved times and in ``x`` on the grid."""
        times, a, x = self.times, self.drift, self.x

        def fn(y, tau):
            tau = min(max(tau, times[0]), times[-1])
            k = int(np.clip(np.searchsorted(times, tau) - 1, 0, len(times) - 2))
            w = (tau - times[k]) / (times[k + 1] - times[k])
            row = (1.0 - w) * a[k] + w * a[k + 1]
            return np.interp(y, x, row)

        return fn

    def traces_csv(self):
        m1, var = self.moments()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "mass", "mean", "variance"])
        for row in zip(self.times, self.mass, m1, var):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def _force_matrix(problem, points):
    """``K[i, j] = W'(points_i - x_j) h`` so that ``(W' * u)(points) = K u``."""
    d = points[:, None] - problem.x[None, :]
    wp = np.asarray(problem.W.jet(d.ravel(), 1, 1).d1).reshape(d.shape) if d.size else d
    return wp * problem.h


def _operator(problem, face_drift):
    n, h = problem.n, problem.h
    z = face_drift * h
    cr = _bernoulli(-z) / h**2
    cl = _bernoulli(z) / h**2
    i = np.arange(n - 1)
    rows = np.concatenate([i, i, i + 1, i + 1])
    cols = np.concatenate([i + 1, i, i + 1, i])
    vals = np.concatenate([cr, -cl, -cr, cl])
    return sp.csc_matrix((vals, (rows, cols)), shape=(n, n))


def solve_mkv_pde(problem, mass_tol=1e-7, startup_steps=2):
    """March the nonlinear equation; the drift is re-evaluated every step.

    Each step is a Crank-Nicolson step with the drift frozen at the
    predicted half-step density (predictor-corrector).
    """
    x, h = problem.x, problem.h
    faces = 0.5 * (x[1:] + x[:-1])
    Vc = np.asarray(np.broadcast_to(problem.V(x, 1), x.shape), dtype=float)
    dV_faces = np.diff(Vc) / h
    dV_cells = np.broadcast_to(problem.V.jet(x, 1, 1).d1, x.shape)
    Kf = _force_matrix(problem, faces)
    Kc = _force_matrix(problem, x)
    interacting = problem.W_kind != "none"
    eye = sp.identity(problem.n, format="csc")
    u = problem.initial_density()
    dt = problem.dt
    nsteps = int(round(problem.horizon / dt))

    def face_drift(v):
        return dV_faces + (Kf @ v if interacting else 0.0)

    def cell_drift(v):
        return dV_cells + (Kc @ v if interacting else 0.0)

    mass0 = u.sum() * h
    times, dens, mass, drift = [0.0], [u.copy()], [mass0], [cell_drift(u)]
    lu_static = None
    for k in range(1, nsteps + 1):
        if interacting:
            A = _operator(problem, face_drift(u))
            lu = splu((eye - 0.5 * dt * A).tocsc())
            pred = lu.solve(u + 0.5 * dt * (A @ u)) if k > startup_steps else lu.solve(lu.solve(u))
            A = _operator(problem, face_drift(0.5 * (u + pred)))
            lu = splu((eye - 0.5 * dt * A).tocsc())
        else:
            if lu_static is None:
                A = _operator(problem, face_drift(u))
                lu_static = splu((eye - 0.5 * dt * A).tocsc())
            lu = lu_static
        u = lu.solve(lu.solve(u)) if k <= startup_steps else lu.solve(u + 0.5 * dt * (A @ u))
        if k % problem.save_every == 0 or k == nsteps:
            m = u.sum() * h
            if abs(m - mass0) > mass_tol:
                raise StabilityError(f"mass drifted by {m - mass0:.3e} at t={k * dt:.4g}; reduce the step size")
            times.append(k * dt)
            dens.append(u.copy())
            mass.append(m)
            drift.append(cell_drift(u))
    return MKVSolution(problem, np.array(times), np.array(dens), np.array(mass), np.array(drift))


# ---------------------------------------------------------------------------
# particles


def _mean_force(problem, xs):
    """``mean_j W'(x_i - x_j)`` for every particle."""
    kind = problem.W_kind
    n = xs.size
    if kind == "none":
        return np.zeros_like(xs)
    if kind == "quadratic":
        c = float(problem.W.jet(np.array([1.0]), 2, 1).d2[0])
        return c * (xs - xs.mean())
    if kind == "cubic":
        # W'(z) = z |z| up to O(eps^2); prefix sums over the sorted sample
        order = np.argsort(xs, kind="stable")
        s = xs[order]
        c1 = np.concatenate([[0.0], np.cumsum(s)])
        c2 = np.concatenate([[0.0], np.cumsum(s * s)])
        i = np.arange(n)
        below = i * s**2 - 2.0 * s * c1[:-1] + c2[:-1]
        na = n - 1 - i
        above = na * s**2 - 2.0 * s * (c1[-1] - c1[1:]) + (c2[-1] - c2[1:])
        out = np.empty_like(xs)
        out[order] = (below - above) / n
        return out
    total = np.zeros_like(xs)
    for start in range(0, n, 512):
        d = xs[start:start + 512, None] - xs[None, :]
        total[start:start + 512] = np.asarray(problem.W.jet(d.ravel(), 1, 1).d1).reshape(d.shape).sum(axis=1)
    return total / n


@dataclass
class ParticleTrajectory:
    times: np.ndarray
    positions: np.ndarray  # (len(times), N)
    seed: int

    def moments(self):
        m1 = self.positions.mean(axis=1)
        var = self.positions.var(axis=1, ddof=1)
        return m1, var

    def standard_errors(self):
        """Monte Carlo standard errors of the sample mean and variance."""
        N = self.positions.shape[1]
        c = self.positions - self.positions.mean(axis=1, keepdims=True)
        m2 = np.mean(c**2, axis=1)
        m4 = np.mean(c**4, axis=1)
        return np.sqrt(m2 / N), np.sqrt(np.maximum(m4 - m2**2, 0.0) / N)

    def histogram_csv(self, i, bins=100, box=None):
        counts, edges = np.histogram(self.positions[i], bins=bins, range=box, density=True)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["left", "right", "density"])
        for a, b, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([repr(float(a)), repr(float(b)), repr(float(c))])
        return buf.getvalue()


def simulate_particles(problem, seed=0, n_particles=None, times=None, x0=None, diffusion=True):
    """Euler-Maruyama for the mean-field particle system.

    Particle ``i`` draws its initial position and increments from its own
    stream, spawned from ``seed``.  ``x0`` overrides the initial positions;
    ``diffusion=False`` drops the noise.
    """
    N = problem.particles if n_particles is None else int(n_particles)
    if N < 2 and x0 is None:
        raise ArgumentError("need at least two particles")
    dt = problem.particle_dt
    nsteps = int(round(problem.horizon / dt))
    times = np.linspace(0.0, problem.horizon, 9) if times is None else np.asarray(times, dtype=float)
    save = {int(round(t / dt)): t for t in times}
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(N)]
    if x0 is None:
        xs = np.array([_sample_initial(problem, rng) for rng in streams])
    else:
        xs = np.asarray(x0, dtype=float).copy()
        N = xs.size
    noise = np.array([rng.standard_normal(nsteps) for rng in streams[:N]]).T if diffusion else None
    limit = 10.0 * max(abs(problem.box[0]), abs(problem.box[1]))
    dV = problem.V.jet
    out_t, out_x = [], []
    if 0 in save:
        out_t.append(0.0)
        out_x.append(xs.copy())
    scale = problem.sigma * np.sqrt(dt)
    for k in range(1, nsteps + 1):
        a = np.broadcast_to(dV(xs, 1, 1).d1, xs.shape) + _mean_force(problem, xs)
        xs = xs - a * dt
        if diffusion:
            xs = xs + scale * noise[k - 1]
        if not np.all(np.abs(xs) < limit):
            raise StabilityError(f"a particle left the region |x| < {limit} at step {k}; reduce the step size")
        if k in save:
            out_t.append(save[k])
            out_x.append(xs.copy())
    return ParticleTrajectory(np.array(out_t), np.array(out_x), seed)


def _sample_initial(problem, rng):
    """Draw from the gridded initial density by inverse transform."""
    cdf = getattr(problem, "_cdf_cache", None)
    if cdf is None:
        u = problem.initial_density()
        edges = problem.box[0] + np.arange(problem.n + 1) * problem.h
        c = np.concatenate([[0.0], np.cumsum(u) * problem.h])
        cdf = (edges, c / c[-1])
        problem._cdf_cache = cdf
    edges, c = cdf
    return float(np.interp(rng.random(), c, edges))


# ---------------------------------------------------------------------------
# propagation of Phi-entropy constants


@dataclass(frozen=True)
class PropagationSchedule:
    c0: float
    rho: float

    def __call__(self, t):
        return self.c0 * np.exp(-2.0 * self.rho * t) + forward_factor(self.rho, t)

    def to_dict(self):
        return {"c0": self.c0, "rho": self.rho}


@dataclass
class PropagationReport:
    precondition: list
    reports: list
    schedule: PropagationSchedule
    audit: dict

    @property
    def precondition_holds(self):
        return not any(r.violated for r in self.precondition)

    @property
    def worst(self):
        return min(self.reports, key=lambda r: r.slack)

    @property
    def violated(self):
        return any(r.violated for r in self.reports)

    def to_dict(self):
        return {"schedule": self.schedule.to_dict(), "audit": self.audit,
                "precondition_holds": self.precondition_holds, "violated": self.violated,
                "worst": self.worst.to_dict(),
                "precondition": [r.to_dict() for r in self.precondition],
                "reports": [r.to_dict() for r in self.reports]}


def _density_check(x, h, u, phi, f, c, t, label, atol):
    m = u * h
    F = f.jet(x, 1, 1)
    v = np.broadcast_to(F.value, x.shape)
    phi.check_range(v)
    mean = float(np.sum(m * v))
    ent = float(np.sum(m * (phi.value(v) - phi.value(np.asarray(mean)) - phi.derivative(mean, 1) * (v - mean))))
    energy = float(np.sum(m * phi.second(v) * np.broadcast_to(F.d1, x.shape) ** 2))
    return InequalityReport(f"propagation[{phi.name}]", ent, c * energy, "forward", t, None, None, atol, 0.0,
                            details={"member": label, "c": c, "energy": energy})


def check_propagation(problem, phi, schedule=None, family=None, times=(0.5, 1.0, 2.0, 4.0), solution=None, atol=1e-6):
    """``Ent^Phi_{u_t}(f) <= c(t) u_t(Phi''(f) f'^2)`` along the PDE solution.

    The schedule defaults to ``c0 = Var(u0)/2`` and the audited ``rho``.
    """
    phi = phi if isinstance(phi, PhiFunction) else catalog(phi)
    audit = problem.audit()
    if schedule is None:
        u0 = problem.initial_density()
        m = np.sum(u0 * problem.x) * problem.h
        var = np.sum(u0 * (problem.x - m) ** 2) * problem.h
        schedule = PropagationSchedule(0.5 * var, audit["rho"])
    if family is None:
        family = test_family(positive=phi.domain.lo >= 0)
    sol = solve_mkv_pde(problem) if solution is None else solution
    x, h = problem.x, problem.h
    pre = [_density_check(x, h, sol.densities[0], phi, _as_function(f), schedule.c0, 0.0, lab, atol) for lab, f in family]
    reports = []
    for t in times:
        u = sol.density_at(t)
        c = float(schedule(t))
        reports += [_density_check(x, h, u, phi, _as_function(f), c, t, lab, atol) for lab, f in family]
    return PropagationReport(pre, reports, schedule, audit)


def inhomogeneous_commutation(solution, f, s, t, x, rho=None, phi=None, n=2048, dt=1e-3, atol=1e-4):
    """``Gamma(P_{s,t} f)(x) <= e^{-2 rho (t-s)} (P_{s,t} sqrt(Gamma f))^2(x)`` along the MKV drift.

    Also records the local Phi-entropy form in ``details``.
    """
    prob = solution.problem
    rho = prob.audit()["rho"] if rho is None else rho
    f = _as_function(f)
    P = InhomogeneousSemigroup(solution.drift_function(), 1.0, prob.box, n, dt)
    lhs = float(P.gradient(f, s, t, x).reshape(-1)[0] ** 2)
    absd = lambda y: np.abs(np.broadcast_to(f.jet(np.atleast_1d(y), 1, 1).d1, np.shape(np.atleast_1d(y))))
    rhs = float(np.exp(-2.0 * rho * (t - s)) * np.asarray(P.apply(absd, s, t, x)).reshape(-1)[0] ** 2)
    rep = InequalityReport("inhomogeneous_commutation", lhs, rhs, "forward", t, x, rho, atol, 0.0,
                           details={"s": s})
    if phi is not None and t > s:
        phi = phi if isinstance(phi, PhiFunction) else catalog(phi)
        m = float(np.asarray(P.apply(f, s, t, x)).reshape(-1)[0])
        phi.check_range(m)

        def bregman(y):
            v = np.asarray(f(y, 1), dtype=float)
            return phi.evaluate(v) - phi.value(np.asarray(m)) - phi.derivative(m, 1) * (v - m)

        def energy(y):
            J = f.jet(np.atleast_1d(y), 1, 1)
            return phi.second(np.broadcast_to(J.value, np.shape(y))) * np.broadcast_to(J.d1, np.shape(y)) ** 2

        ent = float(np.asarray(P.apply(bregman, s, t, x)).reshape(-1)[0])
        bound = forward_factor(rho, t - s) * float(np.asarray(P.apply(energy, s, t, x)).reshape(-1)[0])
        rep.details["local_phi"] = {"phi": phi.name, "lhs": ent, "rhs": bound, "slack": bound - ent,
                                    "violated": bool(bound - ent < -atol)}
    return rep
