"""Checkers for local, reverse local and ergodic Phi-entropy inequalities.

Every checker returns an :class:`InequalityReport` with both sides so the
verdict can be re-audited offline.  The convention is always ``lhs <= rhs``;
for reverse (lower-bound) inequalities the gradient term is the ``lhs``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .calculus import _as_function, _gamma2_definition, cd_rho_estimate, gamma, gamma2
from .errors import ArgumentError, DomainError, WindowError
from .families import test_family
from .jets import X, exp
from .measures import build_gibbs, integrate
from .phi import catalog, require_admissible

__all__ = [
    "FORWARD",
    "REVERSE",
    "InequalityReport",
    "forward_factor",
    "reverse_factor",
    "local_poincare",
    "local_lsi",
    "local_phi",
    "refined_phi_p",
    "ergodic_phi",
    "phi_entropy_bregman",
    "MapResult",
    "beckner_map",
    "refined_map",
    "CriterionReport",
    "integral_criterion",
    "NonAdmissibleParams",
    "xi",
    "nonadmissible_local",
    "reverse_window",
    "counterexample_p_gt_2",
    "counterexample_p_gt_2_gamma",
    "counterexample_p_lt_1",
    "violating_lambda",
    "phi0_inequality",
    "commutation",
    "lower_convex_hull",
    "perturbed_lsi_constant",
    "HelfferReport",
    "helffer_counterexample",
]

FORWARD = "forward"
REVERSE = "reverse"
ATOL = 1e-8
RTOL = 1e-8


@dataclass
class InequalityReport:
    name: str
    lhs: float
    rhs: float
    direction: str = FORWARD
    t: float | None = None
    x: object = None
    rho: float | None = None
    atol: float = ATOL
    rtol: float = RTOL
    details: dict = field(default_factory=dict)

    @property
    def slack(self):
        return self.rhs - self.lhs

    @property
    def tolerance(self):
        return self.atol + self.rtol * max(abs(self.lhs), abs(self.rhs))

    @property
    def violated(self):
        return bool(self.slack < -self.tolerance)

    def to_dict(self):
        d = asdict(self)
        d["x"] = _jsonable(self.x)
        d["details"] = {k: _jsonable(v) for k, v in self.details.items()}
        d.update(slack=self.slack, tolerance=self.tolerance, violated=self.violated)
        return d

    def to_json(self):
        return json.dumps(self.to_dict())

    CSV_FIELDS = ("name", "direction", "t", "x", "rho", "lhs", "rhs", "slack", "tolerance", "violated")

    def csv_row(self):
        d = self.to_dict()
        return [d[k] for k in self.CSV_FIELDS]

    @classmethod
    def to_csv(cls, reports):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cls.CSV_FIELDS)
        for r in reports:
            w.writerow(r.csv_row())
        return buf.getvalue()


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, (tuple, list)):
        return [_jsonable(u) for u in v]
    return v


def forward_factor(rho, t):
    """``(1 - e^{-2 rho t}) / (2 rho)``, equal to ``t`` at ``rho = 0``."""
    return t if rho == 0 else -np.expm1(-2.0 * rho * t) / (2.0 * rho)


def reverse_factor(rho, t):
    """``(e^{2 rho t} - 1) / (2 rho)``, equal to ``t`` at ``rho = 0``."""
    return t if rho == 0 else np.expm1(2.0 * rho * t) / (2.0 * rho)


def _check_direction(direction):
    if direction not in (FORWARD, REVERSE):
        raise ArgumentError(f"direction must be {FORWARD!r} or {REVERSE!r}, got {direction!r}")


def _resolve_rho(P, rho):
    if rho is None:
        return cd_rho_estimate(P.generator).rho_star
    return float(rho)


def _at(P, h, t, x):
    return float(np.asarray(P.apply(h, t, x)).reshape(-1)[0])


def _gamma_of_gradient(L, grad, x):
    g = np.asarray(grad, dtype=float).reshape(L.dim)
    if L.is_constant:
        return float(g @ L.diffusion.matrix @ g)
    pts = np.asarray(x, dtype=float).reshape(1, -1) if L.dim > 1 else np.atleast_1d(float(x))
    return float(L.diffusion.d(pts, L.dim).reshape(-1)[0] * (g @ g))


def _gamma_Pt(P, f, t, x):
    """``Gamma(P_t f)(x)`` from the evaluator gradient."""
    return _gamma_of_gradient(P.generator, np.asarray(P.gradient(f, t, x))[..., 0], x)


def _positive(fn, name="f"):
    def checked(y):
        v = np.asarray(fn(y), dtype=float)
        if np.any(~(v > 0)):
            k = int(np.argmax(~(v > 0)))
            raise DomainError(f"{name} must be positive, got {v.reshape(-1)[k]} at {np.asarray(y).reshape(v.size, -1)[k]}")
        return v

    return checked


# ---------------------------------------------------------------------------
# local inequalities


def local_poincare(P, f, t, x, rho=None, direction=FORWARD):
    """Local (or reverse local) Poincare inequality at ``(t, x)``."""
    _check_direction(direction)
    if t <= 0:
        raise ArgumentError("t must be positive")
    rho = _resolve_rho(P, rho)
    f = _as_function(f)
    L = P.generator
    m = _at(P, f, t, x)
    var = _at(P, lambda y: (f(y, L.dim) - m) ** 2, t, x)
    if direction == FORWARD:
        rhs = 2.0 * forward_factor(rho, t) * _at(P, lambda y: gamma(L, f, y), t, x)
        return InequalityReport("local_poincare", var, rhs, direction, t, x, rho)
    lhs = 2.0 * reverse_factor(rho, t) * _gamma_Pt(P, f, t, x)
    return InequalityReport("local_poincare", lhs, var, direction, t, x, rho)


def _local_entropy(P, phi, f, t, x):
    """``Ent^Phi_{P_t}(f)(x)`` in Bregman form (integrand is nonnegative)."""
    L = P.generator
    m = _at(P, f, t, x)
    phi.check_range(m)
    phim, dphim = phi.value(np.asarray(m)), phi.derivative(m, 1)

    def bregman(y):
        v = np.asarray(f(y, L.dim), dtype=float)
        return phi.evaluate(v) - phim - dphim * (v - m)

    return _at(P, bregman, t, x), m


def local_phi(P, phi, f, t, x, rho=None, direction=FORWARD, check_admissible=True):
    """Local Phi-entropy inequality (forward) or its reverse form."""
    _check_direction(direction)
    if t <= 0:
        raise ArgumentError("t must be positive")
    if check_admissible:
        require_admissible(phi)
    rho = _resolve_rho(P, rho)
    f = _as_function(f)
    L = P.generator
    ent, m = _local_entropy(P, phi, f, t, x)
    if direction == FORWARD:

        def energy(y):
            v = np.asarray(f(y, L.dim), dtype=float)
            return phi.second(v) * gamma(L, f, y)

        rhs = forward_factor(rho, t) * _at(P, energy, t, x)
        return InequalityReport(f"local_phi[{phi.name}]", ent, rhs, direction, t, x, rho)
    lhs = reverse_factor(rho, t) * float(phi.second(m)) * _gamma_Pt(P, f, t, x)
    return InequalityReport(f"local_phi[{phi.name}]", lhs, ent, direction, t, x, rho)


def local_lsi(P, f, t, x, rho=None, direction=FORWARD):
    """Local logarithmic Sobolev inequality, ``Phi = x ln x``."""
    f = _as_function(f)
    pos = _positive(lambda y: f(y, P.dim))
    pos(np.asarray(x, dtype=float).reshape(1, -1) if P.dim > 1 else np.atleast_1d(float(x)))
    rep = local_phi(P, catalog("log"), f, t, x, rho, direction, check_admissible=False)
    rep.name = "local_lsi"
    return rep


def _refined_gap(A, m, p):
    """``A - m^p (A/m^p)^{2/p-1}`` computed without cancellation.

    ``A - m^p`` is supplied indirectly through ``A = m^p (1 + e)``.
    """
    mp = m**p
    e = (A - mp) / mp
    q = 2.0 / p - 1.0
    lr = np.log1p(e)
    return mp * np.exp(q * lr) * np.expm1((1.0 - q) * lr)


def refined_phi_p(P, p, f, t, x, rho=None, direction=FORWARD):
    """Refined local Phi_p inequality for ``p`` in ``(1, 2)``."""
    _check_direction(direction)
    if not 1.0 < p < 2.0:
        raise ArgumentError(f"refined Phi_p inequality needs p in (1, 2), got {p}")
    if t <= 0:
        raise ArgumentError("t must be positive")
    rho = _resolve_rho(P, rho)
    f = _as_function(f)
    L = P.generator
    phi = catalog("power", p=p)
    ent, m = _local_entropy(P, phi, f, t, x)
    A = m**p + p * (p - 1.0) * ent  # P_t(f^p)
    lhs = _refined_gap(A, m, p) / (p - 1.0) ** 2
    details = {"P_t f": m, "P_t f^p": A, "entropy": ent}
    if direction == FORWARD:

        def energy(y):
            v = np.asarray(f(y, L.dim), dtype=float)
            return v ** (p - 2.0) * gamma(L, f, y)

        rhs = 2.0 * forward_factor(rho, t) * _at(P, energy, t, x)
        return InequalityReport("refined_phi_p", lhs, rhs, direction, t, x, rho, details=details)
    pref = (m**p / A) ** (2.0 / p - 1.0)
    low = 2.0 * reverse_factor(rho, t) * pref * m ** (p - 2.0) * _gamma_Pt(P, f, t, x)
    return InequalityReport("refined_phi_p", low, lhs, direction, t, x, rho, details=details)


# ---------------------------------------------------------------------------
# ergodic inequalities


def phi_entropy_bregman(mu, phi, f):
    """``Ent^Phi_mu(f)`` as ``mu(Phi(f) - Phi(m) - Phi'(m)(f - m))``."""
    v = mu.values(f)
    phi.check_range(v)
    m = integrate(mu, v)
    phi.check_range(m)
    integrand = phi.value(v) - phi.value(np.asarray(m)) - phi.derivative(m, 1) * (v - m)
    return integrate(mu, integrand)


def ergodic_phi(mu, L, phi, f, rho=None, C=None):
    """``Ent^Phi_mu(f) <= C mu(Phi''(f) Gamma(f))`` with ``C = 1/(2 rho)`` by default."""
    if (rho is None) == (C is None):
        raise ArgumentError("give exactly one of rho and C")
    if C is None:
        if rho <= 0:
            raise ArgumentError("ergodic inequality needs rho > 0")
        C = 1.0 / (2.0 * rho)
    f = _as_function(f)
    ent = phi_entropy_bregman(mu, phi, f)
    v = mu.values(f)
    energy = integrate(mu, phi.second(v) * gamma(L, f, mu.nodes))
    return InequalityReport(f"ergodic_phi[{phi.name}]", ent, C * energy, FORWARD, None, None, rho,
                            details={"C": C, "energy": energy})


def phi0_inequality(mu, L, f, rho):
    """``log mu(f) - mu(log f) <= mu(Gamma f / f^2)/(2 rho) + ||Gamma(f)^2/f^4||_inf / (2 rho^2)``.

    The sup-norm is the maximum over the nodes of ``mu``.
    """
    if rho <= 0:
        raise ArgumentError("needs rho > 0")
    f = _as_function(f)
    v = mu.values(f)
    if np.any(~(v > 0)):
        k = int(np.argmax(~(v > 0)))
        raise DomainError(f"f must be positive, got {v[k]} at node {mu.node(k)}")
    lhs = np.log(integrate(mu, v)) - integrate(mu, np.log(v))
    r = gamma(L, f, mu.nodes) / v**2
    rhs = integrate(mu, r) / (2.0 * rho) + float(np.max(r**2)) / (2.0 * rho**2)
    return InequalityReport("phi0_inequality", float(lhs), float(rhs), FORWARD, None, None, rho)


def commutation(P, f, t, x, rho=None, form="plain"):
    """``Gamma(P_t f) <= e^{-2 rho t} P_t Gamma(f)`` or its square-root form."""
    rho = _resolve_rho(P, rho)
    f = _as_function(f)
    L = P.generator
    lhs = _gamma_Pt(P, f, t, x)
    if form == "plain":
        rhs = np.exp(-2.0 * rho * t) * _at(P, lambda y: gamma(L, f, y), t, x)
    elif form == "sqrt":
        rhs = np.exp(-2.0 * rho * t) * _at(P, lambda y: np.sqrt(gamma(L, f, y)), t, x) ** 2
    else:
        raise ArgumentError(f"unknown commutation form {form!r}")
    return InequalityReport(f"commutation[{form}]", lhs, float(rhs), FORWARD, t, x, rho)


# ---------------------------------------------------------------------------
# monotone maps in p


@dataclass
class MapResult:
    name: str
    ps: np.ndarray
    values: np.ndarray
    nonincreasing: bool
    monotone_range: tuple

    def to_dict(self):
        return {"name": self.name, "p": self.ps.tolist(), "values": self.values.tolist(),
                "nonincreasing": self.nonincreasing, "monotone_range": list(self.monotone_range)}

    def to_gnuplot(self):
        return "".join(f"{p!r} {v!r}\n" for p, v in zip(self.ps, self.values))


def _normalised_moments(mu, g):
    v = mu.values(g)
    if np.any(~(v > 0)):
        k = int(np.argmax(~(v > 0)))
        raise DomainError(f"g must be positive, got {v[k]} at node {mu.node(k)}")
    s = integrate(mu, v**2)
    return v / np.sqrt(s), s


def _ent_square(mu, h):
    h2 = h**2
    return integrate(mu, h2 * np.log(h2))


def _is_nonincreasing(values, rel=1e-10, floor=0.0):
    """Nonincreasing up to ``rel`` times the largest value; rises below ``floor`` count as ties."""
    values = np.asarray(values)
    if values.size < 2:
        return True
    scale = max(float(np.max(np.abs(values))), 1e-300)
    return bool(np.all(np.diff(values) <= max(rel * scale, floor)))


def beckner_map(mu, g, ps):
    """``(mu(g^2) - mu(g^{2/p})^p) / (p - 1)`` on a grid of ``p``; ``Ent(g^2)`` at ``p = 1``."""
    h, s = _normalised_moments(mu, g)
    ps = np.asarray(ps, dtype=float)
    out = np.empty_like(ps)
    for i, p in enumerate(ps):
        if p <= 0:
            raise ArgumentError("p must be positive")
        if p == 1.0:
            out[i] = s * _ent_square(mu, h)
            continue
        ell = p * np.log(integrate(mu, h ** (2.0 / p)))
        out[i] = -s * np.expm1(ell) / (p - 1.0)
    # values carry roundoff of order eps mu(g^2)
    verdict = _is_nonincreasing(out[np.argsort(ps)], floor=1e-12 * s)
    return MapResult("beckner_map", ps, out, verdict, (float(ps.min()), float(ps.max())))


def refined_map(mu, g, ps):
    """``p/(2(p-1)^2) [mu(g^2) - mu(g^{2/p})^p (mu(g^2)/mu(g^{2/p})^p)^{2/p-1}]``.

    The monotonicity verdict covers the part of the grid in ``(1, inf)``.
    """
    h, s = _normalised_moments(mu, g)
    ps = np.asarray(ps, dtype=float)
    out = np.empty_like(ps)
    for i, p in enumerate(ps):
        if p <= 0:
            raise ArgumentError("p must be positive")
        if p == 1.0:
            out[i] = s * _ent_square(mu, h)
            continue
        ell = p * np.log(integrate(mu, h ** (2.0 / p)))
        out[i] = -s * p * np.expm1((2.0 - 2.0 / p) * ell) / (2.0 * (p - 1.0) ** 2)
    upper = ps > 1.0
    verdict = _is_nonincreasing(out[upper][np.argsort(ps[upper])], floor=1e-12 * s)
    rng = (float(ps[upper].min()), float(ps[upper].max())) if np.any(upper) else (np.nan, np.nan)
    return MapResult("refined_map", ps, out, verdict, rng)


# ---------------------------------------------------------------------------
# integral criterion


@dataclass
class CriterionReport:
    rho_hat: float
    worst: float | None
    rho: float | None
    members: list
    skipped: list

    def to_dict(self):
        return {"rho_hat": self.rho_hat, "worst": self.worst, "rho": self.rho,
                "members": self.members, "skipped": self.skipped}


def integral_criterion(mu, L, phi, family=None, rho=None, skip_tol=1e-12):
    """Audit ``mu(Gamma_2(Phi'(g))/Phi''(g)) >= rho mu(Gamma(Phi'(g))/Phi''(g))``.

    ``rho_hat`` is the smallest ratio over the family (the best rho the
    family certifies).  Members with a vanishing denominator are skipped.
    """
    if family is None:
        family = test_family(positive=phi.domain.lo >= 0)
    pts, _ = L.check_points(mu.nodes)
    coeffs = L.coefficients(pts, 4)
    members, skipped = [], []
    for label, g in family:
        g = _as_function(g)
        G = g.jet(pts, 4, L.dim)
        H = phi.compose(G, 1)
        w = 1.0 / phi.second(G.value)
        num = integrate(mu, _gamma2_definition(L, H, coeffs) * w)
        den = integrate(mu, L.gamma_jet(H, H, coeffs).value * w)
        if not den > skip_tol * max(1.0, abs(num)):
            skipped.append(label)
            continue
        entry = {"label": label, "numerator": num, "denominator": den, "ratio": num / den}
        if rho is not None:
            entry["slack"] = num - rho * den
        members.append(entry)
    if not members:
        raise ArgumentError("every family member was skipped")
    rho_hat = min(e["ratio"] for e in members)
    worst = None if rho is None else min(e["slack"] for e in members)
    return CriterionReport(rho_hat, worst, rho, members, skipped)


# ---------------------------------------------------------------------------
# non-admissible Phi_p


@dataclass(frozen=True)
class NonAdmissibleParams:
    p: float
    alpha: float
    beta: float

    def __post_init__(self):
        p, a, b = self.p, self.alpha, self.beta
        if not p > 0 or p in (1.0, 2.0):
            raise ArgumentError(f"p must be positive and different from 1 and 2, got {p}")
        if p < 1:
            if not 0 < a <= p:
                raise ArgumentError(f"branch p in (0,1) needs alpha in (0, p], got alpha={a}")
            if not 0 <= b < 1:
                raise ArgumentError(f"branch p in (0,1) needs beta in [0, 1), got beta={b}")
        elif p < 2:
            if a != 1:
                raise ArgumentError(f"branch p in (1,2) needs alpha = 1, got alpha={a}")
            if not b >= (4 - p) / (2 - p):
                raise ArgumentError(f"branch p in (1,2) needs beta >= (4-p)/(2-p) = {(4 - p) / (2 - p)}, got beta={b}")
        else:
            if a != 1:
                raise ArgumentError(f"branch p > 2 needs alpha = 1, got alpha={a}")
            lo = max((p - 4) / (p - 2), 0.0)
            if not lo <= b < 1:
                raise ArgumentError(f"branch p > 2 needs beta in [{lo}, 1), got beta={b}")

    @property
    def b(self):
        return 2.0 * (self.beta - 2.0) / (self.beta - 1.0)

    @property
    def c_p(self):
        return (2.0 - self.p) * (self.p - 1.0)

    @property
    def exponent(self):
        return (2.0 - self.beta) / (1.0 - self.beta)


def xi(x, beta):
    """``((1-beta)/(2-beta)) ((1+x)^q - 1)/x`` with ``q = (2-beta)/(1-beta)``; 1 at ``x = 0``."""
    if beta in (1.0, 2.0):
        raise ArgumentError("xi is undefined for beta in {1, 2}")
    x = np.asarray(x, dtype=float)
    if np.any(x < -1):
        raise DomainError("xi needs x >= -1")
    q = (2.0 - beta) / (1.0 - beta)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.expm1(q * np.log1p(x)) / (q * x)
    out = np.where(x == 0, 1.0, out)
    return float(out) if out.ndim == 0 else out


def _nonadm_parts(P, params, f, t, x):
    L = P.generator
    p, a, b = params.p, params.alpha, params.beta
    bb = params.b

    def mixed(y):
        v = np.asarray(f(y, L.dim), dtype=float)
        return v ** ((p - bb) / a) * gamma(L, f, y) ** (bb / (2.0 * a))

    return _at(P, mixed, t, x) ** a


def _kappa2(P, params, f, t, x, rho, Q=None):
    p, beta = params.p, params.beta
    m = _at(P, f, t, x)
    psi0 = m ** (p - 2.0) * _gamma_Pt(P, f, t, x)
    Q = _nonadm_parts(P, params, f, t, x) if Q is None else Q
    if psi0 == 0.0:
        if beta < 1:
            return -np.inf, psi0
        return 0.0, psi0
    k2 = params.c_p * (1.0 - beta) * np.exp(-2.0 * rho * (2.0 - beta) * t) * (Q / psi0) ** (1.0 - beta)
    return k2, psi0


def reverse_window(P, params, f, x, rho, t_max, tol=1e-10):
    """Largest ``t <= t_max`` with ``1 + K_2(t) >= 0``, by bisection."""
    f = _as_function(f)

    def g(t):
        k2, _ = _kappa2(P, params, f, t, x, rho)
        return 1.0 + reverse_factor(rho, t) * k2

    if g(t_max) >= 0:
        return t_max
    lo, hi = 0.0, t_max
    while hi - lo > tol * max(1.0, t_max):
        mid = 0.5 * (lo + hi)
        if mid == 0.0 or g(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return lo


def nonadmissible_local(P, params, f, t, x, rho=None, direction=FORWARD):
    """Local bounds on ``Ent^{Phi_p}_{P_t}(f)`` for ``(p, alpha, beta)`` in the admissible set."""
    _check_direction(direction)
    if not isinstance(params, NonAdmissibleParams):
        params = NonAdmissibleParams(*params)
    if t <= 0:
        raise ArgumentError("t must be positive")
    rho = _resolve_rho(P, rho)
    f = _as_function(f)
    L = P.generator
    p, beta = params.p, params.beta
    phi = catalog("power", p=p)
    ent, m = _local_entropy(P, phi, f, t, x)
    Q = _nonadm_parts(P, params, f, t, x)
    if direction == FORWARD:
        psi_t = _at(P, lambda y: np.asarray(f(y, L.dim), dtype=float) ** (p - 2.0) * gamma(L, f, y), t, x)
        T = forward_factor(rho, t)
        k1 = 0.0 if psi_t == 0 else params.c_p * (beta - 1.0) * (Q / psi_t) ** (1.0 - beta)
        rhs = T * psi_t * xi(T * k1, beta)
        return InequalityReport("nonadmissible_local", ent, rhs, direction, t, x, rho,
                                details={"kappa1": k1, "K1": T * k1, "Q": Q, "psi_t": psi_t})
    k2, psi0 = _kappa2(P, params, f, t, x, rho, Q)
    T = reverse_factor(rho, t)
    K2 = T * k2
    if not 1.0 + K2 >= 0:
        tf = reverse_window(P, params, f, x, rho, t)
        raise WindowError(f"reverse bound needs 1 + K2 >= 0, got {1.0 + K2:.3e} at t={t}; window ends near t_f={tf:.6g}", tf)
    lhs = T * psi0 * xi(K2, beta)
    return InequalityReport("nonadmissible_local", lhs, ent, direction, t, x, rho,
                            details={"kappa2": k2, "K2": K2, "Q": Q, "psi0": psi0})


# ---------------------------------------------------------------------------
# counterexamples


def counterexample_p_gt_2(p, x):
    """``1 + (2-p)/(2(p-1)) x^4``: the reduced form whose negativity refutes the naive inequality."""
    if not p > 2:
        raise ArgumentError("needs p > 2")
    x = np.asarray(x, dtype=float)
    out = 1.0 + (2.0 - p) / (2.0 * (p - 1.0)) * x**4
    return float(out) if out.ndim == 0 else out


def counterexample_p_gt_2_gamma(p, x):
    """``Gamma_2(h) + (2-p)/(2(p-1)) (Gamma(h)/h)^2`` for the 1D Laplacian, ``h = (1+x^2)^{(p-1)/2}``.

    Computed from the Gamma calculus directly.  Negative values refute the
    naive local Phi_p inequality at curvature 0.
    """
    from .calculus import heat

    L = heat(1)
    h = (1.0 + X**2) ** ((p - 1.0) / 2.0)
    x = np.asarray(x, dtype=float)
    gam = gamma(L, h, x)
    out = gamma2(L, h, x) + (2.0 - p) / (2.0 * (p - 1.0)) * (gam / h(x, 1)) ** 2
    return float(out) if np.ndim(out) == 0 else out


def counterexample_p_lt_1(p, C, lam):
    """``e^{p(1-p) lam^2/2} - 1 - (1-p) C lam^2 p^2 / 4``; positive means the inequality with constant C fails."""
    if not 0 < p < 1:
        raise ArgumentError("needs p in (0, 1)")
    lam = np.asarray(lam, dtype=float)
    with np.errstate(over="ignore"):
        out = np.expm1(p * (1.0 - p) * lam**2 / 2.0) - (1.0 - p) * C * lam**2 * p**2 / 4.0
    return float(out) if out.ndim == 0 else out


def violating_lambda(p, C, lam_max=50.0, n=5001):
    """Smallest ``lam`` on a uniform grid of ``(0, lam_max]`` with a positive counterexample value."""
    lam = np.linspace(0.0, lam_max, n)[1:]
    v = counterexample_p_lt_1(p, C, lam)
    hit = np.flatnonzero(v > 0)
    return float(lam[hit[0]]) if hit.size else None


# ---------------------------------------------------------------------------
# Helffer-type example: integral criterion fails, the inequality holds


def lower_convex_hull(x, y):
    """Values at ``x`` of the lower convex envelope of the points ``(x, y)``."""
    hull = []
    for i in range(len(x)):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            if (y[i1] - y[i0]) * (x[i] - x[i0]) >= (y[i] - y[i0]) * (x[i1] - x[i0]):
                hull.pop()
            else:
                break
        hull.append(i)
    return np.interp(x, x[hull], y[hull])


def perturbed_lsi_constant(potential, box=(-12.0, 12.0), n=20001, kappas=None):
    """Certified constant ``C`` in ``Ent_mu(g^2) <= C mu(|g'|^2)`` for ``mu = e^{-Psi}/Z`` in 1D.

    Splits ``Psi = U + B`` with ``U`` ``kappa``-convex (``kappa x^2/2`` plus the
    convex envelope of the remainder) and applies ``C = (2/kappa) e^{osc B}``.
    Returns ``(C, kappa)`` at the best ``kappa`` in the scan.
    """
    if isinstance(potential, str):
        from .jets import parse_expression

        potential = parse_expression(potential)
    x = np.linspace(box[0], box[1], n)
    psi = np.asarray(potential(x, 1), dtype=float)
    if kappas is None:
        kappas = np.geomspace(1e-3, 1e3, 121)
    best = (np.inf, None)
    for k in kappas:
        w = psi - 0.5 * k * x**2
        B = w - lower_convex_hull(x, w)
        with np.errstate(over="ignore"):
            c = (2.0 / k) * np.exp(np.max(B) - np.min(B))
        if c < best[0]:
            best = (float(c), float(k))
    return best


@dataclass
class HelfferReport:
    p: float
    b: float
    numerator: float
    numerator_unnormalised: float
    numerator_closed_form: float
    lsi_constant: float
    phi_constant: float
    ergodic: list

    @property
    def criterion_fails(self):
        return self.numerator < 0

    @property
    def ergodic_holds(self):
        return not any(r.violated for r in self.ergodic)

    def to_dict(self):
        return {"p": self.p, "b": self.b, "numerator": self.numerator,
                "numerator_unnormalised": self.numerator_unnormalised,
                "numerator_closed_form": self.numerator_closed_form,
                "lsi_constant": self.lsi_constant, "phi_constant": self.phi_constant,
                "criterion_fails": self.criterion_fails, "ergodic_holds": self.ergodic_holds,
                "ergodic": [r.to_dict() for r in self.ergodic]}


def helffer_counterexample(p=1.05, box=(-12.0, 12.0), n=4096, family=None):
    """Integral-criterion numerator and ergodic Phi_p checks for ``Psi = x^4 - b x^2``.

    ``b = 1 + p/(p-1)`` and ``g = e^{-x^2}``.  The numerator is
    ``mu(g^{(2-p)/(p-1)} Gamma_2(g))``; the ergodic inequality uses a
    certified constant from the convex-perturbation bound.
    """
    from .calculus import gibbs_generator

    if not 1 < p < 2:
        raise ArgumentError("needs p in (1, 2)")
    b = 1.0 + p / (p - 1.0)
    psi = X**4 - b * X**2
    mu = build_gibbs(psi, box, n)
    L = gibbs_generator(psi)
    g = exp(-(X**2))
    x = mu.nodes
    num = integrate(mu, g(x, 1) ** ((2.0 - p) / (p - 1.0)) * gamma2(L, g, x))
    # same integral, expanded by hand, against the unnormalised weight
    e = np.exp(x**2 - x**4)
    closed = np.dot(mu.weights, ((4 * x**2 - 2) ** 2 + 48 * x**4) * e) - 8 * b * np.dot(mu.weights, x**2 * e)
    c_lsi, _ = perturbed_lsi_constant(psi, box)
    c_phi = c_lsi * p / 4.0
    phi = catalog("power", p=p)
    fam = test_family(positive=True) if family is None else family
    reports = [ergodic_phi(mu, L, phi, f, C=c_phi) for _, f in fam]
    for (label, _), r in zip(fam, reports):
        r.details["member"] = label
    return HelfferReport(p, b, float(num), float(num * mu.z), float(closed), c_lsi, c_phi, reports)

