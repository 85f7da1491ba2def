"""Convex entropy generators ``Phi``, their admissibility, and Phi-entropies.

A generator is admissible when ``Phi'' > 0`` and ``1/Phi''`` is concave on
its interval.  Derivatives of every order come from Taylor jets of
``Phi'``, which is stored as a closed-form expression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import spence

from .errors import AdmissibilityError, ArgumentError, DomainError
from .jets import SmoothFunction, X, exp, log
from .measures import integrate

__all__ = [
    "Interval",
    "PhiFunction",
    "AdmissibilityVerdict",
    "catalog",
    "CATALOG_NAMES",
    "is_admissible",
    "cone_check",
    "phi_entropy",
    "audit_grid",
    "mixture",
]

ADMISSIBILITY_TOL = 1e-10


@dataclass(frozen=True)
class Interval:
    lo: float = -math.inf
    hi: float = math.inf
    lo_closed: bool = False
    hi_closed: bool = False

    def contains(self, v):
        v = np.asarray(v, dtype=float)
        lo_ok = v >= self.lo if self.lo_closed else v > self.lo
        hi_ok = v <= self.hi if self.hi_closed else v < self.hi
        return lo_ok & hi_ok & np.isfinite(v)

    def intersect(self, other):
        if self.lo > other.lo or (self.lo == other.lo and not self.lo_closed):
            lo, lo_c = self.lo, self.lo_closed
        else:
            lo, lo_c = other.lo, other.lo_closed
        if self.hi < other.hi or (self.hi == other.hi and not self.hi_closed):
            hi, hi_c = self.hi, self.hi_closed
        else:
            hi, hi_c = other.hi, other.hi_closed
        if lo > hi or (lo == hi and not (lo_c and hi_c)):
            raise ArgumentError(f"intervals {self} and {other} do not overlap")
        return Interval(lo, hi, lo_c, hi_c)

    def __str__(self):
        return f"{'[' if self.lo_closed else '('}{self.lo}, {self.hi}{']' if self.hi_closed else ')'}"


@dataclass(frozen=True)
class PhiFunction:
    """Entropy generator with a closed-form first derivative.

    ``first`` is ``Phi'`` as an expression in ``x``; ``value`` evaluates
    ``Phi`` itself (a closed form may need special functions).
    """

    name: str
    domain: Interval
    first: SmoothFunction
    value: object
    params: dict = field(default_factory=dict)
    declared_admissible: bool = True

    def __call__(self, v):
        return self.evaluate(v)

    def check_range(self, v):
        v = np.asarray(v, dtype=float)
        ok = self.domain.contains(v)
        if not np.all(ok):
            bad = np.flatnonzero(~ok.reshape(-1))
            sample = v.reshape(-1)[bad[:5]].tolist()
            raise DomainError(f"{self.name}: {bad.size} value(s) outside {self.domain}, e.g. nodes {bad[:5].tolist()} -> {sample}")

    def evaluate(self, v):
        self.check_range(v)
        return self.value(np.asarray(v, dtype=float))

    def derivatives(self, v, upto):
        """List ``[Phi(v), Phi'(v), ..., Phi^(upto)(v)]``."""
        v = np.asarray(v, dtype=float)
        self.check_range(v)
        out = [self.value(v)]
        if upto >= 1:
            J = self.first.jet(v, upto - 1, 1)
            for j in range(upto):
                out.append(np.broadcast_to(J.tensor(j), v.shape).astype(float))
        return out

    def derivative(self, v, k):
        return self.derivatives(v, k)[k]

    def second(self, v):
        return self.derivative(v, 2)

    def compose(self, F, k=0):
        """Jet of ``Phi^(k)(F)`` for a jet ``F``."""
        derivs = self.derivatives(F.value, k + F.order)
        return F.compose(derivs[k:])

    def to_dict(self):
        return {"name": self.name, "params": dict(self.params)}


def _power_primitive(p, shift):
    def value(v):
        return (np.power(v, p) - shift * v) / (p * (p - 1.0)) if shift else (np.power(v, p) - 1.0) / (p * (p - 1.0))

    return value


def _xlogx(v):
    return v * np.log(v)


def _make_square():
    return PhiFunction("square", Interval(), 2.0 * X, lambda v: np.asarray(v, dtype=float) ** 2)


def _make_log():
    return PhiFunction("log", Interval(0.0), log(X) + 1.0, _xlogx)


def _make_power(p):
    p = float(p)
    if not p > 0:
        raise ArgumentError(f"power family needs p > 0, got {p}")
    if abs(p - 1.0) <= 1e-6:
        phi = _make_log()
        return PhiFunction(phi.name, phi.domain, phi.first, phi.value, {"p": p, "substituted": "x ln x"}, True)
    first = (X**(p - 1.0) * p - 1.0) / (p * (p - 1.0))
    return PhiFunction(f"power[{p:g}]", Interval(0.0), first, _power_primitive(p, 1.0), {"p": p}, 1.0 <= p <= 2.0)


def _make_power_tilde(p):
    p = float(p)
    if not p > 0 or p == 1.0:
        raise ArgumentError(f"power_tilde needs p > 0 and p != 1, got {p}")
    first = X ** (p - 1.0) / (p - 1.0)
    return PhiFunction(f"power_tilde[{p:g}]", Interval(0.0), first, _power_primitive(p, 0.0), {"p": p}, 1.0 <= p <= 2.0)


def _extended_beckner_with(alpha, beta, a):
    u = X + a
    first = u ** (alpha - 1.0) * log(u) ** (beta - 1.0) * (alpha * log(u) + beta)

    def value(v):
        w = np.asarray(v, dtype=float) + a
        return w**alpha * np.log(w) ** beta

    return PhiFunction(
        f"extended_beckner[{alpha:g},{beta:g}]",
        Interval(0.0, math.inf, True, False),
        first,
        value,
        {"alpha": alpha, "beta": beta, "a": a},
    )


def _make_extended_beckner(alpha, beta, a=None, grid=None):
    alpha, beta = float(alpha), float(beta)
    if not 1.0 <= alpha < 2.0:
        raise ArgumentError(f"extended Beckner family needs alpha in [1, 2), got {alpha}")
    if a is not None:
        return _extended_beckner_with(alpha, beta, float(a))

    def ok(a_):
        return is_admissible(_extended_beckner_with(alpha, beta, a_), grid).admissible

    lo, hi = 1.0, 64.0
    if ok(lo):
        return _extended_beckner_with(alpha, beta, lo)
    if not ok(hi):
        raise ArgumentError(f"no a in [1, 64] makes (x+a)^{alpha} ln(x+a)^{beta} admissible")
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return _extended_beckner_with(alpha, beta, hi)


def _make_log_primitive(a):
    a = float(a)
    if not a > 0:
        raise ArgumentError(f"log_primitive needs a > 0, got {a}")
    # Phi' = ln(e^{ax} - 1) written to avoid overflow for large ax
    first = a * X + log(1.0 - exp(-a * X))

    def value(v):
        v = np.asarray(v, dtype=float)
        return 0.5 * a * v**2 + spence(-np.expm1(-a * v)) / a

    return PhiFunction(f"log_primitive[{a:g}]", Interval(0.0), first, value, {"a": a})


def mixture(phi1, phi2, lam):
    """``lam Phi1 + (1 - lam) Phi2`` on the common interval."""
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ArgumentError("mixture weight must lie in [0, 1]")
    dom = phi1.domain.intersect(phi2.domain)
    first = lam * phi1.first + (1.0 - lam) * phi2.first

    def value(v):
        return lam * phi1.value(v) + (1.0 - lam) * phi2.value(v)

    return PhiFunction(
        f"mixture[{phi1.name},{phi2.name},{lam:g}]",
        dom,
        first,
        value,
        {"phi1": phi1.to_dict(), "phi2": phi2.to_dict(), "lam": lam},
        phi1.declared_admissible and phi2.declared_admissible,
    )


CATALOG_NAMES = ("square", "log", "power", "power_tilde", "extended_beckner", "log_primitive", "mixture")


def catalog(name, **params):
    """Build a catalog generator from its string key and parameters."""
    if name == "square":
        return _make_square()
    if name == "log":
        return _make_log()
    if name == "power":
        return _make_power(params["p"])
    if name == "power_tilde":
        return _make_power_tilde(params["p"])
    if name == "extended_beckner":
        return _make_extended_beckner(params["alpha"], params["beta"], params.get("a"))
    if name == "log_primitive":
        return _make_log_primitive(params.get("a", 1.0))
    if name == "mixture":
        p1, p2 = params["phi1"], params["phi2"]
        p1 = p1 if isinstance(p1, PhiFunction) else catalog(p1["name"], **p1.get("params", {}))
        p2 = p2 if isinstance(p2, PhiFunction) else catalog(p2["name"], **p2.get("params", {}))
        return mixture(p1, p2, params["lam"])
    raise ArgumentError(f"unknown Phi catalog name {name!r}; choose from {CATALOG_NAMES}")


# ---------------------------------------------------------------------------
# admissibility


def audit_grid(domain, n=1000):
    """Audit nodes spanning six orders of magnitude inside ``domain``."""
    lo, hi = domain.lo, domain.hi
    if np.isfinite(lo) and np.isfinite(hi):
        width = hi - lo
        return lo + width * np.linspace(1e-3, 1 - 1e-3, n)
    mags = np.logspace(-3, 3, n if np.isfinite(lo) or np.isfinite(hi) else n // 2)
    if np.isfinite(lo):
        return lo + mags
    if np.isfinite(hi):
        return hi - mags[::-1]
    return np.concatenate([-mags[::-1], mags])


@dataclass
class AdmissibilityVerdict:
    admissible: bool
    margin: float
    convex: bool
    literal_form_holds: bool
    squared_form_holds: bool
    excluded: list
    n_points: int

    def to_dict(self):
        return {
            "admissible": self.admissible,
            "margin": self.margin,
            "convex": self.convex,
            "literal_form_holds": self.literal_form_holds,
            "squared_form_holds": self.squared_form_holds,
            "excluded": self.excluded,
            "n_points": self.n_points,
        }


def _safe_derivatives(phi, x, upto):
    """Derivatives with nodes that fail to evaluate set to NaN."""
    try:
        return phi.derivatives(x, upto)
    except (DomainError, OverflowError, ZeroDivisionError):
        pass
    out = [np.full_like(x, np.nan) for _ in range(upto + 1)]
    for k in range(x.size):
        try:
            dk = phi.derivatives(x[k : k + 1], upto)
        except (DomainError, OverflowError, ZeroDivisionError):
            continue
        for m in range(upto + 1):
            out[m][k] = dk[m][0]
    return out


def is_admissible(phi, grid=None, tol=ADMISSIBILITY_TOL):
    """Audit ``Phi'' > 0`` and concavity of ``1/Phi''`` on a grid.

    ``margin`` is the largest value of ``(1/Phi'')''``.  Both textbook
    fourth-order forms, ``Phi4 Phi2 >= 2 Phi3`` and ``Phi4 Phi2 >= 2 Phi3^2``,
    are evaluated and recorded; only the concavity test decides the verdict.
    Nodes where evaluation overflows are excluded and listed.
    """
    x = audit_grid(phi.domain) if grid is None else np.asarray(grid, dtype=float)
    inside = phi.domain.contains(x)
    x = x[inside]
    with np.errstate(all="ignore"):
        d = _safe_derivatives(phi, x, 4)
        p2, p3, p4 = d[2], d[3], d[4]
        curv = 2.0 * p3**2 / p2**3 - p4 / p2**2
    finite = np.isfinite(curv) & np.isfinite(p2)
    excluded = x[~finite].tolist()
    x, p2, p3, p4, curv = x[finite], p2[finite], p3[finite], p4[finite], curv[finite]
    if x.size == 0:
        return AdmissibilityVerdict(False, math.nan, False, False, False, excluded, 0)
    convex = bool(np.all(p2 > 0))
    margin = float(np.max(curv))
    scale = np.maximum(1.0, np.abs(p4 * p2))
    literal = bool(np.all(p4 * p2 - 2.0 * p3 >= -tol * scale))
    squared = bool(np.all(p4 * p2 - 2.0 * p3**2 >= -tol * np.maximum(scale, np.abs(2 * p3**2))))
    return AdmissibilityVerdict(convex and margin <= tol, margin, convex, literal, squared, excluded, int(x.size))


def cone_check(phi1, phi2, lam, grid=None):
    """Admissibility of ``lam Phi1 + (1 - lam) Phi2`` on the shared interval."""
    mix = mixture(phi1, phi2, lam)
    if grid is not None:
        grid = np.asarray(grid, dtype=float)
        grid = grid[mix.domain.contains(grid)]
    return is_admissible(mix, grid)


def require_admissible(phi, grid=None):
    verdict = is_admissible(phi, grid)
    if not verdict.admissible:
        raise AdmissibilityError(f"{phi.name} is not admissible (margin {verdict.margin:.3e})", verdict.margin)
    return verdict


# ---------------------------------------------------------------------------
# Phi-entropy


def phi_entropy(mu, phi, f):
    """``mu(Phi(f)) - Phi(mu(f))``."""
    vals = mu.values(f)
    phi.check_range(vals)
    m = integrate(mu, vals)
    if not np.all(phi.domain.contains(m)):
        raise DomainError(f"mean {m} lies outside {phi.domain}")
    return integrate(mu, phi.value(vals)) - float(phi.value(np.asarray(m)))
