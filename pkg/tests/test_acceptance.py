"""The fourteen acceptance criteria at their stated tolerances and time limits.

Each criterion records one PASS/FAIL line; the lines are printed in the
pytest terminal summary, and ``python tests/test_acceptance.py`` prints
them directly.
"""

import math
import time

import numpy as np
import pytest

from phientropy.calculus import (
    CLOSED_FORM,
    DEFINITION,
    ConstantMatrix,
    DiffusionGenerator,
    ScalarField,
    cd_rho_estimate,
    gamma2,
    gibbs_generator,
    heat,
    ornstein_uhlenbeck,
)
from phientropy.families import test_family as family_v1
from phientropy.fokkerplanck import (
    FPProblem,
    Gradient,
    GradientPlusFlux,
    PeriodicHeat,
    algebraic_decay_check,
    decay_rate,
    entropy_production_identity,
    flux_residual,
    solve_fp,
)
from phientropy.inequalities import (
    REVERSE,
    beckner_map,
    counterexample_p_gt_2,
    counterexample_p_lt_1,
    helffer_counterexample,
    local_phi,
    local_poincare,
    refined_map,
    violating_lambda,
    xi,
)
from phientropy.jets import parse_expression
from phientropy.mckeanvlasov import MKVProblem, PropagationSchedule, check_propagation, simulate_particles, solve_mkv_pde
from phientropy.measures import build_gibbs, gauss_hermite
from phientropy.phi import catalog
from phientropy.semigroups import HeatSemigroup, NumericSemigroup, OrnsteinUhlenbeckSemigroup


# ---------------------------------------------------------------------------
# criteria: each returns (passed, detail)


def golden_values():
    mu = gauss_hermite(200)
    # the displayed density sqrt(2) e^{-x^2/2} is g^2
    res = refined_map(mu, "2**0.25*exp(-x**2/4)", [0.1, 0.5, 0.9])
    want = [0.061, 0.134, 0.103]
    err = np.abs(res.values - want)
    return bool(np.all(err <= 2e-3)), f"values={np.round(res.values, 6).tolist()} max_err={err.max():.2e}"


def cd_certification():
    ou = cd_rho_estimate(ornstein_uhlenbeck(1)).rho_star
    ht = cd_rho_estimate(heat(1)).rho_star
    return abs(ou - 1) <= 1e-9 and abs(ht) <= 1e-12, f"rho_ou={ou!r} rho_heat={ht!r}"


def _random_poly(rng, names, deg=3):
    terms = [f"{rng.uniform(-1, 1):.6f}"]
    for name in names:
        for k in range(1, deg + 1):
            terms.append(f"{rng.uniform(-1, 1):.6f}*{name}**{k}")
    return "+".join(terms)


def _random_case(rng, k):
    dim = 1 + k % 2
    names = ["x", "y"][:dim]
    drift = tuple(parse_expression(_random_poly(rng, names) + f"+{rng.uniform(-1, 1):.4f}*sin({name})")
                  for name in names)
    if k < 25:
        B = rng.normal(size=(dim, dim))
        diffusion = ConstantMatrix(B @ B.T + 0.1 * np.eye(dim))
    else:
        r2 = "+".join(f"{n}**2" for n in names)
        diffusion = ScalarField(parse_expression(f"1+{rng.uniform(0.05, 0.5):.4f}*({r2})+{rng.uniform(0, 0.5):.4f}*sin({names[0]})**2"))
    L = DiffusionGenerator(dim, diffusion, drift)
    c = rng.uniform(0.2, 1.0, size=3)
    r2 = "+".join(f"{n}**2" for n in names)
    f = parse_expression(f"exp(-{c[0]:.4f}*({r2}))+{c[1]:.4f}*sin({names[-1]})*{names[0]}+{c[2]:.4f}*{names[0]}**3")
    pts = rng.uniform(-2, 2, size=(6, dim)) if dim == 2 else rng.uniform(-2, 2, size=6)
    return L, f, pts


def gamma2_cross_validation():
    rng = np.random.default_rng(20240601)
    worst = 0.0
    for k in range(50):
        L, f, pts = _random_case(rng, k)
        a = np.asarray(gamma2(L, f, pts, DEFINITION))
        b = np.asarray(gamma2(L, f, pts, CLOSED_FORM))
        worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a)))))
    return worst <= 1e-9, f"50 cases, max scaled difference={worst:.2e}"


def semigroup_fidelity():
    num = NumericSemigroup(ornstein_uhlenbeck(1))
    ref = OrnsteinUhlenbeckSemigroup()
    x = np.linspace(-3, 3, 61)
    errs = [float(np.max(np.abs(g(x) - ref.apply("cos(x)", t, x))))
            for t, g in zip((0.1, 0.5, 1.0), num.solve("cos(x)", [0.1, 0.5, 1.0]))]
    return max(errs) <= 5e-4, f"sup errors on [-3,3]: {[f'{e:.2e}' for e in errs]}"


def poincare_equality():
    P = OrnsteinUhlenbeckSemigroup()
    worst = 0.0
    for t in (0.25, 1.0, 3.0):
        r = local_poincare(P, "x", t, 0.7, rho=1.0)
        target = -math.expm1(-2 * t)
        worst = max(worst, abs(r.lhs - target), abs(r.rhs - target))
    return worst <= 1e-8, f"max |Var - (1-e^-2t)| and |bound - (1-e^-2t)| = {worst:.2e}"


SANDWICH_PHI = [("square", {}), ("log", {}), ("power", {"p": 1.3}), ("power", {"p": 1.7})]
SANDWICH_F = ["1+exp(-x**2)", "2+sin(3*x)", "exp(0.5*x)", "1/(1+x**2)", "1.5+cos(x)*exp(-x**2/4)", "3+x/(1+x**2)"]


def sandwich():
    rng = np.random.default_rng(7)
    sgs = [(OrnsteinUhlenbeckSemigroup(), 1.0), (HeatSemigroup(), 0.0)]
    worst = np.inf
    for _ in range(200):
        P, rho = sgs[rng.integers(2)]
        name, params = SANDWICH_PHI[rng.integers(4)]
        phi = catalog(name, **params)
        f = SANDWICH_F[rng.integers(len(SANDWICH_F))]
        t, x = float(rng.uniform(0.05, 3.0)), float(rng.uniform(-2.0, 2.0))
        up = local_phi(P, phi, f, t, x, rho)
        down = local_phi(P, phi, f, t, x, rho, direction=REVERSE)
        worst = min(worst, up.slack, down.slack)
    return worst >= -1e-8, f"200 samples, min slack={worst:.2e}"


def _random_positive_g(rng):
    a, b, c, d = rng.uniform(-1, 1), rng.uniform(-0.9, 0.9), rng.uniform(0.2, 2.0), rng.uniform(-1.5, 1.5)
    return f"exp({a:.5f}*x/2)*(1+{b:.5f}*exp(-{c:.5f}*(x-{d:.5f})**2))"


def refined_dominance():
    rng = np.random.default_rng(11)
    mu = gauss_hermite(200)
    ps = np.array([1.2, 1.5, 1.8])
    grid = np.linspace(1.05, 2.0, 20)
    worst_gap, monotone = np.inf, True
    for _ in range(100):
        g = _random_positive_g(rng)
        ref, beck = refined_map(mu, g, ps), beckner_map(mu, g, ps)
        worst_gap = min(worst_gap, float(np.min(ref.values - beck.values)))
        monotone &= refined_map(mu, g, grid).nonincreasing and beckner_map(mu, g, grid).nonincreasing
    return worst_gap >= -1e-10 and monotone, f"100 g, min(refined - Beckner)={worst_gap:.2e}, monotone={monotone}"


def helffer():
    rep = helffer_counterexample(1.05)
    worst = min(r.slack for r in rep.ergodic)
    ok = rep.criterion_fails and rep.ergodic_holds
    return ok, (f"numerator={rep.numerator:.3e} (unnormalised {rep.numerator_unnormalised:.3f}), "
                f"ergodic members={len(rep.ergodic)} min slack={worst:.2e}")


def xi_bounds():
    x = np.linspace(0.0, 100.0, 100001)[1:]
    ok1 = all(np.all(xi(x, (4 - p) / (2 - p)) < 1) for p in (1.2, 1.5, 1.8))
    ok2 = all(np.all(xi(x, b) <= (1 + x) ** (1 / (1 - b))) for b in (0.0, 0.5))
    d = abs(xi(1.0, 1000.0) - 1)
    return ok1 and ok2 and d <= 1e-2, f"xi<1: {ok1}, upper bound: {ok2}, |xi_1000(1)-1|={d:.2e}"


def counterexamples():
    v = counterexample_p_gt_2(3, 3)
    lams = {C: violating_lambda(0.5, C) for C in (1, 10, 100)}
    ok = v == -19.25 and all(l is not None and l <= 50 and counterexample_p_lt_1(0.5, C, l) > 0 for C, l in lams.items())
    return ok, f"p>2 value={v}, violating lambda={lams}"


def fokker_planck_decay():
    p1 = FPProblem(1, Gradient("x**2/2"), "exp(-(x-2)**2/2)", box=(-10, 10), n=1024, horizon=8.0, dt=0.01)
    s1 = solve_fp(p1, phis=("log",))
    slope1 = decay_rate(s1, "log", window=(3.0, 8.0)).slope
    p2 = FPProblem(2, GradientPlusFlux("(x**2+y**2)/2", ("-y", "x")), "exp(-((x-2)**2+y**2))",
                   box=(-8, 8), n=128, horizon=10.0, dt=0.02, save_every=5)
    res = flux_residual(p2)
    s2 = solve_fp(p2, phis=("log",))
    stat = float(np.max(np.abs(s2.densities[-1] - s2.u_inf)))
    slope2 = decay_rate(s2, "log", window=(2.0, 6.0)).slope
    ok = abs(slope1 + 2) <= 0.1 and res <= 1e-8 and stat <= 1e-4 and slope2 <= -1.8
    return ok, f"1D slope={slope1:.4f}; 2D flux residual={res:.1e}, |u_T - e^-V/Z|_inf={stat:.1e}, slope={slope2:.4f}"


def integration_by_parts():
    measures = [
        (gauss_hermite(), ornstein_uhlenbeck(1)),
        (build_gibbs("x**4/4-x**2", (-7, 7), 4001), gibbs_generator("x**4/4-x**2")),
    ]
    phis = [catalog("square"), catalog("log"), catalog("power", p=1.3), catalog("power", p=1.7),
            catalog("log_primitive", a=1.0)]
    funcs = ["2+sin(x)*exp(-x**2/8)", "1.5+x*exp(-x**2)"]
    worst, n = 0.0, 0
    for mu, L in measures:
        for phi in phis:
            for f in funcs:
                r = entropy_production_identity(mu, L, phi, f)
                worst = max(worst, r.residual)
                n += 1
    return n == 20 and worst <= 1e-8, f"{n} triples, max residual={worst:.2e}"


def mckean_vlasov():
    prob = MKVProblem(u0="exp(-(x-1)**2/(2*0.25))/sqrt(2*pi*0.25)")
    sol = solve_mkv_pde(prob)
    sched = PropagationSchedule(0.125, prob.audit()["rho"])
    worst = np.inf
    for name in ("square", "log"):
        rep = check_propagation(prob, name, sched, times=(0.5, 1.0, 2.0, 4.0), solution=sol)
        worst = min(worst, rep.worst.slack, min(r.slack for r in rep.precondition))
    c4 = float(sched(4.0))
    tr = simulate_particles(prob, seed=0, n_particles=10_000, times=[0.5, 1.0, 2.0, 4.0])
    m, v = tr.moments()
    sm, sv = tr.standard_errors()
    pm, pv = sol.moments()
    idx = [int(np.argmin(np.abs(sol.times - t))) for t in tr.times]
    z = max(np.max(np.abs(m - pm[idx]) / sm), np.max(np.abs(v - pv[idx]) / sv))
    ok = worst >= -1e-6 and abs(c4 - 0.5) <= 1e-3 and z <= 4
    return ok, f"min slack={worst:.3e}, c(4)={c4:.6f}, max moment z-score={z:.2f}"


def algebraic_bound():
    rep = algebraic_decay_check(PeriodicHeat("1+0.9*exp(-x**2)"), 1.5, np.linspace(0, 5, 101), rtol=1e-6)
    return not rep.violated, f"alpha={rep.alpha:.4f}, worst |H'(t)|/bound={rep.worst_ratio:.6f}"


CRITERIA = [
    (1, "golden values of the refined map", golden_values, 1),
    (2, "CD certification", cd_certification, 1),
    (3, "Gamma2 cross-validation", gamma2_cross_validation, 5),
    (4, "semigroup fidelity", semigroup_fidelity, 30),
    (5, "Poincare equality case", poincare_equality, 1),
    (6, "sandwich property", sandwich, 60),
    (7, "refined Phi_p dominance", refined_dominance, 30),
    (8, "Helffer-style counterexample", helffer, 5),
    (9, "xi bounds", xi_bounds, 1),
    (10, "counterexamples reproduce", counterexamples, 1),
    (11, "Fokker-Planck decay", fokker_planck_decay, 300),
    (12, "integration-by-parts identity", integration_by_parts, 10),
    (13, "McKean-Vlasov propagation", mckean_vlasov, 300),
    (14, "rho=0 algebraic bound", algebraic_bound, 60),
]


def evaluate(number):
    _, title, fn, limit = CRITERIA[number - 1]
    start = time.perf_counter()
    ok, detail = fn()
    elapsed = time.perf_counter() - start
    passed = bool(ok) and elapsed < limit
    line = f"{'PASS' if passed else 'FAIL'} criterion {number:2d} ({title}): {detail}; runtime {elapsed:.2f}s < {limit}s"
    return passed, line


SLOW = {8, 11, 13}


@pytest.mark.parametrize("number", [pytest.param(c[0], marks=pytest.mark.slow) if c[0] in SLOW else c[0] for c in CRITERIA])
def test_criterion(number, acceptance_log):
    passed, line = evaluate(number)
    acceptance_log[number] = line
    print(line)
    assert passed, line


if __name__ == "__main__":
    import sys

    results = [evaluate(c[0]) for c in CRITERIA]
    for _, line in results:
        print(line)
    sys.exit(0 if all(p for p, _ in results) else 1)
