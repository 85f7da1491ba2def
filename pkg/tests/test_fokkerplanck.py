import math

import numpy as np
import pytest

from phientropy.calculus import gibbs_generator, ornstein_uhlenbeck
from phientropy.errors import ArgumentError, StabilityError, UnsupportedError, WindowError
from phientropy.fokkerplanck import (
    FPProblem,
    Gradient,
    GradientPlusFlux,
    PeriodicHeat,
    Raw,
    algebraic_decay_check,
    assemble,
    decay_rate,
    entropy_dissipation,
    entropy_production_identity,
    flux_residual,
    grid_entropy,
    solve_fp,
    stationary_state,
)
from phientropy.measures import build_gibbs, gauss_hermite
from phientropy.phi import catalog
from phientropy.semigroups import OrnsteinUhlenbeckSemigroup

U0 = "exp(-2*(x-1)**2)"


def ou_problem(**kw):
    base = dict(dim=1, drift=Gradient("x**2/2"), u0=U0, box=(-10, 10), n=512, horizon=3.0, dt=1e-2, save_every=5)
    base.update(kw)
    return FPProblem(**base)


@pytest.fixture(scope="module")
def ou_solution():
    return solve_fp(ou_problem())


def test_equilibrium_is_discrete_kernel():
    p = ou_problem()
    u_inf, rule = stationary_state(p)
    assert rule == "exp(-V)"
    assert np.max(np.abs(assemble(p) @ u_inf)) < 1e-12
    assert u_inf.sum() * p.cell_volume == pytest.approx(1.0, abs=1e-14)


def test_columns_sum_to_zero():
    A = assemble(ou_problem(n=64, drift=Raw(("x**3-x",))))
    np.testing.assert_allclose(np.asarray(A.sum(axis=0)).ravel(), 0.0, atol=1e-10)


def test_mass_and_moments(ou_solution):
    s = ou_solution
    np.testing.assert_allclose(s.mass, 1.0, atol=1e-12)
    mean, var = s.moments()
    t = s.times
    np.testing.assert_allclose(mean, np.exp(-t), atol=5e-4)
    np.testing.assert_allclose(var, 1 - 0.75 * np.exp(-2 * t), atol=5e-4)


def test_matches_backward_semigroup(ou_solution):
    # u_t = gamma P_t(u_0 / gamma) for the reversible OU flow
    s = ou_solution
    x = s.problem.axes[0]
    sel = np.abs(x) <= 5
    g0 = lambda y: np.exp(-2 * (y - 1) ** 2 + y**2 / 2) * 2.0  # (u0/gamma) with u0 normalised
    P = OrnsteinUhlenbeckSemigroup(check_tail=False)
    gauss = np.exp(-x[sel] ** 2 / 2) / math.sqrt(2 * math.pi)
    for k in (4, 12, len(s.times) - 1):
        want = gauss * P.apply(g0, s.times[k], x[sel])
        np.testing.assert_allclose(s.densities[k][sel], want, atol=5e-4)


def test_entropy_duality(ou_solution):
    # d/dt Ent^Phi = -mu(Phi''(g) Gamma(g))
    s = ou_solution
    for name in ("square", "log"):
        e = s.entropies[name]
        dt = np.diff(s.times)
        mid = 0.5 * (s.densities[1:] + s.densities[:-1])
        rate = np.diff(e) / dt
        diss = np.array([entropy_dissipation(s.problem, u, s.u_inf, name) for u in mid])
        sel = s.times[1:] > 0.2
        np.testing.assert_allclose(rate[sel], -diss[sel], atol=1e-4, rtol=2e-3)
        assert np.all(np.diff(e) <= 1e-14)


def test_decay_rate_ou(ou_solution):
    for name in ("square", "log"):
        fit = decay_rate(ou_solution, name, window=(1.0, 3.0))
        assert fit.slope == pytest.approx(-2.0, rel=0.02)
        assert not fit.lower_confidence


def test_decay_window_errors(ou_solution):
    with pytest.raises(WindowError):
        decay_rate(ou_solution, "square", window=(10.0, 20.0))
    with pytest.raises(WindowError):
        decay_rate(ou_solution, "square", window=(1.0, 3.0), floor=1.0)
    with pytest.raises(ArgumentError):
        decay_rate(ou_solution, catalog("power", p=1.5))


def test_raw_drift_long_run_matches_gibbs():
    p = FPProblem(1, Raw(("x**3-x",)), "exp(-x**2)", box=(-5, 5), n=400)
    u, rule = stationary_state(p)
    assert rule == "long-run"
    x = p.axes[0]
    want = np.exp(-(x**4 / 4 - x**2 / 2))
    want /= want.sum() * p.cell_volume
    assert np.max(np.abs(u - want)) < 1e-3


def test_raw_solution_notes_lower_confidence():
    p = FPProblem(1, Raw(("x",)), U0, box=(-8, 8), n=256, horizon=0.5, dt=1e-2)
    s = solve_fp(p)
    assert s.stationary_rule == "long-run" and s.notes
    assert decay_rate(s, "square").lower_confidence


def test_rotational_flux_small():
    p = FPProblem(2, GradientPlusFlux("(x**2+y**2)/2", ("-y", "x")), "exp(-((x-2)**2+y**2))", box=(-8, 8), n=48,
                  horizon=1.0, dt=0.05, save_every=2)
    assert flux_residual(p) < 1e-12
    u_inf, _ = stationary_state(p)
    assert np.max(np.abs(assemble(p) @ u_inf.ravel())) < 1e-12
    s = solve_fp(p)
    np.testing.assert_allclose(s.mass, 1.0, atol=1e-12)
    assert np.all(np.diff(s.entropies["square"]) < 0)


def test_flux_residual_detects_bad_flux():
    p = FPProblem(2, GradientPlusFlux("(x**2+y**2)/2", ("1", "0")), "exp(-(x**2+y**2))", box=(-6, 6), n=16)
    assert flux_residual(p) > 1e-3


def test_non_diagonal_diffusion_unsupported():
    p = FPProblem(2, Gradient("(x**2+y**2)/2"), "exp(-(x**2+y**2))", diffusion=np.array([[1.0, 0.2], [0.2, 1.0]]),
                  box=(-6, 6), n=16)
    with pytest.raises(UnsupportedError):
        assemble(p)


def test_scalar_diffusion_keeps_equilibrium():
    p = ou_problem(diffusion="1+x**2/10", n=256)
    u_inf, _ = stationary_state(p)
    assert np.max(np.abs(assemble(p) @ u_inf)) < 1e-12


def test_stability_error_on_mass_tolerance():
    with pytest.raises(StabilityError):
        solve_fp(ou_problem(n=64, horizon=0.1), mass_tol=-1.0)


def test_problem_round_trip():
    p = FPProblem(2, GradientPlusFlux("(x**2+y**2)/2", ("-y", "x")), "exp(-(x**2+y**2))", box=(-6, 6), n=16)
    q = FPProblem.from_dict(p.to_dict())
    assert q.to_dict() == p.to_dict()
    assert FPProblem.from_dict(ou_problem().to_dict()).to_dict() == ou_problem().to_dict()


def test_initial_density_checks():
    with pytest.raises(ArgumentError):
        FPProblem(1, Gradient("x**2/2"), U0, normalize_u0=False).initial_density()
    with pytest.raises(ArgumentError):
        FPProblem(3, Gradient("x**2/2"), U0)


def test_grid_entropy_zero_at_equilibrium():
    p = ou_problem()
    u_inf, _ = stationary_state(p)
    for name in ("square", "log"):
        assert abs(grid_entropy(p, u_inf, u_inf, name)) < 1e-13


def test_periodic_heat_exact():
    heat = PeriodicHeat("2+cos(2*pi*x/20)", length=20.0, n=128)
    t, vals, ders = heat.solve([0.0, 1.0])
    k = 2 * math.pi / 20
    np.testing.assert_allclose(vals[1], 2 + math.exp(-k * k) * np.cos(k * heat.x), atol=1e-13)
    np.testing.assert_allclose(ders[1], -k * math.exp(-k * k) * np.sin(k * heat.x), atol=1e-13)


def test_algebraic_decay_holds():
    rep = algebraic_decay_check(PeriodicHeat("1+0.9*exp(-x**2)"), 1.5)
    assert not rep.violated and rep.alpha > 0
    assert rep.worst_ratio == pytest.approx(1.0)
    with pytest.raises(ArgumentError):
        algebraic_decay_check(PeriodicHeat("1+x**2"), 2.5)


@pytest.mark.parametrize(
    "mu,L,f",
    [
        (gauss_hermite(120), ornstein_uhlenbeck(1), "2+sin(x)*exp(-x**2/8)"),
        (build_gibbs("x**4/4-x**2", (-7, 7), 4001), gibbs_generator("x**4/4-x**2"), "1.5+x*exp(-x**2)"),
    ],
)
@pytest.mark.parametrize("phi", ["square", "log", catalog("power", p=1.4)])
def test_integration_by_parts(mu, L, f, phi):
    r = entropy_production_identity(mu, L, phi, f)
    assert r.energy > 1e-3
    assert r.residual <= 1e-8
