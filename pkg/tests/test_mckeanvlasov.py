import math

import numpy as np
import pytest

from phientropy.errors import ArgumentError, StabilityError
from phientropy.fokkerplanck import FPProblem, Gradient, solve_fp
from phientropy.mckeanvlasov import (
    MKVProblem,
    PropagationSchedule,
    _mean_force,
    check_propagation,
    convexity_audit,
    inhomogeneous_commutation,
    interaction,
    simulate_particles,
    solve_mkv_pde,
)

SMALL = dict(n=400, horizon=2.0, dt=1e-2, save_every=10)


@pytest.fixture(scope="module")
def cubic_solution():
    return solve_mkv_pde(MKVProblem(**SMALL))


def test_interactions_and_audit():
    a = convexity_audit("x**2/2", interaction("cubic"))
    assert a["rho"] == pytest.approx(1.0) and a["w_convex"]
    b = convexity_audit("x**2/2", interaction("cubic_literal"))
    assert not b["w_convex"] and b["w_witness"] < 0
    assert convexity_audit("x**4/4-x**2/2", interaction("none"))["rho"] == pytest.approx(-1.0)
    with pytest.raises(ArgumentError):
        interaction("sextic")


def test_no_interaction_matches_fokker_planck():
    p = MKVProblem(W_kind="none", **SMALL)
    s = solve_mkv_pde(p)
    fp = FPProblem(1, Gradient("x**2/2"), p.u0, box=p.box, n=p.n, horizon=p.horizon, dt=p.dt, save_every=p.save_every)
    ref = solve_fp(fp, phis=())
    np.testing.assert_allclose(s.densities, ref.densities, atol=1e-12)


def test_pde_mass_and_symmetry():
    p = MKVProblem(u0="exp(-(x-1)**2)+exp(-(x+1)**2)", **SMALL)
    s = solve_mkv_pde(p)
    np.testing.assert_allclose(s.mass, 1.0, atol=1e-12)
    np.testing.assert_allclose(s.densities, s.densities[:, ::-1], atol=1e-12)


def test_quadratic_interaction_moments():
    # mean' = -mean and var' = -2 (1 + k) var + 2 for W = k x^2/2
    k = 1.0
    p = MKVProblem(W_kind="quadratic", **dict(SMALL, n=800))
    s = solve_mkv_pde(p)
    m, v = s.moments()
    t = s.times
    np.testing.assert_allclose(m, np.exp(-t), atol=2e-4)
    vinf = 1 / (1 + k)
    np.testing.assert_allclose(v, vinf + (0.25 - vinf) * np.exp(-2 * (1 + k) * t), atol=2e-4)


def test_cubic_moments(cubic_solution):
    m, v = cubic_solution.moments()
    # W' is odd, so the interaction leaves the mean alone
    np.testing.assert_allclose(m, np.exp(-cubic_solution.times), atol=5e-4)
    # u0 is narrower than the equilibrium, so the variance rises monotonically
    assert np.all(np.diff(v) > 0) and v[-1] < 1.0


def test_two_quadratic_particles_exact():
    p = MKVProblem(W_kind="quadratic", horizon=0.5, particle_dt=1e-2)
    x0 = np.array([2.0, -1.0])
    tr = simulate_particles(p, x0=x0, diffusion=False, times=[0.0, 0.5])
    n = 50
    mean = 0.5 * (1 - 0.01) ** n
    # the pair force is (x_i - mean) = (x_i - x_j)/2, so the gap contracts by 1 - 2 dt
    gap = 3.0 * (1 - 2 * 0.01) ** n
    np.testing.assert_allclose(tr.positions[-1], [mean + gap / 2, mean - gap / 2], rtol=1e-12)


def test_zero_diffusion_no_interaction():
    p = MKVProblem(W_kind="none", horizon=1.0, particle_dt=1e-2)
    x0 = np.linspace(-2, 2, 7)
    tr = simulate_particles(p, x0=x0, diffusion=False, times=[1.0])
    np.testing.assert_allclose(tr.positions[-1], x0 * 0.99**100, rtol=1e-12)


def test_cubic_fast_path_matches_pairwise():
    rng = np.random.default_rng(3)
    xs = rng.normal(size=700)
    fast = _mean_force(MKVProblem(), xs)
    brute = _mean_force(MKVProblem(W=interaction("cubic").to_string()), xs)
    np.testing.assert_allclose(fast, brute, atol=1e-9)


def test_particle_streams_reproducible():
    p = MKVProblem(W_kind="none", horizon=0.1, particle_dt=1e-2)
    a = simulate_particles(p, seed=7, n_particles=5)
    b = simulate_particles(p, seed=7, n_particles=5)
    np.testing.assert_array_equal(a.positions, b.positions)
    c = simulate_particles(p, seed=8, n_particles=5)
    assert not np.array_equal(a.positions, c.positions)
    # without interaction each particle only sees its own stream
    d = simulate_particles(p, seed=7, n_particles=10)
    np.testing.assert_array_equal(d.positions[:, :5], a.positions)


def test_particle_blow_up_detected():
    p = MKVProblem(V="x**4", W_kind="none", horizon=1.0, particle_dt=0.5)
    with pytest.raises(StabilityError):
        simulate_particles(p, x0=np.array([3.0, -3.0]), diffusion=False)


def test_pde_particles_agree_small():
    p = MKVProblem(horizon=1.0, n=400)
    s = solve_mkv_pde(p)
    tr = simulate_particles(p, seed=1, n_particles=2000, times=[0.5, 1.0])
    pm, pv = s.moments()
    qm, qv = tr.moments()
    sm, sv = tr.standard_errors()
    for i, t in enumerate(tr.times):
        k = int(np.argmin(np.abs(s.times - t)))
        assert abs(pm[k] - qm[i]) <= 4 * sm[i]
        assert abs(pv[k] - qv[i]) <= 4 * sv[i]


def test_propagation_small(cubic_solution):
    rep = check_propagation(cubic_solution.problem, "square", times=(0.5, 1.0, 2.0), solution=cubic_solution)
    assert rep.precondition_holds and not rep.violated
    assert rep.schedule.c0 == pytest.approx(0.125, abs=1e-6)


def test_schedule_limits():
    sch = PropagationSchedule(0.125, 1.0)
    assert sch(0.0) == 0.125
    assert sch(50.0) == pytest.approx(0.5)
    assert PropagationSchedule(0.2, 0.0)(3.0) == pytest.approx(3.2)


def test_inhomogeneous_commutation(cubic_solution):
    r = inhomogeneous_commutation(cubic_solution, "sin(x)", 0.5, 1.0, 0.3, phi="square", n=1024, dt=1e-2)
    assert not r.violated and not r.details["local_phi"]["violated"]
    eq = inhomogeneous_commutation(cubic_solution, "sin(x)", 1.0, 1.0, 0.3)
    assert eq.slack == pytest.approx(0.0, abs=1e-14)


def test_drift_function_interpolates(cubic_solution):
    a = cubic_solution.drift_function()
    x = cubic_solution.x
    np.testing.assert_allclose(a(x, 0.0), cubic_solution.drift[0])
    np.testing.assert_allclose(a(x, cubic_solution.times[-1]), cubic_solution.drift[-1])


def test_problem_round_trip():
    p = MKVProblem(W="x**4/4", n=100)
    q = MKVProblem.from_dict(p.to_dict())
    assert q.to_dict() == p.to_dict()
    assert q.W_kind == "custom"
