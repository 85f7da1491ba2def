import numpy as np
import pytest
import sympy as sp

from phientropy.calculus import (
    CLOSED_FORM,
    DEFINITION,
    AuditGrid,
    ConstantMatrix,
    DiffusionGenerator,
    ScalarField,
    augmented_generator,
    cd_rho_estimate,
    diffusion_identity_check,
    fokker_planck_generator,
    gamma,
    gamma2,
    gamma_bilinear,
    gamma_from_definition,
    generator_value,
    gibbs_generator,
    heat,
    ornstein_uhlenbeck,
    pointwise_rho,
)
from phientropy.errors import ArgumentError, DomainError
from phientropy.jets import parse_expression
from phientropy.phi import catalog

xs = sp.symbols("x")


def sym_gamma2_scalar(d, a, f):
    """Gamma-2 of L = d f'' - a f' by the iterated definition, in sympy."""
    L = lambda g: d * sp.diff(g, xs, 2) - a * sp.diff(g, xs)
    G = lambda g, h: sp.Rational(1, 2) * (L(g * h) - g * L(h) - h * L(g))
    return sp.Rational(1, 2) * L(G(f, f)) - G(f, L(f))


def test_gamma2_scalar_against_sympy():
    d, a, f = 1 + xs**2 / 4, xs**3 / 3 + xs, sp.sin(xs) + xs**2 / 5
    L = DiffusionGenerator(1, ScalarField(parse_expression("1+x**2/4")), (parse_expression("x**3/3+x"),))
    pts = np.linspace(-2, 2, 11)
    want = sp.lambdify(xs, sym_gamma2_scalar(d, a, f), "numpy")(pts)
    fj = parse_expression("sin(x)+x**2/5")
    for method in (DEFINITION, CLOSED_FORM):
        np.testing.assert_allclose(gamma2(L, fj, pts, method), want, rtol=1e-10, atol=1e-10)


def test_gamma_forms_agree():
    L = gibbs_generator("x**4/4-x**2/2")
    f = "exp(-x**2/3)*cos(x)"
    pts = np.linspace(-3, 3, 21)
    np.testing.assert_allclose(gamma(L, f, pts), gamma_from_definition(L, f, pts), atol=1e-12)
    np.testing.assert_allclose(gamma_bilinear(L, f, f, pts), gamma(L, f, pts), atol=1e-12)


def test_ou_generator_on_hermite():
    # He2 = x^2 - 1 is an eigenfunction with eigenvalue -2
    L = ornstein_uhlenbeck(1)
    pts = np.linspace(-4, 4, 17)
    np.testing.assert_allclose(generator_value(L, "x**2-1", pts), -2 * (pts**2 - 1), atol=1e-12)


def test_gamma2_2d_constant_matrix():
    D = np.array([[2.0, 0.5], [0.5, 1.0]])
    L = DiffusionGenerator(2, ConstantMatrix(D), (parse_expression("x+y**3/3"), parse_expression("sin(x)+y")))
    f = parse_expression("exp(-(x**2+y**2)/4)*(x+2*y)")
    pts = np.array([[0.1, 0.3], [1.0, -1.5], [-0.7, 0.8]])
    np.testing.assert_allclose(gamma2(L, f, pts, DEFINITION), gamma2(L, f, pts, CLOSED_FORM), rtol=1e-10, atol=1e-12)


def test_gamma2_2d_scalar_field():
    L = DiffusionGenerator(2, ScalarField(parse_expression("1+(x**2+y**2)/10")), (parse_expression("x*y"), parse_expression("y+x**2/2")))
    f = parse_expression("cos(x)*y+x**3/6")
    pts = np.array([[0.1, 0.3], [1.0, -1.5], [-0.7, 0.8]])
    np.testing.assert_allclose(gamma2(L, f, pts, DEFINITION), gamma2(L, f, pts, CLOSED_FORM), rtol=1e-10, atol=1e-12)


def test_cd_presets():
    assert abs(cd_rho_estimate(ornstein_uhlenbeck(1)).rho_star - 1) < 1e-12
    assert abs(cd_rho_estimate(heat(1)).rho_star) < 1e-12
    assert abs(cd_rho_estimate(ornstein_uhlenbeck(2)).rho_star - 1) < 1e-12


def test_cd_double_well_negative():
    est = cd_rho_estimate(gibbs_generator("x**4/4-x**2"), AuditGrid(((-3.0, 3.0),), 0.01))
    assert est.rho_star == pytest.approx(-2.0, abs=1e-12)
    assert est.witness_point == (0.0,)


def test_cd_is_tight_for_gamma2():
    # Gamma2 >= rho Gamma, with equality for linear f under OU
    L = ornstein_uhlenbeck(1)
    pts = np.linspace(-3, 3, 31)
    np.testing.assert_allclose(gamma2(L, "x", pts), gamma(L, "x", pts), atol=1e-12)
    f = "sin(x)+x**3/10"
    assert np.all(gamma2(L, f, pts) - gamma(L, f, pts) >= -1e-12)


def test_degenerate_augmented_generator():
    L = augmented_generator([[1.0]], ["x*y"])
    rho = pointwise_rho(L, np.array([[0.0, 0.0], [1.0, 0.5]]))
    assert rho.shape == (2,)


def test_fokker_planck_generator_drift():
    L = fokker_planck_generator("(x**2+y**2)/2", flux=("-y", "x"))
    v = generator_value(L, "x", np.array([0.5, 2.0]))
    # drift = grad V - F = (x + y, y - x)
    assert v == pytest.approx(-(0.5 + 2.0))


def test_diffusion_chain_rule():
    L = gibbs_generator("x**2/2+cos(x)")
    res = diffusion_identity_check(L, catalog("power", p=1.5), "1+exp(-x**2)", np.linspace(-3, 3, 25))
    assert np.max(np.abs(np.asarray(res, dtype=float))) < 1e-10


def test_round_trip_dict():
    L = DiffusionGenerator(1, ScalarField(parse_expression("1+x**2")), (parse_expression("x"),), domain=((-5.0, 5.0),))
    L2 = DiffusionGenerator.from_dict(L.to_dict())
    assert L2.to_dict() == L.to_dict()


def test_domain_and_argument_errors():
    L = DiffusionGenerator(1, ConstantMatrix(np.eye(1)), (parse_expression("x"),), domain=((-1.0, 1.0),))
    with pytest.raises(DomainError):
        gamma(L, "x", 2.0)
    with pytest.raises(ArgumentError):
        ConstantMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ArgumentError):
        gamma2(ornstein_uhlenbeck(1), "x", 0.0, method="bogus")
    with pytest.raises(ArgumentError):
        cd_rho_estimate(heat(1), AuditGrid(((1.0, 0.0),), 0.1))
