import math

import numpy as np
import pytest
import sympy as sp

from phientropy.errors import ArgumentError, DomainError
from phientropy.jets import X, Y, Jet, constant, cos, exp, log, parse_expression, sin, sqrt

xs, ys = sp.symbols("x y")

CASES_1D = [
    ("exp(-x**2)*cos(3*x)", sp.exp(-xs**2) * sp.cos(3 * xs)),
    ("log(1+x**2)/(2+sin(x))", sp.log(1 + xs**2) / (2 + sp.sin(xs))),
    ("sqrt(1+x**2)**3", sp.sqrt(1 + xs**2) ** 3),
    ("(x**2+1)**(-0.7)", (xs**2 + 1) ** sp.Rational(-7, 10)),
]


@pytest.mark.parametrize("text,expr", CASES_1D)
def test_jet_matches_sympy_1d(text, expr):
    f = parse_expression(text)
    pts = np.array([-1.3, -0.2, 0.0, 0.7, 2.1])
    J = f.jet(pts, 4, 1)
    for k in range(5):
        dk = sp.lambdify(xs, sp.diff(expr, xs, k), "numpy")
        np.testing.assert_allclose(J.tensor(k), dk(pts), rtol=1e-12, atol=1e-12)


def test_jet_matches_sympy_2d():
    f = exp(-(X**2) - 0.5 * Y**2) * (1 + X * Y) + cos(X - Y)
    expr = sp.exp(-xs**2 - ys**2 / 2) * (1 + xs * ys) + sp.cos(xs - ys)
    pts = np.array([[0.3, -0.4], [1.2, 0.5], [-0.7, 2.0]])
    J = f.jet(pts, 4, 2)
    for alpha in [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 1), (2, 2), (0, 4)]:
        d = sp.diff(expr, xs, alpha[0], ys, alpha[1])
        want = sp.lambdify((xs, ys), d, "numpy")(pts[:, 0], pts[:, 1])
        np.testing.assert_allclose(J.derivative(alpha), want, rtol=1e-11, atol=1e-12)


def test_hessian_and_gradient_shapes():
    f = X**2 * Y + sin(Y)
    pts = np.array([[1.0, 2.0], [0.5, -1.0]])
    J = f.jet(pts, 2, 2)
    assert J.gradient().shape == (2, 2)
    H = J.hessian()
    assert H.shape == (2, 2, 2)
    np.testing.assert_allclose(H[0, 1], 2 * pts[:, 0])
    np.testing.assert_allclose(H[1, 1], -np.sin(pts[:, 1]))


def test_parse_round_trip():
    f = parse_expression("exp(-x**2/2)*(1+0.5*cos(x))/sqrt(2*pi)")
    g = parse_expression(f.to_string())
    pts = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(f(pts), g(pts), rtol=1e-15)
    assert f.same_as(g)


def test_symbolic_diff_agrees_with_jet():
    f = parse_expression("x**3*exp(sin(x))")
    pts = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(f.diff(0)(pts), f.jet(pts, 1, 1).d1, rtol=1e-13)


def test_parse_rejects_unknown_names():
    with pytest.raises(ArgumentError):
        parse_expression("z + 1")
    with pytest.raises(ArgumentError):
        parse_expression("__import__('os')")


def test_domain_errors():
    with pytest.raises(DomainError):
        log(X)(np.array([1.0, -1.0]))
    with pytest.raises(DomainError):
        sqrt(X - 1.0)(0.0)


def test_jet_arithmetic_identities():
    pts = np.linspace(0.2, 3.0, 7)
    J = Jet.variable(pts, 0, 1, 4)
    one = (J.sin() ** 2 + J.cos() ** 2)
    np.testing.assert_allclose(one.tensor(0), 1.0)
    for k in range(1, 5):
        np.testing.assert_allclose(one.tensor(k), 0.0, atol=1e-12)
    e = J.log().exp()
    for k in range(2):
        np.testing.assert_allclose(e.tensor(k), [pts, np.ones_like(pts)][k], rtol=1e-13)
    assert math.isclose(float(constant(2.5)(0.0)), 2.5)
