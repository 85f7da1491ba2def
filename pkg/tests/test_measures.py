import math

import mpmath as mp
import numpy as np
import pytest

from phientropy.errors import ArgumentError, DomainError, IntegrationError, TruncationError
from phientropy.measures import (
    QuadratureMeasure,
    boltzmann_entropy,
    build_gibbs,
    gauss_hermite,
    grid_measure,
    integrate,
    variance,
)


def test_gaussian_moments():
    mu = gauss_hermite(200)
    assert integrate(mu, 1.0) == pytest.approx(1.0, abs=1e-14)
    assert integrate(mu, "x**2") == pytest.approx(1.0, abs=1e-13)
    assert integrate(mu, "x**4") == pytest.approx(3.0, abs=1e-12)
    assert integrate(mu, "cos(x)") == pytest.approx(math.exp(-0.5), abs=1e-14)
    assert variance(mu, "x") == pytest.approx(1.0, abs=1e-13)


def test_gaussian_2d():
    mu = gauss_hermite(60, dim=2)
    assert integrate(mu, "x**2*y**2") == pytest.approx(1.0, abs=1e-12)
    assert integrate(mu, "x*y") == pytest.approx(0.0, abs=1e-13)


def test_gibbs_normaliser_against_mpmath():
    mu = build_gibbs("x**4-3*x**2", box=(-6, 6), n=4001)
    z = mp.quad(lambda t: mp.exp(-(t**4 - 3 * t**2)), [-mp.inf, 0, mp.inf])
    assert mu.log_z == pytest.approx(float(mp.log(z)), abs=1e-10)
    m2 = mp.quad(lambda t: t**2 * mp.exp(-(t**4 - 3 * t**2)), [-mp.inf, 0, mp.inf]) / z
    assert integrate(mu, "x**2") == pytest.approx(float(m2), rel=1e-10)


def test_gibbs_2d_mass():
    mu = build_gibbs("(x**2+y**2)/2", box=(-9, 9), n=241)
    assert mu.total_mass() == pytest.approx(1.0, abs=1e-14)
    assert mu.log_z == pytest.approx(math.log(2 * math.pi), abs=1e-10)


def test_truncation_detected():
    with pytest.raises(TruncationError):
        build_gibbs("x**2/2", box=(-2, 2), n=401)


def test_entropy_against_mpmath():
    mu = gauss_hermite(200)
    # Ent(e^{x - 1/2}) = 1/2 under the standard Gaussian
    assert boltzmann_entropy(mu, "exp(x-0.5)") == pytest.approx(0.5, abs=1e-12)
    ent = mp.quad(lambda t: (1 + mp.sin(t) ** 2) * mp.log(1 + mp.sin(t) ** 2) * mp.npdf(t), [-mp.inf, mp.inf])
    m = mp.quad(lambda t: (1 + mp.sin(t) ** 2) * mp.npdf(t), [-mp.inf, mp.inf])
    assert boltzmann_entropy(mu, "1+sin(x)**2") == pytest.approx(float(ent - m * mp.log(m)), abs=1e-12)


def test_entropy_clamp_reports_nodes():
    mu = QuadratureMeasure(np.array([0.0, 1.0, 2.0]), np.ones(3) / 3, np.ones(3))
    ent, clamped = boltzmann_entropy(mu, np.array([0.0, 1.0, 2.0]), return_clamped=True)
    assert clamped.tolist() == [0]
    assert ent > 0
    with pytest.raises(DomainError):
        boltzmann_entropy(mu, np.array([-1.0, 1.0, 2.0]))


def test_csv_round_trip():
    mu = build_gibbs("x**2/2", box=(-10, 10), n=101)
    back = QuadratureMeasure.from_csv(mu.to_csv(), kind="gibbs")
    np.testing.assert_array_equal(back.nodes, mu.nodes)
    np.testing.assert_array_equal(back.masses, mu.masses)


def test_errors():
    with pytest.raises(ArgumentError):
        gauss_hermite(0)
    with pytest.raises(ArgumentError):
        QuadratureMeasure(np.zeros(2), np.array([-1.0, 1.0]), np.ones(2))
    mu = gauss_hermite(20)
    with pytest.raises(IntegrationError):
        integrate(mu, lambda x: np.where(x > 0, np.inf, 0.0))
    with pytest.raises(IntegrationError):
        grid_measure([np.linspace(0, 1, 5)], np.array([0.0, np.nan, 0, 0, 0]), boundary_tol=None)


def test_high_order_rule_is_finite():
    mu = gauss_hermite(600)
    assert np.all(np.isfinite(mu.weights))
    assert integrate(mu, "x**2") == pytest.approx(1.0, abs=1e-12)
