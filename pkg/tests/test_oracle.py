import math

import numpy as np
import pytest
from conftest import WELL_POSED
from helpers import random_poly
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from piestab.convert import convert
from piestab.oracle import DiscretizationError, discretize, l2_inner, spectral_abscissa, x_inner
from piestab.pde import PDESystem, diffusion_channels, load_pde
from piestab.pi_operator import pi_apply_poly
from piestab.polynomial import PolyMat
from piestab.quadrature import QuadratureRule


@pytest.mark.parametrize("order", [1, 4, 16, 64])
def test_quadrature_exact_on_monomials(order):
    a, b = -0.3, 1.7
    rule = QuadratureRule(a, b, order)
    for k in range(2 * order):
        exact = (b ** (k + 1) - a ** (k + 1)) / (k + 1)
        assert abs(rule.integrate(lambda s: s**k) - exact) <= 1e-13 * max(1.0, abs(exact))


def test_l2_examples(rule):
    one = PolyMat.constant([[1.0]])
    s = PolyMat.monomial(1, 0)
    assert l2_inner(one, one, rule) == pytest.approx(1.0, abs=1e-15)
    assert l2_inner(s, s, rule) == pytest.approx(1 / 3, abs=1e-15)
    f = lambda t: np.sin(3 * t)[None]
    assert abs(l2_inner(f, f, rule) - (0.5 - math.sin(6) / 12)) < 1e-10


def test_x_inner_examples():
    a, b = 0.5, 2.0
    s = PolyMat.from_dense(np.array([[[[0.0], [1.0]]]]), (a, b))
    s2 = PolyMat.from_dense(np.array([[[[0.0], [0.0], [1.0]]]]), (a, b))
    assert x_inner(s, s, 0, 1, 0) == pytest.approx(b - a, abs=1e-14)
    assert x_inner(s2, s2, 0, 0, 1) == pytest.approx(4 * (b - a), abs=1e-13)
    with pytest.raises(ValueError):
        x_inner(s, s, 1, 1, 0)


@given(st.sampled_from(WELL_POSED), st.integers(0, 2**32 - 1))
def test_unitarity(name, seed):
    sys = load_pde(name)
    T = convert(sys).T
    rng = np.random.default_rng(seed)
    xh, yh = random_poly(rng, sys.n, 4, sys.domain), random_poly(rng, sys.n, 4, sys.domain)
    rule = QuadratureRule(*sys.domain)
    lhs = x_inner(pi_apply_poly(T, xh), pi_apply_poly(T, yh), sys.n0, sys.n1, sys.n2, rule)
    assert abs(lhs - l2_inner(xh, yh, rule)) < 1e-8


def test_heat_spectrum():
    sys = load_pde("diffusion_dirichlet", **{"lambda": 0.0})
    lam = spectral_abscissa(sys, 200)
    assert abs(lam + math.pi**2) < 0.01 * math.pi**2


def test_heat_matrix_is_second_difference():
    disc = discretize(load_pde("diffusion_dirichlet", **{"lambda": 0.0}), 40)
    h = disc.grid[1] - disc.grid[0]
    M = disc.matrix * h**2
    inner = M[3:-3, 3:-3]
    assert np.allclose(np.diag(inner), -2.0) and np.allclose(np.diag(inner, 1), 1.0)
    assert disc.matrix.shape[0] == disc.kept.size


def test_example1_threshold():
    assert spectral_abscissa(load_pde("diffusion_dirichlet", **{"lambda": 9.0}), 200) < 0
    assert spectral_abscissa(load_pde("diffusion_dirichlet", **{"lambda": 11.0}), 200) > 0


def test_example2_threshold():
    f = lambda lam: spectral_abscissa(load_pde("diffusion_mixed", **{"lambda": lam}), 200)
    assert f(3.0) > 0
    root = brentq(f, 2.0, 3.0, xtol=1e-4)
    assert abs(root - 2.467) < 0.01 * 2.467


def test_transport_inflow_is_stable():
    assert spectral_abscissa(load_pde("transport_coupled"), 200) < 0


@pytest.mark.parametrize(
    "name", ["diffusion_dirichlet", "diffusion_mixed", "diffusion_variable", "diffusion_coupled3", "transport_coupled"]
)
def test_grid_refinement(name):
    sys = load_pde(name)
    coarse, fine = spectral_abscissa(sys, 100), spectral_abscissa(sys, 200)
    assert abs(coarse - fine) <= 0.05 * abs(fine)


def test_channel_family_spectrum():
    sys = diffusion_channels(3, reaction=1.0)
    assert spectral_abscissa(sys, 100) == pytest.approx(1.0 - math.pi**2, rel=0.01)


def test_unsolvable_boundary_is_reported():
    dom = (0.0, 1.0)
    # both relations constrain only x(a): no choice of boundary unknowns works
    B = np.array([[1.0, 0.0, 0.0, 0.0], [2.0, 0.0, 0.0, 0.0]])
    sys = PDESystem(0, 0, 1, PolyMat.zeros(1, 1, dom), PolyMat.zeros(1, 1, dom), PolyMat.identity(1, dom), B)
    with pytest.raises(DiscretizationError):
        discretize(sys, 40)
