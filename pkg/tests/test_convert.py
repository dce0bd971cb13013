import numpy as np
import pytest
from conftest import WELL_POSED
from helpers import random_poly, sup
from hypothesis import given
from hypothesis import strategies as st

from piestab.convert import (
    IllPosedError,
    PIESystem,
    build_A,
    build_A_direct,
    build_G,
    convert,
    verify_conversion,
)
from piestab.oracle import _fundamental_part
from piestab.pde import PDESystem, load_pde
from piestab.pi_operator import PIOperator, pi_apply_numeric, pi_apply_poly
from piestab.polynomial import PolyMat, poly_int

S = PolyMat.monomial(1, 0)
TH = PolyMat.monomial(0, 1)


def poly(*pairs):
    return PolyMat.from_entries(1, 1, {(0, 0): dict(pairs)})


@pytest.fixture(scope="module")
def pies():
    return {name: (load_pde(name), convert(load_pde(name))) for name in WELL_POSED}


def test_beam_parameters():
    c = 2.5
    pie = convert(load_pde("eb_beam", c=c))
    z = PolyMat.zeros(1, 1)
    assert pie.T.N0.is_zero
    assert pie.T.N1.allclose(PolyMat.bmat([[S - TH, z], [z, z]]))
    assert pie.T.N2.allclose(PolyMat.bmat([[z, z], [z, TH - S]]))
    assert pie.A.allclose(PIOperator.multiplier(PolyMat.constant([[0.0, -c], [1.0, 0.0]])))


def test_dirichlet_parameters():
    G = build_G(load_pde("diffusion_dirichlet"))
    assert G.G1.allclose(poly(((0, 1), -1.0), ((1, 1), 1.0)))  # -theta (1 - s)
    assert G.G2.allclose(poly(((1, 0), -1.0), ((1, 1), 1.0)))  # -s (1 - theta)
    assert G.G0.is_zero


def test_reaction_only_system_is_identity():
    dom = (0.0, 1.0)
    sys = PDESystem(2, 0, 0, PolyMat.constant([[-1.0, 0.5], [0.0, -2.0]], dom), PolyMat.zeros(2, 0, dom),
                    PolyMat.zeros(2, 0, dom), np.zeros((0, 0)))
    pie = convert(sys)
    assert pie.T == PIOperator.identity(2)
    assert pie.A == PIOperator.multiplier(sys.A0)
    assert pie.H.shape == (0, 2)


def test_zero_dynamics_give_zero_generator():
    sys = load_pde("diffusion_dirichlet")
    dom = sys.domain
    zero = PDESystem(0, 0, 1, PolyMat.zeros(1, 1, dom), PolyMat.zeros(1, 1, dom), PolyMat.zeros(1, 1, dom), sys.B)
    A = convert(zero).A
    assert all(p.is_zero for p in A.params)


def test_dirichlet_generator_action(rule, rng):
    lam = 4.0
    pie = convert(load_pde("diffusion_dirichlet", **{"lambda": lam}))
    xh = random_poly(rng, 1, 4)
    got = pi_apply_numeric(pie.A, xh, rule)
    want = lam * pi_apply_numeric(pie.T, xh, rule) + xh.evaluate(rule.nodes)[:, 0]
    assert sup(got - want) < 1e-10


def test_ill_posed_raises():
    with pytest.raises(IllPosedError):
        convert(load_pde("transport_periodic"))


@pytest.mark.parametrize("name", WELL_POSED)
def test_routes_agree(name, pies):
    sys, pie = pies[name]
    assert build_A(sys).allclose(build_A_direct(sys), atol=1e-10)


@pytest.mark.parametrize("name", WELL_POSED)
def test_parameter_degrees(name, pies):
    sys, pie = pies[name]
    ds, dt = pie.T.degree()
    assert ds <= 1 and dt <= 1
    selector = np.diag([1.0] * sys.n0 + [0.0] * (sys.n1 + sys.n2))
    assert pie.T.N0 == PolyMat.constant(selector, sys.domain)
    deg_A = max(max(P.degree()) for P in (sys.A0, sys.A1, sys.A2))
    assert max(pie.A.degree()) <= max(deg_A, 0) + 1


@pytest.mark.parametrize("name", WELL_POSED)
def test_derivative_map(name, pies, rng):
    """``H xh`` is the first derivative of the H1 and H2 parts of ``T xh``."""
    sys, pie = pies[name]
    xh = random_poly(rng, sys.n, 3, sys.domain)
    x = pi_apply_poly(pie.T, xh)
    d = x.block(slice(sys.n0, None), slice(None)).diff("s")
    assert pi_apply_poly(pie.H, xh).allclose(d, atol=1e-10)


@pytest.mark.parametrize("name", ["eb_beam", "diffusion_dirichlet", "wave_damped_boundary", "timoshenko"])
def test_verify_conversion_passes(name, pies):
    sys, pie = pies[name]
    rep = verify_conversion(sys, pie, trials=20)
    assert rep.passed, rep.to_dict()


def _flip_upper_kernel(sys, pie):
    T = pie.T
    return PIESystem(PIOperator(T.N0, T.N1, -1.0 * T.N2), pie.A, pie.H, sys)


@pytest.mark.parametrize("name", ["diffusion_mixed", "wave_damped_boundary"])
def test_corrupted_kernel_fails_boundary_check(name, pies):
    sys, pie = pies[name]
    rep = verify_conversion(sys, _flip_upper_kernel(sys, pie), trials=5)
    assert not rep.passed and rep.bc_residual > 1e-2


def test_corrupted_dirichlet_kernel_fails_reconstruction(pies):
    # both kernels vanish at the clamped ends, so the flip keeps the boundary values
    sys, pie = pies["diffusion_dirichlet"]
    rep = verify_conversion(sys, _flip_upper_kernel(sys, pie), trials=5)
    assert not rep.passed and rep.reconstruction_error > 1e-2 and rep.unitarity_error > 1e-2


@pytest.mark.parametrize("name", WELL_POSED)
def test_reconstruction_inverts(name, pies, rng):
    """``T`` applied to the fundamental part of ``x = T xh`` returns ``x``."""
    sys, pie = pies[name]
    x = pi_apply_poly(pie.T, random_poly(rng, sys.n, 3, sys.domain))
    again = pi_apply_poly(pie.T, _fundamental_part(x, sys.n0, sys.n1, sys.n2))
    assert again.allclose(x, atol=1e-10)


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=7), st.floats(-1, 1), st.floats(0.2, 2))
def test_fundamental_theorem_identities(c, a, width):
    dom = (a, a + width)
    x = PolyMat.from_dense(np.array(c).reshape(1, 1, -1, 1), dom)
    xs, xss = x.diff("s"), x.diff("s").diff("s")
    xa, xsa = x.subs("s", "a"), xs.subs("s", "a")
    assert (xa + poly_int(xs.swap(), "theta", "a", "s")).allclose(x, atol=1e-11)
    assert (xsa + poly_int(xss.swap(), "theta", "a", "s")).allclose(xs, atol=1e-11)
    kernel = PolyMat.from_dense(np.array([[[[0.0, -1.0], [1.0, 0.0]]]]), dom)  # s - eta
    rem = poly_int(kernel @ xss.swap(), "theta", "a", "s")
    lin = PolyMat.from_dense(np.array([[[[-a], [1.0]]]]), dom)  # s - a
    assert (xa + xsa @ lin + rem).allclose(x, atol=1e-10)
