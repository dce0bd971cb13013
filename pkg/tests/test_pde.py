import json

import numpy as np
import pytest
from conftest import WELL_POSED
from hypothesis import given
from hypothesis import strategies as st

from piestab.pde import (
    PDEFamily,
    PDESystem,
    PDEValidationError,
    build_T_const,
    build_T_perp,
    bundled_examples,
    check_wellposed,
    diffusion_channels,
    load_family,
    load_pde,
    serialize,
)
from piestab.polynomial import PolyMat


def prohibited_rows(n1, n2, a, b):
    """The three prohibited relations as boundary functionals, one per pattern and channel."""
    Tp = build_T_perp(n1, n2, a, b)
    return {
        "x1(a) = x1(b)": Tp[:n1],
        "x2(a) + (b-a) x2s(a) = x2(b)": Tp[n1:n1 + n2],
        "x2s(a) = x2s(b)": Tp[n1 + n2:],
    }


def test_lift_matrix_examples():
    assert np.array_equal(build_T_const(0, 1, 0.0, 1.0), [[1, 0], [1, 1], [0, 1], [0, 1]])
    assert np.array_equal(build_T_const(1, 0, 0.0, 1.0), [[1], [1]])
    T = build_T_const(0, 2, 0.0, 1.0)
    assert T.shape == (8, 4)
    assert np.allclose(build_T_const(0, 1, 0.0, 3.0)[1], [1, 3])


@pytest.mark.parametrize("n1,n2", [(1, 0), (0, 1), (2, 1), (1, 2)])
def test_perp_annihilates_lift(n1, n2):
    a, b = -0.5, 2.0
    assert np.allclose(build_T_perp(n1, n2, a, b) @ build_T_const(n1, n2, a, b), 0)


def test_dirichlet_report():
    rep = check_wellposed(load_pde("diffusion_dirichlet"))
    assert np.array_equal(rep.bt_matrix, [[1, 0], [1, 1]])
    assert rep.invertible and not rep.prohibited_bc_detected and rep.rank_of_B == 2


def test_beam_is_wellposed():
    sys = load_pde("eb_beam")
    rep = check_wellposed(sys)
    assert sys.B.shape == (4, 8) and rep.invertible and rep.rank_of_B == 4


def test_periodic_transport_is_prohibited():
    rep = check_wellposed(load_pde("transport_periodic"))
    assert np.array_equal(rep.bt_matrix, [[0.0]])
    assert not rep.invertible and rep.prohibited_bc_detected
    assert rep.prohibited_combinations == ("x1(a) = x1(b)",)


def test_dependent_rows_reported():
    sys = load_pde("diffusion_dirichlet")
    bad = sys.with_B(np.vstack([sys.B[0], sys.B[0]]))
    rep = check_wellposed(bad)
    assert not rep.invertible and rep.rank_deficient and rep.rank_of_B == 1
    assert not rep.prohibited_bc_detected


@pytest.mark.parametrize("name", WELL_POSED)
def test_bundled_examples_wellposed(name):
    sys = load_pde(name)
    rep = check_wellposed(sys)
    assert rep.invertible
    assert rep.rank_of_B == sys.n1 + 2 * sys.n2


@pytest.mark.parametrize("name", WELL_POSED)
def test_prohibited_patterns_flip_verdict(name):
    sys = load_pde(name)
    flipped = 0
    for label, rows in prohibited_rows(sys.n1, sys.n2, sys.a, sys.b).items():
        for w in rows:
            for r in range(sys.B.shape[0]):
                B = sys.B.copy()
                B[r] = w
                rep = check_wellposed(sys.with_B(B))
                assert not rep.invertible
                if rep.rank_of_B == B.shape[0]:
                    assert rep.prohibited_bc_detected
                    assert any(label.split("(")[0] in c for c in rep.prohibited_combinations)
                    flipped += 1
    assert flipped > 0


def test_roundtrip_all_bundled():
    for name in bundled_examples():
        sys = load_pde(name)
        again = load_pde(serialize(sys))
        assert again == sys


def test_roundtrip_through_text(tmp_path):
    sys = load_pde("timoshenko")
    path = tmp_path / "t.json"
    path.write_text(json.dumps(serialize(sys)))
    assert load_pde(path) == sys


@given(st.integers(1, 3), st.floats(-5, 5), st.floats(-2, 2), st.floats(0.1, 3))
def test_roundtrip_generated(n, reaction, a, width):
    sys = diffusion_channels(n, reaction, (a, a + width))
    assert load_pde(serialize(sys)) == sys


def test_parameters_are_exposed():
    fam = load_family("transport_coupled")
    assert set(fam.parameters) == {"sigma1", "sigma2", "r1", "r2", "q", "rho"}
    sys = fam.instantiate(q=0.7)
    assert sys.B[0, 1] == pytest.approx(-0.7)
    assert load_pde("diffusion_dirichlet", **{"lambda": 3.0}).A0.evaluate(0.2)[0, 0] == pytest.approx(3.0)


def test_example5_boundary_structure():
    sys = load_pde("transport_coupled")
    # x1(0) = q x2(0): columns are (x1(a)[0], x1(a)[1], x1(b)[0], x1(b)[1])
    assert np.allclose(sys.B[0], [1.0, -1.2, 0.0, 0.0])
    assert check_wellposed(sys).invertible


def test_parse_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"n0": 0,\n "n1": 1 "n2": 0}')
    with pytest.raises(PDEValidationError) as exc:
        load_pde(bad)
    assert "bad.json:2" in str(exc.value)
    doc = serialize(load_pde("diffusion_dirichlet"))
    doc["B"] = [[1, 0, 0]]
    with pytest.raises(PDEValidationError) as exc:
        load_pde(doc)
    assert "B" in str(exc.value)
    doc = serialize(load_pde("diffusion_dirichlet"))
    doc["A0"] = [{"row": 3, "col": 0, "coeffs": [1]}]
    with pytest.raises(PDEValidationError):
        load_pde(doc)
    with pytest.raises(PDEValidationError):
        load_family("diffusion_dirichlet").instantiate(mu=1.0)
    with pytest.raises(FileNotFoundError):
        load_pde("no_such_example")


def test_shape_validation_is_structured():
    dom = (0.0, 1.0)
    with pytest.raises(PDEValidationError) as exc:
        PDESystem(0, 0, 1, PolyMat.zeros(2, 2, dom), PolyMat.zeros(1, 1, dom), PolyMat.zeros(1, 1, dom), np.zeros((2, 4)))
    assert any(f == "A0" for f, _ in exc.value.problems)


def test_scaled_system_has_same_wellposedness():
    sys = load_pde("diffusion_coupled3", R=100.0)
    w = np.array([1.0, 0.1, 0.01])
    z = sys.scaled(w)
    assert check_wellposed(z).invertible
    assert np.allclose(z.A0.evaluate(0.3), np.diag(w) @ sys.A0.evaluate(0.3) @ np.diag(1 / w))


def test_family_metadata():
    fam = load_family("eb_beam")
    assert isinstance(fam, PDEFamily) and fam.name == "eb_beam" and fam.description
