import numpy as np
import pytest
import scipy.sparse as sp

from piestab.convert import convert
from piestab.lpi import SDPProblem, enforce_op_eq, to_standard
from piestab.pde import load_pde
from piestab.pi_operator import PIOperator
from piestab.polynomial import PolyMat
from piestab.sdp import (
    StandardSDP,
    Status,
    export_sdpa,
    inconsistent,
    independent_rows,
    read_sdpa,
    reduce_faces,
    solve_embedded,
)
from piestab.stability import StabilityQuery, _assemble


def build(sizes, rows):
    """``rows`` is a list of ``({(block, i, j): weight}, rhs)`` over upper-triangle entries."""
    offs = np.concatenate([[0], np.cumsum([m * (m + 1) // 2 for m in sizes])]).astype(int)
    r, c, v, b = [], [], [], []
    for e, (terms, rhs) in enumerate(rows):
        for (k, i, j), w in terms.items():
            i, j = min(i, j), max(i, j)
            r.append(e)
            c.append(offs[k] + j * (j + 1) // 2 + i)
            v.append(w)
        b.append(rhs)
    W = sp.csr_array((v, (r, c)), shape=(len(rows), int(offs[-1])))
    return StandardSDP(tuple(sizes), W, np.array(b, dtype=float))


TINY = [
    ("scalar pinned to one", [1], [({(0, 0, 0): 1.0}, 1.0)], Status.FEASIBLE),
    ("scalar pinned negative", [1], [({(0, 0, 0): 1.0}, -1.0)], Status.INFEASIBLE),
    ("correlation too large", [2], [({(0, 0, 0): 1.0}, 1.0), ({(0, 1, 1): 1.0}, 1.0), ({(0, 0, 1): 1.0}, 2.0)], Status.INFEASIBLE),
    ("valid correlation", [2], [({(0, 0, 0): 1.0}, 1.0), ({(0, 1, 1): 1.0}, 1.0), ({(0, 0, 1): 1.0}, 0.5)], Status.FEASIBLE),
    ("zero diagonal with coupling", [2], [({(0, 0, 0): 1.0}, 0.0), ({(0, 0, 1): 1.0}, 1.0)], Status.INFEASIBLE),
    ("zero diagonal without coupling", [2], [({(0, 0, 0): 1.0}, 0.0), ({(0, 1, 1): 1.0}, 1.0)], Status.FEASIBLE),
    ("two blocks negative sum", [1, 1], [({(0, 0, 0): 1.0, (1, 0, 0): 1.0}, -1.0)], Status.INFEASIBLE),
    ("two blocks balanced", [1, 1], [({(0, 0, 0): 1.0, (1, 0, 0): -1.0}, 0.0), ({(0, 0, 0): 1.0, (1, 0, 0): 1.0}, 2.0)], Status.FEASIBLE),
    ("zero trace", [3], [({(0, 0, 0): 1.0, (0, 1, 1): 1.0, (0, 2, 2): 1.0}, 0.0)], Status.FEASIBLE),
    ("zero trace with off-diagonal", [3], [({(0, 0, 0): 1.0, (0, 1, 1): 1.0, (0, 2, 2): 1.0}, 0.0), ({(0, 0, 2): 1.0}, 1.0)], Status.INFEASIBLE),
    ("repeated equality", [2], [({(0, 0, 0): 1.0}, 1.0), ({(0, 0, 0): 2.0}, 2.0), ({(0, 1, 1): 1.0}, 3.0)], Status.FEASIBLE),
    ("conflicting equalities", [2], [({(0, 0, 0): 1.0}, 1.0), ({(0, 0, 0): 1.0}, 2.0)], Status.INFEASIBLE),
]


@pytest.mark.parametrize("label,sizes,rows,want", TINY, ids=[t[0] for t in TINY])
def test_tiny_library(label, sizes, rows, want):
    res = solve_embedded(build(sizes, rows))
    assert res.status == want
    if want == Status.FEASIBLE:
        assert res.primal_residual <= 1e-7 and res.min_eigenvalue >= -1e-7


def test_pinned_scalar_value():
    res = solve_embedded(build([1], [({(0, 0, 0): 1.0}, 1.0)]))
    assert res.blocks[0][0, 0] == pytest.approx(1.0, abs=1e-8)


def test_trace_constraint_standard_form():
    prob = SDPProblem()
    ids = prob.add_psd_block(2)
    X = PolyMat.variables(ids)
    trace = PIOperator.multiplier(PolyMat.from_entries(1, 1, {(0, 0): {(0, 0): X.entry(0, 0)[(0, 0)] + X.entry(1, 1)[(0, 0)]}}))
    enforce_op_eq(prob, trace, PIOperator.identity(1))
    std = to_standard(prob)
    assert std.nvars == 3 and std.neq == 1
    assert np.array_equal(std.W.toarray(), [[1.0, 0.0, 1.0]]) and np.array_equal(std.b, [1.0])


def test_empty_standard_form():
    std = to_standard(SDPProblem())
    assert std.block_sizes == () and std.neq == 0 and std.nvars == 0
    assert solve_embedded(std).status == Status.FEASIBLE


def test_example1_sizes():
    q = StabilityQuery(convert(load_pde("diffusion_dirichlet")), d=1)
    prob, _, _ = _assemble(q)
    std = to_standard(prob)
    # P at degree 1: 2 + 2*4; the matched cone at degree 2: 3 + 2*9
    assert std.block_sizes == (10, 10, 21, 21)
    assert std.nvars == 2 * 55 + 2 * 231
    assert 0 < std.neq <= prob.n_equalities


def test_sdpa_roundtrip(tmp_path):
    for k, (_, sizes, rows, _) in enumerate(TINY):
        sdp = build(sizes, rows)
        path = export_sdpa(sdp, tmp_path / f"t{k}.dat-s")
        assert read_sdpa(path) == sdp
    q = StabilityQuery(convert(load_pde("eb_beam")), d=1, delta=0.0)
    std = to_standard(_assemble(q)[0])
    assert read_sdpa(export_sdpa(std, tmp_path / "beam.dat-s")) == std


def test_sdpa_text_layout(tmp_path):
    sdp = build([2], [({(0, 0, 0): 1.0, (0, 0, 1): 3.0}, 0.1)])
    lines = export_sdpa(sdp, tmp_path / "x.dat-s").read_text().splitlines()
    assert lines[1:5] == ["1", "1", "2", "0.1"]
    assert lines[5:] == ["1 1 1 1 1.0", "1 1 1 2 1.5"]


def test_export_error_is_surfaced(tmp_path):
    with pytest.raises(OSError):
        export_sdpa(build([1], []), tmp_path / "missing" / "x.dat-s")


def test_determinism():
    q = StabilityQuery(convert(load_pde("diffusion_mixed", **{"lambda": 2.0})), d=1)
    std = to_standard(_assemble(q)[0])
    a, b = solve_embedded(std), solve_embedded(std)
    assert a.status == b.status == Status.FEASIBLE
    assert abs(a.primal_residual - b.primal_residual) <= 1e-10
    assert abs(a.info["margin"] - b.info["margin"]) <= 1e-10


def test_face_reduction_lift():
    sdp = build([3, 1], [
        ({(0, 0, 0): 1.0, (0, 2, 2): 2.0}, 0.0),
        ({(0, 1, 1): 1.0}, 1.0),
        ({(1, 0, 0): 1.0}, 4.0),
    ])
    face = reduce_faces(sdp)
    assert [k.tolist() for k in face.kept] == [[1], [0]]
    assert face.reduced.block_sizes == (1, 1)
    full = face.lift(np.array([1.0, 4.0]))
    X = sdp.blocks_from_entries(full)
    assert X[0][1, 1] == 1.0 and X[1][0, 0] == 4.0 and np.count_nonzero(X[0]) == 1
    res = solve_embedded(sdp)
    assert res.status == Status.FEASIBLE and res.blocks[0].shape == (3, 3)


def test_face_reduction_cascades():
    # X00 = 0 kills X01, which then forces X11 = 0 through the second row
    sdp = build([3], [({(0, 0, 0): 1.0}, 0.0), ({(0, 1, 1): 1.0, (0, 0, 1): 5.0}, 0.0), ({(0, 2, 2): 1.0}, 1.0)])
    assert [k.tolist() for k in reduce_faces(sdp).kept] == [[2]]


def test_independent_rows():
    A = sp.csr_array(np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
    keep = independent_rows(A)
    assert keep.size == 2
    assert np.linalg.matrix_rank(A.toarray()[keep]) == 2
    assert independent_rows(sp.csr_array((0, 3))).size == 0


def test_inconsistent_equalities():
    assert inconsistent(build([2], [({(0, 0, 0): 1.0}, 1.0), ({(0, 0, 0): 1.0}, 2.0)]))
    assert not inconsistent(build([2], [({(0, 0, 0): 1.0}, 1.0), ({(0, 0, 0): 3.0}, 3.0)]))
    assert not inconsistent(build([1], []))
