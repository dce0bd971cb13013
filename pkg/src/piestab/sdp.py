"""Standard-form semidefinite feasibility problems, an embedded solver and SDPA files.

Decision variables are the upper-triangle entries of symmetric PSD blocks,
ordered by block and then column-major within the upper triangle.  The
equality data is stored against those entries (``W``); the solver sees the
symmetry-reduced vectorization where off-diagonal entries are scaled by
sqrt(2) so inner products are preserved.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

__all__ = [
    "StandardSDP",
    "SolveResult",
    "Status",
    "triangle_index",
    "svec_scale",
    "solve_embedded",
    "independent_rows",
    "inconsistent",
    "reduce_faces",
    "FaceReduction",
    "export_sdpa",
    "read_sdpa",
]

SQRT2 = math.sqrt(2.0)


class Status:
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    INCONCLUSIVE = "inconclusive"


def triangle_index(m: int):
    """Row and column of each upper-triangle slot, column-major."""
    cols = np.concatenate([np.full(j + 1, j) for j in range(m)]) if m else np.zeros(0, int)
    rows = np.concatenate([np.arange(j + 1) for j in range(m)]) if m else np.zeros(0, int)
    return rows.astype(int), cols.astype(int)


def svec_scale(m: int) -> np.ndarray:
    """Factor turning an entry into its svec coordinate: 1 on the diagonal, sqrt(2) off it."""
    r, c = triangle_index(m)
    return np.where(r == c, 1.0, SQRT2)


@dataclass(frozen=True, eq=False)
class StandardSDP:
    """Find PSD blocks ``X_k`` with ``W @ entries(X) == b``.

    ``W[e, v]`` multiplies upper-triangle entry ``v`` (value ``X_ij``), so a
    constraint on a symmetric pair counts the pair once.
    """

    block_sizes: tuple
    W: sp.csr_array
    b: np.ndarray
    infeasible_rows: tuple = ()

    @property
    def nvars(self) -> int:
        return sum(m * (m + 1) // 2 for m in self.block_sizes)

    @property
    def neq(self) -> int:
        return self.W.shape[0]

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([m * (m + 1) // 2 for m in self.block_sizes])]).astype(int)

    @property
    def scale(self) -> np.ndarray:
        if not self.block_sizes:
            return np.zeros(0)
        return np.concatenate([svec_scale(m) for m in self.block_sizes])

    @property
    def A_svec(self) -> sp.csr_array:
        """Equality matrix over svec coordinates (``x = scale * entries``)."""
        return sp.csr_array(self.W @ sp.diags_array(1.0 / self.scale)) if self.nvars else self.W

    def blocks_from_entries(self, entries) -> list[np.ndarray]:
        out = []
        for k, m in enumerate(self.block_sizes):
            v = entries[self.offsets[k]:self.offsets[k + 1]]
            r, c = triangle_index(m)
            X = np.zeros((m, m))
            X[r, c] = v
            X[c, r] = v
            out.append(X)
        return out

    def equality_residual(self, entries) -> float:
        if self.neq == 0:
            return 0.0
        return float(np.max(np.abs(self.W @ entries - self.b)))

    def __eq__(self, other):
        if not isinstance(other, StandardSDP):
            return NotImplemented
        if tuple(self.block_sizes) != tuple(other.block_sizes) or self.W.shape != other.W.shape:
            return False
        d = (self.W - other.W)
        d.eliminate_zeros()
        return d.nnz == 0 and np.array_equal(self.b, other.b)

    __hash__ = None

    def summary(self) -> dict:
        return {"blocks": list(self.block_sizes), "variables": self.nvars, "equalities": self.neq}


@dataclass
class SolveResult:
    status: str
    entries: np.ndarray
    blocks: list
    primal_residual: float = math.inf
    min_eigenvalue: float = -math.inf
    solver_status: str = ""
    iterations: int = 0
    solve_time: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status == Status.FEASIBLE


def _min_eig(blocks) -> float:
    vals = [float(np.linalg.eigvalsh(X).min()) for X in blocks if X.size]
    return min(vals) if vals else 0.0


@dataclass(frozen=True, eq=False)
class FaceReduction:
    """A smaller problem on a face of the PSD cone, with the map back to the original entries."""

    reduced: StandardSDP
    kept: list  # per original block, the surviving row/column indices
    entry_map: np.ndarray  # reduced entry -> original entry
    nvars: int

    def lift(self, entries) -> np.ndarray:
        out = np.zeros(self.nvars)
        out[self.entry_map] = entries
        return out


def reduce_faces(sdp: StandardSDP, zero_tol: float = 0.0) -> FaceReduction:
    """Remove Gram rows and columns forced to zero by the equalities.

    A homogeneous equation whose terms are all diagonal entries with
    coefficients of one sign forces those diagonals to zero; a PSD block
    with a zero diagonal entry has that whole row and column zero.  The rule
    is applied until nothing changes.  The reduced problem is feasible
    exactly when the original is, and it is the one with a usable interior
    when the original had none.
    """
    offs = sdp.offsets
    sizes = list(sdp.block_sizes)
    nx = sdp.nvars
    blk = np.zeros(nx, dtype=int)
    ri = np.zeros(nx, dtype=int)
    ci = np.zeros(nx, dtype=int)
    for k, m in enumerate(sizes):
        r, c = triangle_index(m)
        blk[offs[k]:offs[k + 1]] = k
        ri[offs[k]:offs[k + 1]] = r
        ci[offs[k]:offs[k + 1]] = c
    dead = [np.zeros(m, dtype=bool) for m in sizes]
    alive = np.ones(nx, dtype=bool)
    W = sdp.W.tocsr()
    homogeneous = np.abs(sdp.b) <= zero_tol
    changed = True
    while changed:
        changed = False
        for e in np.flatnonzero(homogeneous):
            cols = W.indices[W.indptr[e]:W.indptr[e + 1]]
            vals = W.data[W.indptr[e]:W.indptr[e + 1]]
            live = alive[cols] & (vals != 0.0)
            cols, vals = cols[live], vals[live]
            if cols.size == 0 or np.any(ri[cols] != ci[cols]):
                continue
            if not (np.all(vals > 0) or np.all(vals < 0)):
                continue
            for v in cols:
                k, i = blk[v], ri[v]
                dead[k][i] = True
                seg = slice(offs[k], offs[k + 1])
                hit = (ri[seg] == i) | (ci[seg] == i)
                alive[seg] &= ~hit
            changed = True
    kept = [np.flatnonzero(~d) for d in dead]
    new_sizes = tuple(int(kk.size) for kk in kept)
    new_offs = np.concatenate([[0], np.cumsum([m * (m + 1) // 2 for m in new_sizes])]).astype(int)
    entry_map = np.zeros(int(new_offs[-1]), dtype=int)
    for k, kk in enumerate(kept):
        if kk.size == 0:
            continue
        r, c = triangle_index(kk.size)
        oi, oj = kk[r], kk[c]
        entry_map[new_offs[k]:new_offs[k + 1]] = offs[k] + oj * (oj + 1) // 2 + oi
    Wr = sp.csr_array(W[:, entry_map])
    Wr.eliminate_zeros()
    nonempty = np.diff(Wr.indptr) > 0
    bad = tuple(int(e) for e in np.flatnonzero(~nonempty & (np.abs(sdp.b) > zero_tol)))
    rows = np.flatnonzero(nonempty)
    reduced = StandardSDP(new_sizes, sp.csr_array(Wr[rows]), sdp.b[rows], tuple(sdp.infeasible_rows) + bad)
    return FaceReduction(reduced, kept, entry_map, nx)


def independent_rows(A: sp.csr_array, rtol: float = 1e-10) -> np.ndarray:
    """Indices of a maximal linearly independent subset of the rows of ``A`` (pivoted QR)."""
    if A.shape[0] == 0:
        return np.zeros(0, dtype=int)
    _, R, piv = sla.qr(A.toarray().T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros(0, dtype=int)
    rank = int(np.sum(diag > rtol * diag[0]))
    return np.sort(piv[:rank])


def inconsistent(sdp: StandardSDP, rtol: float = 1e-10) -> bool:
    """True when ``b`` is outside the range of the equality matrix (a linear infeasibility proof)."""
    if sdp.neq == 0:
        return False
    A = sdp.A_svec
    norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).ravel()) + np.abs(sdp.b)
    norms[norms == 0] = 1.0
    D = sp.diags_array(1.0 / norms)
    aug = sp.csr_array(sp.hstack([D @ A, sp.csr_array((sdp.b / norms)[:, None])]))
    return independent_rows(aug, rtol).size > independent_rows(sp.csr_array(D @ A), rtol).size


def _diag_mask(sizes) -> np.ndarray:
    parts = [(lambda rc: (rc[0] == rc[1]).astype(float))(triangle_index(m)) for m in sizes if m]
    return np.concatenate(parts) if parts else np.zeros(0)


def solve_embedded(
    sdp: StandardSDP,
    tol: float = 1e-8,
    max_iter: int = 200,
    residual_tol: float = 1e-7,
    eig_tol: float = 1e-7,
    verbose: bool = False,
    presolve: bool = True,
    options: dict | None = None,
) -> SolveResult:
    """Interior-point feasibility solve with Clarabel.

    The solver maximizes ``t`` subject to the equalities and
    ``X_k - t I >= 0`` with ``t <= 1``.  Unlike the bare feasibility
    problem this has a bounded optimum even when every feasible point lies
    on the boundary of the cone, which is the usual situation here.

    ``feasible`` needs a solved (or nearly solved) exit, an equality
    residual below ``residual_tol`` and Gram blocks PSD to ``eig_tol``, all
    rechecked on the original problem.  ``infeasible`` needs a primal
    infeasibility certificate, equalities with no solution at all, or a
    solved exit whose optimal ``t`` is below ``-eig_tol``: the dual solution
    then bounds every feasible point's smallest eigenvalue away from zero.  Everything else is
    ``inconclusive``.  With ``presolve`` the solver works on the face found
    by :func:`reduce_faces`.
    """
    t0 = time.perf_counter()
    orig = sdp
    face = None
    if presolve and sdp.nvars:
        face = reduce_faces(sdp)
        sdp = face.reduced
    zeros = np.zeros(orig.nvars)
    if sdp.infeasible_rows:
        return SolveResult(Status.INFEASIBLE, zeros, orig.blocks_from_entries(zeros),
                           solver_status="trivially infeasible equality", solve_time=0.0,
                           info={"rows": list(sdp.infeasible_rows)})
    nx = sdp.nvars
    if nx == 0:
        res = 0.0 if sdp.neq == 0 else float(np.max(np.abs(sdp.b)))
        status = Status.FEASIBLE if res <= residual_tol else Status.INFEASIBLE
        return SolveResult(status, zeros, orig.blocks_from_entries(zeros), res, 0.0, "empty", 0,
                           time.perf_counter() - t0)

    import clarabel

    # redundant equalities leave the KKT system singular
    keep = independent_rows(sdp.A_svec)
    A_eq = sdp.A_svec[keep]
    norms = np.sqrt(np.asarray(A_eq.multiply(A_eq).sum(axis=1)).ravel())
    norms[norms == 0] = 1.0
    A_eq = sp.diags_array(1.0 / norms) @ A_eq
    ne = A_eq.shape[0]
    # variables (svec entries, t); rows: equalities, t <= 1, t I - X in -PSD
    A = sp.vstack([
        sp.hstack([A_eq, sp.csc_matrix((ne, 1))]),
        sp.hstack([sp.csc_matrix((1, nx)), sp.csc_matrix(np.ones((1, 1)))]),
        sp.hstack([-sp.identity(nx), sp.csc_matrix(_diag_mask(sdp.block_sizes)[:, None])]),
    ], format="csc")
    b = np.concatenate([sdp.b[keep] / norms, [1.0], np.zeros(nx)])
    cones = []
    if ne:
        cones.append(clarabel.ZeroConeT(ne))
    cones.append(clarabel.NonnegativeConeT(1))
    cones += [clarabel.PSDTriangleConeT(m) for m in sdp.block_sizes if m]
    q = np.zeros(nx + 1)
    q[-1] = -1.0
    settings = clarabel.DefaultSettings()
    settings.verbose = verbose
    settings.max_iter = max_iter
    for key in ("tol_gap_abs", "tol_gap_rel", "tol_feas", "tol_infeas_abs", "tol_infeas_rel"):
        setattr(settings, key, tol)
    settings.max_threads = 1
    settings.static_regularization_constant = 1e-7
    for key, val in (options or {}).items():
        setattr(settings, key, val)
    solver = clarabel.DefaultSolver(sp.csc_matrix((nx + 1, nx + 1)), q, A, b, cones, settings)
    sol = solver.solve()
    raw = str(sol.status)
    x = np.asarray(sol.x, dtype=float)
    margin = float(x[-1]) if x.size else math.nan
    entries = x[:nx] / sdp.scale
    if face is not None:
        entries = face.lift(entries)
    blocks = orig.blocks_from_entries(entries)
    res = orig.equality_residual(entries)
    lam = _min_eig(blocks)
    solved = raw in ("Solved", "AlmostSolved")
    if solved and res <= residual_tol and lam >= -eig_tol:
        status = Status.FEASIBLE
    elif raw == "PrimalInfeasible" or (raw == "Solved" and margin < -eig_tol) or inconsistent(sdp):
        status = Status.INFEASIBLE
    else:
        status = Status.INCONCLUSIVE
    return SolveResult(
        status, entries, blocks, res, lam, raw, int(sol.iterations), time.perf_counter() - t0,
        info={"margin": margin, "r_prim": float(sol.r_prim), "r_dual": float(sol.r_dual),
              "independent_rows": int(ne), "reduced_blocks": list(sdp.block_sizes)},
    )


# ---------------------------------------------------------------------------
# SDPA sparse format
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else str(v)


def export_sdpa(sdp: StandardSDP, path) -> Path:
    """Write the problem in SDPA sparse format as the dual-form constraint system.

    Constraint ``e`` is ``<F_e, X> = b_e`` with ``X`` block diagonal PSD and
    ``F_e`` symmetric, so an off-diagonal weight ``w`` becomes ``F_ij = w/2``.
    The objective matrix ``F_0`` is zero (pure feasibility).  An empty
    problem is written with a single dummy 1x1 block.
    """
    path = Path(path)
    sizes = list(sdp.block_sizes)
    W = sdp.W.tocoo()
    offs = sdp.offsets
    lines = ['"feasibility problem: find X >= 0 with <F_i, X> = c_i"']
    lines.append(str(sdp.neq))
    lines.append(str(max(len(sizes), 1)))
    lines.append(" ".join(str(m) for m in sizes) if sizes else "1")
    lines.append(" ".join(_fmt(v) for v in sdp.b) if sdp.neq else "")
    block_of = np.searchsorted(offs, W.col, side="right") - 1
    tri = {m: triangle_index(m) for m in set(sizes)}
    order = np.lexsort((W.col, W.row))
    for k in order:
        e, v, w = int(W.row[k]), int(W.col[k]), float(W.data[k])
        blk = int(block_of[k])
        r, c = tri[sizes[blk]]
        i, j = int(r[v - offs[blk]]), int(c[v - offs[blk]])
        val = w if i == j else w / 2.0
        lines.append(f"{e + 1} {blk + 1} {i + 1} {j + 1} {_fmt(val)}")
    text = "\n".join(lines) + "\n"
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write SDPA file {path}: {exc}") from exc
    return path


def read_sdpa(path) -> StandardSDP:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and ln.lstrip()[0] not in '"*']
    tokens_header = []
    idx = 0
    # header: mDIM, nBLOCK, blockStruct, c vector (may be empty when mDIM = 0)
    while len(tokens_header) < 2:
        tokens_header += lines[idx].replace(",", " ").replace("{", " ").replace("}", " ").split()
        idx += 1
    m = int(float(tokens_header[0]))
    nblock = int(float(tokens_header[1]))
    sizes_tok = tokens_header[2:]
    while len(sizes_tok) < nblock:
        sizes_tok += lines[idx].replace(",", " ").replace("{", " ").replace("}", " ").split()
        idx += 1
    sizes = [abs(int(float(t))) for t in sizes_tok[:nblock]]
    c_tok: list = []
    while len(c_tok) < m:
        c_tok += lines[idx].replace(",", " ").replace("{", " ").replace("}", " ").split()
        idx += 1
    b = np.array([float(t) for t in c_tok[:m]])
    offs = np.concatenate([[0], np.cumsum([s * (s + 1) // 2 for s in sizes])]).astype(int)
    rows, cols, vals = [], [], []
    for ln in lines[idx:]:
        mat, blk, i, j, val = ln.split()[:5]
        mat, blk, i, j = int(mat), int(blk) - 1, int(i) - 1, int(j) - 1
        val = float(val)
        if mat == 0:
            if val != 0.0:
                raise ValueError("nonzero objective matrix is not supported")
            continue
        if i > j:
            i, j = j, i
        v = offs[blk] + j * (j + 1) // 2 + i
        rows.append(mat - 1)
        cols.append(v)
        vals.append(val if i == j else 2.0 * val)
    if m == 0 and sizes == [1] and not rows:
        sizes = []
        offs = np.zeros(1, dtype=int)
    W = sp.csr_array((vals, (rows, cols)), shape=(m, int(offs[-1])))
    W.sum_duplicates()
    W.sort_indices()
    return StandardSDP(tuple(sizes), W, b)
