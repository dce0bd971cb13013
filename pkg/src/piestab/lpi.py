"""Positive 3-PI decision operators and compilation of operator equalities to an SDP.

A positive operator is parameterized by Gram matrices against monomial
bases: with ``Z1(s) = [1, s, ..., s^d] (x) I_n`` and
``Z2(s, t) = [s^i t^j]_{i,j<=d} (x) I_n`` the operator ``Zt* (g P) Zt``,
where ``Zt x = (Z1 x, int_a^s Z2 x, int_s^b Z2 x)`` and ``P >= 0``, is
positive for any nonnegative weight ``g``.  Two weights are used, ``g = 1``
and ``g = (s-a)(b-s)``, each with its own Gram block.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .pi_operator import PIOperator
from .polynomial import PolyMat, ShapeError, coeff_rows, poly_int_product, poly_mul
from .sdp import SolveResult, StandardSDP, Status, solve_embedded, triangle_index

__all__ = [
    "SDPProblem",
    "PosPIVar",
    "declare_pos_pivar",
    "enforce_op_eq",
    "solve",
    "to_standard",
    "monomial_bases",
    "pos_sizes",
    "Status",
]


@dataclass
class SDPProblem:
    """PSD Gram blocks plus linear equalities over their entries.

    Decision variable ids start at 1 and enumerate each block's upper
    triangle column by column, so id order equals the standard-form order.
    """

    block_sizes: list = field(default_factory=list)
    _eq_rows: list = field(default_factory=list)
    _eq_rhs: list = field(default_factory=list)
    status: str | None = None
    values: np.ndarray | None = None
    result: SolveResult | None = None

    @property
    def nvars(self) -> int:
        return sum(m * (m + 1) // 2 for m in self.block_sizes)

    def add_psd_block(self, m: int) -> np.ndarray:
        """Register an ``m x m`` PSD block; returns the symmetric matrix of its variable ids."""
        start = self.nvars + 1
        self.block_sizes.append(int(m))
        r, c = triangle_index(m)
        ids = np.zeros((m, m), dtype=np.int64)
        k = start + np.arange(r.size)
        ids[r, c] = k
        ids[c, r] = k
        return ids

    def add_equalities(self, M: sp.csr_array, rhs: np.ndarray):
        """Append rows ``M @ p == rhs`` (``p`` indexed by variable id, column 0 unused)."""
        if M.shape[0]:
            self._eq_rows.append(sp.csr_array(M))
            self._eq_rhs.append(np.asarray(rhs, dtype=float))

    @property
    def n_equalities(self) -> int:
        return sum(M.shape[0] for M in self._eq_rows)

    def equality_system(self):
        """All equalities as ``(M, rhs)`` with ``M`` of width ``nvars + 1``."""
        n = self.nvars + 1
        if not self._eq_rows:
            return sp.csr_array((0, n)), np.zeros(0)
        mats = []
        for M in self._eq_rows:
            M = M.copy()
            M.resize((M.shape[0], n))
            mats.append(M)
        return sp.csr_array(sp.vstack(mats, format="csr")), np.concatenate(self._eq_rhs)

    def gram(self, k: int) -> np.ndarray:
        if self.values is None:
            raise RuntimeError("problem has not been solved")
        offs = np.concatenate([[0], np.cumsum([m * (m + 1) // 2 for m in self.block_sizes])])
        m = self.block_sizes[k]
        r, c = triangle_index(m)
        X = np.zeros((m, m))
        v = self.values[1 + offs[k]: 1 + offs[k + 1]]
        X[r, c] = v
        X[c, r] = v
        return X


def monomial_bases(n: int, d: int, domain):
    """``Z1(s)`` (``n(d+1) x n``) and ``Z2(s, theta)`` (``n(d+1)^2 x n``)."""
    q1, q2 = d + 1, (d + 1) ** 2
    C1 = np.zeros((n * q1, n, d + 1, 1))
    for i in range(q1):
        for ch in range(n):
            C1[i * n + ch, ch, i, 0] = 1.0
    C2 = np.zeros((n * q2, n, d + 1, d + 1))
    for k, (i, j) in enumerate((i, j) for i in range(d + 1) for j in range(d + 1)):
        for ch in range(n):
            C2[k * n + ch, ch, i, j] = 1.0
    return PolyMat.from_dense(C1, domain), PolyMat.from_dense(C2, domain)


def pos_sizes(n: int, d: int):
    q1, q2 = n * (d + 1), n * (d + 1) ** 2
    return q1, q2, q1 + 2 * q2


def _weights(domain):
    a, b = domain
    one = PolyMat.constant([[1.0]], domain)
    bump = PolyMat.from_dense(np.array([[[[-a * b], [a + b], [-1.0]]]]), domain)
    return [one, bump]


@dataclass(frozen=True, eq=False)
class PosPIVar:
    n: int
    d: int
    domain: tuple
    gram_ids: tuple  # one symmetric id matrix per weight
    block_index: tuple  # position of each Gram block in the problem
    op: PIOperator

    @property
    def sizes(self):
        return pos_sizes(self.n, self.d)


def _kernel_terms(Pg: PolyMat, g: PolyMat, Z1: PolyMat, Z2: PolyMat, q1: int, q2: int):
    """Multiplier and kernels of ``Zt* (g P) Zt`` for one weight, term by term."""
    sl1, sl2, sl3 = slice(0, q1), slice(q1, q1 + q2), slice(q1 + q2, q1 + 2 * q2)
    P = {(i, j): Pg.block(si, sj) for i, si in enumerate((sl1, sl2, sl3), 1) for j, sj in enumerate((sl1, sl2, sl3), 1)}
    g_s = g
    g_t = g.subs("s", "theta")
    Z1_s = Z1
    Z1_t = Z1.subs("s", "theta")
    Z1T_s = Z1.transpose()
    Z2_st = Z2  # Z2(s, theta)
    Z2T_ts = Z2.swap().transpose()  # Z2(theta, s)^T as a function of (s, theta)

    N0 = poly_mul(poly_mul(Z1T_s, P[1, 1]), Z1_s)
    N0 = _scalar_mul(g_s, N0)

    def left_int(Pk):
        # B(s, nu) = g(nu) Z2(nu, s)^T P_k in the (s, theta) slots with nu in theta
        return _scalar_mul(g_t, poly_mul(Z2T_ts, Pk))

    def integral(Pk, lo, hi):
        return poly_int_product(left_int(Pk), Z2_st, lo, hi)

    front1 = _scalar_mul(g_s, poly_mul(poly_mul(Z1T_s, P[1, 2]), Z2_st))
    back1 = _scalar_mul(g_t, poly_mul(poly_mul(Z2T_ts, P[3, 1]), Z1_t))
    N1 = front1 + back1 + integral(P[3, 3], "a", "theta") + integral(P[3, 2], "theta", "s") + integral(P[2, 2], "s", "b")
    front2 = _scalar_mul(g_s, poly_mul(poly_mul(Z1T_s, P[1, 3]), Z2_st))
    back2 = _scalar_mul(g_t, poly_mul(poly_mul(Z2T_ts, P[2, 1]), Z1_t))
    N2 = front2 + back2 + integral(P[3, 3], "a", "s") + integral(P[2, 3], "s", "theta") + integral(P[2, 2], "theta", "b")
    return N0, N1, N2


def _scalar_mul(g: PolyMat, M: PolyMat) -> PolyMat:
    """Scalar polynomial ``g`` times every entry of ``M``."""
    if M.rows == 0 or M.cols == 0:
        return M
    G = PolyMat.bmat([[g if r == c else None for c in range(M.rows)] for r in range(M.rows)], M.domain) if M.rows > 1 else g
    return poly_mul(G, M)


def declare_pos_pivar(prob: SDPProblem, n: int, d: int, domain=(0.0, 1.0), weights: str = "both") -> PosPIVar:
    """Register the Gram blocks of a positive operator and assemble its parameters.

    ``weights`` selects ``"both"`` (default), ``"one"`` (``g = 1`` only) or
    ``"bump"`` (``g = (s-a)(b-s)`` only).
    """
    if d < 0 or n < 0:
        raise ValueError("need n >= 0 and d >= 0")
    domain = (float(domain[0]), float(domain[1]))
    q1, q2, m = pos_sizes(n, d)
    Z1, Z2 = monomial_bases(n, d, domain)
    gs = _weights(domain)
    chosen = {"both": [0, 1], "one": [0], "bump": [1]}[weights]
    N0 = PolyMat.zeros(n, n, domain)
    N1 = PolyMat.zeros(n, n, domain)
    N2 = PolyMat.zeros(n, n, domain)
    ids_all, blocks = [], []
    for k in chosen:
        ids = prob.add_psd_block(m)
        blocks.append(len(prob.block_sizes) - 1)
        ids_all.append(ids)
        Pg = PolyMat.variables(ids, domain)
        t0, t1, t2 = _kernel_terms(Pg, gs[k], Z1, Z2, q1, q2)
        N0, N1, N2 = N0 + t0, N1 + t1, N2 + t2
    return PosPIVar(n, d, domain, tuple(ids_all), tuple(blocks), PIOperator(N0, N1, N2))


def enforce_op_eq(prob: SDPProblem, lhs: PIOperator, rhs: PIOperator):
    """Append coefficient-matching equalities for ``lhs == rhs`` on all three parameters."""
    if lhs.shape != rhs.shape:
        raise ShapeError(f"shape mismatch {lhs.shape} vs {rhs.shape}")
    if not np.allclose(lhs.domain, rhs.domain):
        raise ShapeError("domain mismatch")
    for L, R in zip(lhs.params, rhs.params):
        M, b, _ = coeff_rows(L - R)
        prob.add_equalities(M, b)


def to_standard(prob: SDPProblem, dedup_digits: int = 12) -> StandardSDP:
    """Standard form with duplicate and vacuous equalities removed.

    Rows are normalized by their largest magnitude and sign; rows equal
    after rounding to ``dedup_digits`` significant digits are merged.
    """
    M, rhs = prob.equality_system()
    nx = prob.nvars
    M = sp.csr_array(M[:, 1:]) if M.shape[1] else sp.csr_array((M.shape[0], nx))
    M.sum_duplicates()
    M.eliminate_zeros()
    rows_out, rhs_out, bad = [], [], []
    seen = set()
    for k in range(M.shape[0]):
        lo, hi = M.indptr[k], M.indptr[k + 1]
        idx, val = M.indices[lo:hi], M.data[lo:hi]
        if idx.size == 0:
            if abs(rhs[k]) > 1e-12:
                bad.append(k)
            continue
        order = np.argsort(idx)
        idx, val = idx[order], val[order]
        scale = val[np.argmax(np.abs(val))]
        nv, nb = val / scale, rhs[k] / scale
        key = (tuple(idx.tolist()), tuple(_round_sig(nv, dedup_digits)), _round_sig(np.array([nb]), dedup_digits)[0])
        if key in seen:
            continue
        seen.add(key)
        rows_out.append((idx, val))
        rhs_out.append(rhs[k])
    if rows_out:
        r = np.concatenate([np.full(i.size, k) for k, (i, _) in enumerate(rows_out)])
        c = np.concatenate([i for i, _ in rows_out])
        v = np.concatenate([v for _, v in rows_out])
        W = sp.csr_array((v, (r, c)), shape=(len(rows_out), nx))
    else:
        W = sp.csr_array((0, nx))
    W.sort_indices()
    return StandardSDP(tuple(prob.block_sizes), W, np.asarray(rhs_out, dtype=float), tuple(bad))


def _round_sig(x: np.ndarray, digits: int):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    nz = x != 0
    mag = np.floor(np.log10(np.abs(x[nz])))
    out[nz] = np.round(x[nz] / 10.0**mag, digits - 1) * 10.0**mag
    return [float(v) + 0.0 for v in out]


def solve(prob: SDPProblem, tol: float = 1e-8, **kwargs) -> SolveResult:
    """Solve and store status and variable values (indexed by id, slot 0 = 1)."""
    std = to_standard(prob)
    res = solve_embedded(std, tol=tol, **kwargs)
    prob.status = res.status
    vals = np.zeros(prob.nvars + 1)
    vals[0] = 1.0
    vals[1:] = res.entries
    prob.values = vals
    prob.result = res
    res.info.setdefault("standard_form", std.summary())
    return res

