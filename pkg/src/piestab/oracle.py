"""Independent numeric checks: quadrature inner products and a finite-difference model.

Nothing here feeds the certificate path; these routines exist to test it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .pde import PDESystem
from .polynomial import PolyMat
from .quadrature import DEFAULT_ORDER, QuadratureRule

__all__ = [
    "QuadratureRule",
    "DiscretizedSystem",
    "DiscretizationError",
    "l2_inner",
    "x_inner",
    "discretize",
    "spectral_abscissa",
]


def _samples(x, rule: QuadratureRule) -> np.ndarray:
    if isinstance(x, PolyMat):
        v = x.evaluate(rule.nodes)
        return v.reshape(-1, rule.order)
    if callable(x):
        v = np.asarray(x(rule.nodes), dtype=float)
    else:
        v = np.asarray(x, dtype=float)
    return v.reshape(-1, rule.order)


def l2_inner(x, y, rule: QuadratureRule) -> float:
    """``sum_i w_i x(s_i)^T y(s_i)`` for samples, callables or column PolyMats."""
    X, Y = _samples(x, rule), _samples(y, rule)
    if X.shape != Y.shape:
        raise ValueError(f"sample shapes differ: {X.shape} vs {Y.shape}")
    return float(np.sum(X * Y * rule.weights))


def _fundamental_part(x: PolyMat, n0: int, n1: int, n2: int) -> PolyMat:
    """``(x0, d/ds x1, d2/ds2 x2)`` by exact differentiation."""
    if x.shape != (n0 + n1 + n2, 1):
        raise ValueError(f"expected a {(n0 + n1 + n2, 1)} polynomial vector, got {x.shape}")
    parts = [
        x.block(slice(0, n0), slice(None)),
        x.block(slice(n0, n0 + n1), slice(None)).diff("s"),
        x.block(slice(n0 + n1, None), slice(None)).diff("s").diff("s"),
    ]
    return PolyMat.bmat([[p] for p in parts], x.domain)


def x_inner(x: PolyMat, y: PolyMat, n0: int, n1: int, n2: int, rule: QuadratureRule | None = None) -> float:
    """Inner product of the state space: L2 on x0, on the first derivative of x1, on the second of x2."""
    if rule is None:
        rule = QuadratureRule(*x.domain, DEFAULT_ORDER)
    return l2_inner(_fundamental_part(x, n0, n1, n2), _fundamental_part(y, n0, n1, n2), rule)


# ---------------------------------------------------------------------------
# method of lines
# ---------------------------------------------------------------------------


class DiscretizationError(RuntimeError):
    """Boundary relations cannot be solved for any set of boundary unknowns."""


@dataclass(frozen=True)
class DiscretizedSystem:
    m: int
    grid: np.ndarray
    matrix: np.ndarray
    kept: np.ndarray
    eliminated: np.ndarray

    def eigenvalues(self) -> np.ndarray:
        return sla.eigvals(self.matrix)

    def spectral_abscissa(self) -> float:
        return float(np.max(self.eigenvalues().real))


def _first_derivative(m: int, h: float, kind: str) -> np.ndarray:
    D = np.zeros((m, m))
    if kind == "central":
        i = np.arange(1, m - 1)
        D[i, i - 1] = -0.5 / h
        D[i, i + 1] = 0.5 / h
        D[0, :3] = np.array([-3.0, 4.0, -1.0]) / (2 * h)
        D[-1, -3:] = np.array([1.0, -4.0, 3.0]) / (2 * h)
    elif kind == "forward":
        i = np.arange(0, m - 2)
        D[i, i] = -1.5 / h
        D[i, i + 1] = 2.0 / h
        D[i, i + 2] = -0.5 / h
        D[m - 2, m - 3:] = np.array([-1.0, 0.0, 1.0]) / (2 * h)
        D[m - 1, -3:] = np.array([1.0, -4.0, 3.0]) / (2 * h)
    elif kind == "backward":
        i = np.arange(2, m)
        D[i, i] = 1.5 / h
        D[i, i - 1] = -2.0 / h
        D[i, i - 2] = 0.5 / h
        D[1, :3] = np.array([-1.0, 0.0, 1.0]) / (2 * h)
        D[0, :3] = np.array([-3.0, 4.0, -1.0]) / (2 * h)
    else:
        raise ValueError(kind)
    return D


def _second_derivative(m: int, h: float) -> np.ndarray:
    D = np.zeros((m, m))
    i = np.arange(1, m - 1)
    D[i, i - 1] = 1.0 / h**2
    D[i, i] = -2.0 / h**2
    D[i, i + 1] = 1.0 / h**2
    D[0, :4] = np.array([2.0, -5.0, 4.0, -1.0]) / h**2
    D[-1, -4:] = np.array([-1.0, 4.0, -5.0, 2.0]) / h**2
    return D


def _split_hyperbolic(block: np.ndarray):
    """Split ``x_t = M x_s`` into left- and right-moving parts, or None if not real-diagonalizable."""
    if block.size == 0:
        return np.zeros_like(block), np.zeros_like(block)
    lam, R = np.linalg.eig(block)
    if np.max(np.abs(lam.imag), initial=0.0) > 1e-10 or np.linalg.cond(R) > 1e10:
        return None
    lam, R = lam.real, R.real
    Rinv = np.linalg.inv(R)
    pos = R @ np.diag(np.maximum(lam, 0.0)) @ Rinv
    neg = R @ np.diag(np.minimum(lam, 0.0)) @ Rinv
    return pos, neg


def _rank(mat: np.ndarray, rtol: float = 1e-9) -> int:
    if mat.size == 0:
        return 0
    sv = np.linalg.svd(mat, compute_uv=False)
    return int(np.sum(sv > rtol * max(sv.max(), 1e-300)))


def _pick_unknowns(C, idx, n0, n1, n2, nb, A1=None) -> np.ndarray:
    """Grid unknowns to eliminate: endpoints first, then the next node in for x2 channels.

    For a transported ``x1`` channel the inflow end is preferred: a
    negative speed coefficient enters at ``a``, a positive one at ``b``.
    """
    ends = np.array([i for k in range(n1 + n2) for i in idx(n0 + k)[[0, -1]]], dtype=int)
    inner = np.array([i for k in range(n2) for i in idx(n0 + n1 + k)[[1, -2]]], dtype=int)
    weight = np.ones(ends.size)
    if A1 is not None:
        for k in range(n1):
            if A1[n0 + k, k, 0] < 0:
                weight[2 * k] = 1e3
            if A1[n0 + k, k, -1] > 0:
                weight[2 * k + 1] = 1e3
    _, _, piv = sla.qr(C[:, ends] * weight, pivoting=True, mode="economic")
    chosen = list(ends[piv[:_rank(C[:, ends])]])
    if len(chosen) < nb and inner.size:
        Q, _ = np.linalg.qr(C[:, chosen]) if chosen else (np.zeros((C.shape[0], 0)), None)
        rest = C[:, inner] - Q @ (Q.T @ C[:, inner])
        _, _, piv = sla.qr(rest, pivoting=True, mode="economic")
        chosen += list(inner[piv[:nb - len(chosen)]])
    return np.sort(np.array(chosen[:nb], dtype=int))


def discretize(sys: PDESystem, m: int = 200) -> DiscretizedSystem:
    """Finite-difference semi-discretization with boundary unknowns eliminated through ``B``.

    Second derivatives use the three-point stencil, first derivatives of
    ``x2`` are central and the purely first-order block of ``x1`` is
    upwinded by characteristic splitting so the hyperbolic part carries
    numerical dissipation rather than spurious growth.  Boundary relations
    are solved for endpoint unknowns, moving one node inward for an
    ``x2`` channel with two relations at the same end.
    """
    if m < 20:
        raise ValueError("need at least 20 grid points")
    n0, n1, n2, n = sys.n0, sys.n1, sys.n2, sys.n
    a, b = sys.domain
    grid = np.linspace(a, b, m)
    h = grid[1] - grid[0]
    A0 = sys.A0.evaluate(grid)  # (n, n, m)
    A1 = sys.A1.evaluate(grid)
    A2 = sys.A2.evaluate(grid)
    Dc = _first_derivative(m, h, "central")
    Df = _first_derivative(m, h, "forward")
    Db = _first_derivative(m, h, "backward")
    D2 = _second_derivative(m, h)

    def idx(comp):  # unknown index of component comp at every node
        return comp * m + np.arange(m)

    N = n * m
    M = np.zeros((N, N))
    for r in range(n):
        rows = idx(r)
        for c in range(n):
            M[rows, idx(c)] += A0[r, c]
        for k in range(n1 + n2):
            comp = n0 + k
            coef = A1[r, k]
            if not np.any(coef):
                continue
            hyperbolic = k < n1 and n0 <= r < n0 + n1
            if not hyperbolic:
                M[np.ix_(rows, idx(comp))] += coef[:, None] * Dc
        for k in range(n2):
            coef = A2[r, k]
            if np.any(coef):
                M[np.ix_(rows, idx(n0 + n1 + k))] += coef[:, None] * D2
    # upwinded x1 -> x1 transport block, node by node
    for p in range(m):
        blk = A1[n0:n0 + n1, :n1, p]
        split = _split_hyperbolic(blk)
        for r in range(n1):
            row = (n0 + r) * m + p
            for c in range(n1):
                cols = idx(n0 + c)
                if split is None:
                    M[row, cols] += blk[r, c] * Dc[p]
                else:
                    pos, neg = split
                    M[row, cols] += pos[r, c] * Df[p] + neg[r, c] * Db[p]
    # boundary functionals on the full unknown vector
    nb = n1 + 2 * n2
    C = np.zeros((nb, N))
    blocks = []
    for k in range(n1):
        e = np.zeros(N)
        e[idx(n0 + k)[0]] = 1.0
        blocks.append(("x1a", e))
    for k in range(n1):
        e = np.zeros(N)
        e[idx(n0 + k)[-1]] = 1.0
        blocks.append(("x1b", e))
    for tag, pos in (("x2a", 0), ("x2b", -1)):
        for k in range(n2):
            e = np.zeros(N)
            e[idx(n0 + n1 + k)[pos]] = 1.0
            blocks.append((tag, e))
    for tag, stencil in (("x2sa", Dc[0]), ("x2sb", Dc[-1])):
        for k in range(n2):
            e = np.zeros(N)
            e[idx(n0 + n1 + k)] = stencil
            blocks.append((tag, e))
    Bfull = np.vstack([e for _, e in blocks]) if blocks else np.zeros((0, N))
    if nb:
        C = sys.B @ Bfull
        chosen = _pick_unknowns(C, idx, n0, n1, n2, nb, A1)
        Csel = C[:, chosen]
        sv = np.linalg.svd(Csel, compute_uv=False)
        if sv.min() < 1e-10 * max(sv.max(), 1.0):
            raise DiscretizationError("boundary relations are singular for every choice of boundary unknowns")
    else:
        chosen = np.zeros(0, dtype=int)
    kept = np.setdiff1d(np.arange(N), chosen)
    E = np.zeros((N, kept.size))
    E[kept, np.arange(kept.size)] = 1.0
    if nb:
        E[chosen] = -np.linalg.solve(Csel, C[:, kept])
    system = M[kept] @ E
    return DiscretizedSystem(m, grid, system, kept, chosen)


def spectral_abscissa(sys: PDESystem, m: int = 400) -> float:
    return discretize(sys, m).spectral_abscissa()
