"""Matrices of bivariate polynomials in (s, theta) with affine coefficients.

Every coefficient of a :class:`PolyMat` is an affine expression
``c0 + sum_k w_k p_k`` in scalar decision variables ``p_k``.  Internally the
coefficients live in one sparse matrix whose rows are indexed by
(entry, monomial) and whose columns are ``[constant, p_1, p_2, ...]``.  With
that layout, multiplying by a *numeric* polynomial, integrating, substituting
or transposing are all sparse linear maps acting on the rows, which keeps LPI
assembly affine and fast.

Integration temporaries (the dummy variable of a kernel product
``int B(s, xi) N(xi, theta) dxi``) never get stored: the antiderivative is
evaluated at its bounds as part of the row map.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import numpy as np
import scipy.sparse as sp

__all__ = [
    "AffineCoeff",
    "PolyMat",
    "BilinearError",
    "ShapeError",
    "LinearEquation",
    "poly_add",
    "poly_mul",
    "poly_int",
    "poly_int_product",
    "poly_subs",
    "coeff_match",
    "coeff_rows",
    "DROP_TOL",
    "MAX_DEGREE",
]

#: Coefficients with magnitude at or below this are dropped on canonicalization.
DROP_TOL = 1e-14
#: Exclusive upper bound on the exponent of either variable.
MAX_DEGREE = 48

_S = MAX_DEGREE
_VARS = ("s", "theta")
_ALIASES = {"s": "s", "theta": "theta", "th": "theta", "θ": "theta", "t": "theta"}

Bound = Union[float, int, str]


class ShapeError(ValueError):
    """Operands have incompatible shapes or domains."""


class BilinearError(ValueError):
    """Both operands of a product carry decision variables."""


def _var(name: str) -> str:
    try:
        return _ALIASES[name]
    except KeyError:
        raise ValueError(f"unknown polynomial variable {name!r}") from None


# ---------------------------------------------------------------------------
# affine coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineCoeff:
    """``constant + sum(weight * p[var_id])``."""

    constant: float = 0.0
    terms: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {int(k): float(v) for k, v in self.terms.items() if abs(v) > DROP_TOL}
        object.__setattr__(self, "terms", clean)
        object.__setattr__(self, "constant", float(self.constant))

    @property
    def is_constant(self) -> bool:
        return not self.terms

    def _coerce(self, other) -> "AffineCoeff":
        if isinstance(other, AffineCoeff):
            return other
        return AffineCoeff(float(other))

    def __add__(self, other):
        other = self._coerce(other)
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms.get(k, 0.0) + v
        return AffineCoeff(self.constant + other.constant, terms)

    __radd__ = __add__

    def __neg__(self):
        return AffineCoeff(-self.constant, {k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        if not self.is_constant and not other.is_constant:
            raise BilinearError("product of two non-constant affine coefficients")
        if other.is_constant:
            c = other.constant
            return AffineCoeff(self.constant * c, {k: v * c for k, v in self.terms.items()})
        return other * self

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, AffineCoeff):
            try:
                other = AffineCoeff(float(other))
            except (TypeError, ValueError):
                return NotImplemented
        return self.constant == other.constant and self.terms == other.terms

    def __hash__(self):
        return hash((self.constant, tuple(sorted(self.terms.items()))))

    def value(self, values) -> float:
        return self.constant + sum(w * values[k] for k, w in self.terms.items())

    def __repr__(self):
        parts = [f"{self.constant:g}"] if self.constant or not self.terms else []
        parts += [f"{w:+g}*p{k}" for k, w in sorted(self.terms.items())]
        return " ".join(parts)


@dataclass(frozen=True)
class LinearEquation:
    """``sum(coeffs[k] * p_k) == rhs``."""

    coeffs: Mapping[int, float]
    rhs: float


# ---------------------------------------------------------------------------
# key encoding helpers
# ---------------------------------------------------------------------------


def _encode(r, c, i, j, cols):
    i = np.asarray(i)
    j = np.asarray(j)
    if i.size and (i.max() >= _S or j.max() >= _S):
        raise OverflowError(f"polynomial degree exceeds MAX_DEGREE={_S - 1}")
    return ((np.asarray(r, dtype=np.int64) * cols + c) * _S + i) * _S + j


def _decode(keys, cols):
    keys = np.asarray(keys, dtype=np.int64)
    j = keys % _S
    i = (keys // _S) % _S
    rc = keys // (_S * _S)
    return rc // max(cols, 1), rc % max(cols, 1), i, j


def _nrows(rows, cols):
    return rows * cols * _S * _S


def _pad_cols(m: sp.csr_array, nv: int) -> sp.csr_array:
    if m.shape[1] == nv:
        return m
    m = m.copy()
    m.resize((m.shape[0], nv))
    return m


def _canonical(m) -> sp.csr_array:
    m = sp.csr_array(m)
    m.sum_duplicates()
    if m.nnz:
        small = np.abs(m.data) <= DROP_TOL
        if small.any():
            m.data[small] = 0.0
            m.eliminate_zeros()
    m.sort_indices()
    return m


def _present_rows(m: sp.csr_array) -> np.ndarray:
    return np.flatnonzero(np.diff(m.indptr))


def _rowmap(out_keys, in_keys, coefs, n_out, n_in) -> sp.csr_array:
    return sp.csr_array(
        (np.asarray(coefs, dtype=float), (np.asarray(out_keys), np.asarray(in_keys))),
        shape=(n_out, n_in),
    )


def _bound_parts(bound: Bound, a: float, b: float):
    """Return ``(kind, value)`` with kind in {'num', 's', 'theta'}."""
    if isinstance(bound, str):
        if bound == "a":
            return "num", a
        if bound == "b":
            return "num", b
        return _var(bound), None
    return "num", float(bound)


def _power_terms(q1, base_i, base_j, coef, bound, a, b, sign):
    """Expand ``sign * coef * s^base_i theta^base_j * X^q1 / q1`` for bound X."""
    kind, val = _bound_parts(bound, a, b)
    q1 = np.asarray(q1)
    if kind == "num":
        c = sign * coef * np.power(val, q1) / q1
        return base_i, base_j, c
    c = sign * coef / q1
    if kind == "s":
        return base_i + q1, base_j, c
    return base_i, base_j + q1, c


# ---------------------------------------------------------------------------
# PolyMat
# ---------------------------------------------------------------------------


class PolyMat:
    """Matrix of polynomials in ``s`` and ``theta`` on a domain ``[a, b]``.

    Instances are immutable values; every operation returns a new object.
    """

    __slots__ = ("rows", "cols", "domain", "_data")

    def __init__(self, rows: int, cols: int, domain=(0.0, 1.0), data=None):
        a, b = float(domain[0]), float(domain[1])
        if not a < b:
            raise ValueError(f"domain endpoints must satisfy a < b, got {domain}")
        self.rows = int(rows)
        self.cols = int(cols)
        self.domain = (a, b)
        n = _nrows(self.rows, self.cols)
        if data is None:
            data = sp.csr_array((n, 1))
        if data.shape[0] != n:
            raise ValueError("coefficient matrix has the wrong number of rows")
        self._data = _canonical(data)

    # -- constructors -----------------------------------------------------

    @classmethod
    def _from_triplets(cls, rows, cols, domain, r, c, i, j, var, val, nv=None):
        r = np.asarray(r, dtype=np.int64)
        keys = _encode(r, c, i, j, cols)
        var = np.asarray(var, dtype=np.int64)
        if nv is None:
            nv = int(var.max()) + 1 if var.size else 1
        data = sp.csr_array(
            (np.asarray(val, dtype=float), (keys, var)), shape=(_nrows(rows, cols), nv)
        )
        return cls(rows, cols, domain, data)

    @classmethod
    def zeros(cls, rows, cols, domain=(0.0, 1.0)):
        return cls(rows, cols, domain)

    @classmethod
    def identity(cls, n, domain=(0.0, 1.0)):
        return cls.constant(np.eye(n), domain)

    @classmethod
    def constant(cls, matrix, domain=(0.0, 1.0)):
        m = np.atleast_2d(np.asarray(matrix, dtype=float))
        if np.asarray(matrix).ndim == 1:
            m = m.reshape(-1, 1) if np.asarray(matrix).size else np.zeros((0, 0))
        r, c = np.nonzero(m)
        z = np.zeros_like(r)
        return cls._from_triplets(m.shape[0], m.shape[1], domain, r, c, z, z, z, m[r, c])

    @classmethod
    def from_dense(cls, coeffs, domain=(0.0, 1.0)):
        """Numeric PolyMat from ``coeffs[r, c, i, j]`` (coefficient of s^i theta^j)."""
        arr = np.asarray(coeffs, dtype=float)
        if arr.ndim != 4:
            raise ValueError("expected a 4-d coefficient array (rows, cols, deg_s, deg_theta)")
        r, c, i, j = np.nonzero(arr)
        return cls._from_triplets(
            arr.shape[0], arr.shape[1], domain, r, c, i, j, np.zeros_like(r), arr[r, c, i, j]
        )

    @classmethod
    def monomial(cls, i, j=0, coeff=1.0, domain=(0.0, 1.0)):
        """Scalar ``coeff * s^i theta^j``."""
        return cls._from_triplets(1, 1, domain, [0], [0], [i], [j], [0], [coeff])

    @classmethod
    def from_entries(cls, rows, cols, entries, domain=(0.0, 1.0)):
        """Build from ``{(r, c): {(i, j): coeff}}`` where coeff is a number or AffineCoeff."""
        tr, tc, ti, tj, tv, tw = [], [], [], [], [], []
        for (r, c), poly in entries.items():
            for (i, j), coef in poly.items():
                coef = coef if isinstance(coef, AffineCoeff) else AffineCoeff(coef)
                items = [(0, coef.constant)] + list(coef.terms.items())
                for var, w in items:
                    tr.append(r)
                    tc.append(c)
                    ti.append(i)
                    tj.append(j)
                    tv.append(var)
                    tw.append(w)
        return cls._from_triplets(rows, cols, domain, tr, tc, ti, tj, tv, tw)

    @classmethod
    def variables(cls, ids, domain=(0.0, 1.0)):
        """Constant matrix whose (r, c) entry is the decision variable ``ids[r, c]``."""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 2:
            raise ValueError("ids must be a 2-d integer array")
        if ids.size and ids.min() < 1:
            raise ValueError("decision variable ids start at 1 (column 0 is the constant)")
        r, c = np.indices(ids.shape)
        r, c = r.ravel(), c.ravel()
        z = np.zeros_like(r)
        return cls._from_triplets(ids.shape[0], ids.shape[1], domain, r, c, z, z, ids.ravel(), np.ones(r.size))

    # -- introspection ----------------------------------------------------

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def data(self) -> sp.csr_array:
        """Sparse coefficients, rows keyed by (entry, monomial), cols ``[1, p1, ...]``."""
        return self._data

    @property
    def nvars(self) -> int:
        return self._data.shape[1]

    @property
    def is_numeric(self) -> bool:
        m = self._data
        return m.nnz == 0 or int(m.indices.max()) == 0

    @property
    def is_zero(self) -> bool:
        return self._data.nnz == 0

    def _terms(self):
        """Decoded nonzero terms ``(r, c, i, j, var, val)``."""
        coo = self._data.tocoo()
        r, c, i, j = _decode(coo.row, self.cols)
        return r, c, i, j, coo.col.astype(np.int64), coo.data

    def degree(self):
        """``(deg_s, deg_theta)``; ``(-1, -1)`` for the zero matrix."""
        if self.is_zero:
            return (-1, -1)
        _, _, i, j = _decode(_present_rows(self._data), self.cols)
        return int(i.max()), int(j.max())

    def variables_used(self) -> np.ndarray:
        cols = np.unique(self._data.indices)
        return cols[cols > 0]

    def entry(self, r, c) -> dict:
        """Entry (r, c) as ``{(i, j): AffineCoeff}``."""
        lo = _encode(r, c, 0, 0, self.cols)
        hi = lo + _S * _S
        sub = self._data[int(lo):int(hi)].tocoo()
        out: dict = {}
        for row, col, v in zip(sub.row, sub.col, sub.data):
            ij = (int(row) // _S, int(row) % _S)
            coef = out.get(ij, AffineCoeff())
            if col == 0:
                coef = coef + AffineCoeff(v)
            else:
                coef = coef + AffineCoeff(0.0, {int(col): v})
            out[ij] = coef
        return out

    def to_dense(self, deg=None) -> np.ndarray:
        """Numeric coefficients ``C[r, c, i, j]``."""
        if not self.is_numeric:
            raise ValueError("PolyMat carries decision variables; instantiate it first")
        ds, dt = self.degree() if deg is None else deg
        out = np.zeros((self.rows, self.cols, max(ds, 0) + 1, max(dt, 0) + 1))
        r, c, i, j, _, v = self._terms()
        np.add.at(out, (r, c, i, j), v)
        return out

    def evaluate(self, s, theta=0.0) -> np.ndarray:
        """Numeric value; broadcasting ``s``/``theta`` gives shape ``(rows, cols, *bshape)``."""
        s_arr, t_arr = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(theta, dtype=float))
        C = self.to_dense()
        ds, dt = C.shape[2], C.shape[3]
        vs = s_arr[..., None] ** np.arange(ds)
        vt = t_arr[..., None] ** np.arange(dt)
        return np.einsum("rcij,...i,...j->rc...", C, vs, vt)

    def instantiate(self, values) -> "PolyMat":
        """Replace decision variables by ``values`` (indexed by variable id)."""
        values = np.asarray(values, dtype=float)
        vec = np.zeros(self.nvars)
        vec[0] = 1.0
        k = min(self.nvars, values.size)
        vec[1:k] = values[1:k]
        col = self._data @ vec
        data = sp.csr_array(col.reshape(-1, 1))
        return PolyMat(self.rows, self.cols, self.domain, data)

    # -- arithmetic ---------------------------------------------------------

    def _check_same(self, other: "PolyMat"):
        if self.shape != other.shape:
            raise ShapeError(f"shape mismatch {self.shape} vs {other.shape}")
        if not np.allclose(self.domain, other.domain):
            raise ShapeError(f"domain mismatch {self.domain} vs {other.domain}")

    def __add__(self, other):
        if not isinstance(other, PolyMat):
            return NotImplemented
        self._check_same(other)
        nv = max(self.nvars, other.nvars)
        return PolyMat(self.rows, self.cols, self.domain, _pad_cols(self._data, nv) + _pad_cols(other._data, nv))

    def __neg__(self):
        return PolyMat(self.rows, self.cols, self.domain, -self._data)

    def __sub__(self, other):
        if not isinstance(other, PolyMat):
            return NotImplemented
        return self + (-other)

    def scale(self, c: float) -> "PolyMat":
        return PolyMat(self.rows, self.cols, self.domain, self._data * float(c))

    def __mul__(self, c):
        if isinstance(c, PolyMat):
            return NotImplemented
        return self.scale(c)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return poly_mul(self, other)

    def __eq__(self, other):
        if not isinstance(other, PolyMat):
            return NotImplemented
        if self.shape != other.shape or self.domain != other.domain:
            return False
        nv = max(self.nvars, other.nvars)
        diff = _pad_cols(self._data, nv) - _pad_cols(other._data, nv)
        return _canonical(diff).nnz == 0

    __hash__ = None

    def allclose(self, other: "PolyMat", atol=1e-12) -> bool:
        if self.shape != other.shape:
            return False
        nv = max(self.nvars, other.nvars)
        diff = _pad_cols(self._data, nv) - _pad_cols(other._data, nv)
        return diff.nnz == 0 or float(np.max(np.abs(diff.data), initial=0.0)) <= atol

    # -- structural maps ----------------------------------------------------

    def _map_rows(self, rows, cols, out_keys, in_keys, coefs) -> "PolyMat":
        L = _rowmap(out_keys, in_keys, coefs, _nrows(rows, cols), self._data.shape[0])
        return PolyMat(rows, cols, self.domain, L @ self._data)

    def _present(self):
        keys = _present_rows(self._data)
        return keys, _decode(keys, self.cols)

    @property
    def T(self) -> "PolyMat":
        return self.transpose()

    def transpose(self) -> "PolyMat":
        keys, (r, c, i, j) = self._present()
        out = _encode(c, r, i, j, self.rows)
        return self._map_rows(self.cols, self.rows, out, keys, np.ones(keys.size))

    def swap(self) -> "PolyMat":
        """Rename ``s <-> theta``."""
        keys, (r, c, i, j) = self._present()
        return self._map_rows(self.rows, self.cols, _encode(r, c, j, i, self.cols), keys, np.ones(keys.size))

    def subs(self, var: str, value) -> "PolyMat":
        """Substitute ``var := value`` where value is a number, 'a', 'b' or the other variable."""
        var = _var(var)
        keys, (r, c, i, j) = self._present()
        a, b = self.domain
        if isinstance(value, str) and value not in ("a", "b"):
            target = _var(value)
            if target == var:
                return self
            if var == "s":
                ni, nj = np.zeros_like(i), j + i
            else:
                ni, nj = i + j, np.zeros_like(j)
            return self._map_rows(self.rows, self.cols, _encode(r, c, ni, nj, self.cols), keys, np.ones(keys.size))
        x = {"a": a, "b": b}.get(value, value) if isinstance(value, str) else float(value)
        if var == "s":
            coef = np.power(float(x), i)
            ni, nj = np.zeros_like(i), j
        else:
            coef = np.power(float(x), j)
            ni, nj = i, np.zeros_like(j)
        return self._map_rows(self.rows, self.cols, _encode(r, c, ni, nj, self.cols), keys, coef)

    def diff(self, var: str = "s") -> "PolyMat":
        var = _var(var)
        keys, (r, c, i, j) = self._present()
        if var == "s":
            m = i > 0
            out = _encode(r[m], c[m], i[m] - 1, j[m], self.cols)
            coef = i[m]
        else:
            m = j > 0
            out = _encode(r[m], c[m], i[m], j[m] - 1, self.cols)
            coef = j[m]
        return self._map_rows(self.rows, self.cols, out, keys[m], coef)

    def block(self, rows: slice | Iterable[int], cols: slice | Iterable[int]) -> "PolyMat":
        """Sub-matrix selected by row/column index sets."""
        ridx = np.arange(self.rows)[rows] if isinstance(rows, slice) else np.asarray(list(rows), dtype=np.int64)
        cidx = np.arange(self.cols)[cols] if isinstance(cols, slice) else np.asarray(list(cols), dtype=np.int64)
        rmap = -np.ones(self.rows, dtype=np.int64)
        cmap = -np.ones(self.cols, dtype=np.int64)
        rmap[ridx] = np.arange(ridx.size)
        cmap[cidx] = np.arange(cidx.size)
        keys, (r, c, i, j) = self._present()
        m = (rmap[r] >= 0) & (cmap[c] >= 0)
        out = _encode(rmap[r[m]], cmap[c[m]], i[m], j[m], cidx.size)
        return self._map_rows(ridx.size, cidx.size, out, keys[m], np.ones(int(m.sum())))

    def embed(self, rows, cols, row_offset, col_offset) -> "PolyMat":
        """Place this matrix inside a larger zero matrix."""
        keys, (r, c, i, j) = self._present()
        out = _encode(r + row_offset, c + col_offset, i, j, cols)
        return self._map_rows(rows, cols, out, keys, np.ones(keys.size))

    def place(self, rows, cols, row_index, col_index) -> "PolyMat":
        """Scatter into a ``rows x cols`` zero matrix: entry (r, c) goes to ``(row_index[r], col_index[c])``."""
        ri = np.asarray(row_index, dtype=np.int64)
        ci = np.asarray(col_index, dtype=np.int64)
        if ri.size != self.rows or ci.size != self.cols:
            raise ShapeError("index lists must match the matrix shape")
        keys, (r, c, i, j) = self._present()
        out = _encode(ri[r], ci[c], i, j, cols)
        return self._map_rows(rows, cols, out, keys, np.ones(keys.size))

    @staticmethod
    def bmat(grid, domain=None) -> "PolyMat":
        """Assemble a block matrix from a rectangular grid of PolyMats.

        Blocks may be ``None`` (zero) as long as each block row and block
        column has at least one sized member.
        """
        nr, nc = len(grid), len(grid[0]) if grid else 0
        if any(len(row) != nc for row in grid):
            raise ShapeError("ragged block grid")
        heights = [None] * nr
        widths = [None] * nc
        for bi, row in enumerate(grid):
            for bj, blk in enumerate(row):
                if blk is None:
                    continue
                domain = domain or blk.domain
                for store, idx, val in ((heights, bi, blk.rows), (widths, bj, blk.cols)):
                    if store[idx] is not None and store[idx] != val:
                        raise ShapeError("block sizes do not conform")
                    store[idx] = val
        if any(h is None for h in heights) or any(w is None for w in widths):
            raise ShapeError("every block row and column needs at least one sized block")
        domain = domain or (0.0, 1.0)
        R, C = sum(heights), sum(widths)
        roff = np.concatenate([[0], np.cumsum(heights)])
        coff = np.concatenate([[0], np.cumsum(widths)])
        parts = []
        nv = 1
        for bi, row in enumerate(grid):
            for bj, blk in enumerate(row):
                if blk is None or blk.is_zero:
                    continue
                if not np.allclose(blk.domain, domain):
                    raise ShapeError("blocks live on different domains")
                e = blk.embed(R, C, int(roff[bi]), int(coff[bj]))
                parts.append(e._data)
                nv = max(nv, e.nvars)
        total = sp.csr_array((_nrows(R, C), nv))
        for p in parts:
            total = total + _pad_cols(p, nv)
        return PolyMat(R, C, domain, total)

    def __repr__(self):
        return f"PolyMat({self.rows}x{self.cols}, deg={self.degree()}, nvars={self.nvars - 1}, domain={self.domain})"

    def to_str(self, precision: int = 4) -> str:
        """Readable listing of the nonzero entries."""
        lines = []
        for r in range(self.rows):
            for c in range(self.cols):
                poly = self.entry(r, c)
                if poly:
                    lines.append(f"[{r},{c}] = {_format_poly(poly, precision)}")
        return "\n".join(lines) if lines else "0"


def _format_poly(poly: dict, precision: int) -> str:
    out = []
    for (i, j) in sorted(poly, key=lambda ij: (ij[0] + ij[1], -ij[0])):
        coef = poly[(i, j)]
        mono = "*".join(
            p for p in (
                "" if i == 0 else ("s" if i == 1 else f"s^{i}"),
                "" if j == 0 else ("th" if j == 1 else f"th^{j}"),
            ) if p
        )
        if coef.is_constant:
            txt = f"{coef.constant:.{precision}g}"
        else:
            txt = f"({coef!r})"
        out.append(txt if not mono else f"{txt}*{mono}")
    return " + ".join(out)


# ---------------------------------------------------------------------------
# products and integrals
# ---------------------------------------------------------------------------


def _join(left_k, right_k):
    """All index pairs ``(li, ri)`` with ``left_k[li] == right_k[ri]``."""
    order_r = np.argsort(right_k, kind="stable")
    rk_sorted = right_k[order_r]
    start = np.searchsorted(rk_sorted, left_k, side="left")
    stop = np.searchsorted(rk_sorted, left_k, side="right")
    counts = stop - start
    total = int(counts.sum())
    li = np.repeat(np.arange(left_k.size), counts)
    offs = np.repeat(start - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
    ri = order_r[np.arange(total) + offs]
    return li, ri


def _contract(B: PolyMat, N: PolyMat, mode: str, lower: Bound = None, upper: Bound = None) -> PolyMat:
    """Matrix product ``B N`` (mode 'mul') or ``int_lower^upper B(s,xi) N(xi,theta) dxi``."""
    if B.cols != N.rows:
        raise ShapeError(f"inner dimensions differ: {B.shape} @ {N.shape}")
    if not np.allclose(B.domain, N.domain):
        raise ShapeError(f"domain mismatch {B.domain} vs {N.domain}")
    if not B.is_numeric and not N.is_numeric:
        raise BilinearError("both factors carry decision variables")
    rows, cols = B.rows, N.cols
    a, b = B.domain
    # the numeric factor contributes coefficients; the other contributes rows
    if N.is_numeric and not B.is_numeric:
        num, var_left = N, True
        vkeys, (vr, vk, vi, vj) = B._present()
        nr, nk_, ni, nj, _, nval = N._terms()
        nk = nr
        li, ri = _join(vk, nk)
        r, c = vr[li], nk_[ri]
        i1, j1, i2, j2 = vi[li], vj[li], ni[ri], nj[ri]
        coef = nval[ri]
        in_keys = vkeys[li]
        source = B
    else:
        num, var_left = B, False
        vkeys, (vk, vc, vi, vj) = N._present()
        br, bk, bi, bj, _, bval = B._terms()
        li, ri = _join(bk, vk)
        r, c = br[li], vc[ri]
        i1, j1, i2, j2 = bi[li], bj[li], vi[ri], vj[ri]
        coef = bval[li]
        in_keys = vkeys[ri]
        source = N
    del num, var_left
    if mode == "mul":
        out = _encode(r, c, i1 + i2, j1 + j2, cols)
        L = _rowmap(out, in_keys, coef, _nrows(rows, cols), source._data.shape[0])
    else:
        q1 = j1 + i2 + 1
        parts_out, parts_in, parts_c = [], [], []
        for bound, sign in ((upper, 1.0), (lower, -1.0)):
            oi, oj, oc = _power_terms(q1, i1, j2, coef, bound, a, b, sign)
            parts_out.append(_encode(r, c, oi, oj, cols))
            parts_in.append(in_keys)
            parts_c.append(oc)
        L = _rowmap(
            np.concatenate(parts_out), np.concatenate(parts_in), np.concatenate(parts_c),
            _nrows(rows, cols), source._data.shape[0],
        )
    return PolyMat(rows, cols, B.domain, L @ source._data)


def poly_add(A: PolyMat, B: PolyMat) -> PolyMat:
    return A + B


def poly_mul(A: PolyMat, B: PolyMat) -> PolyMat:
    """Matrix product with monomial convolution; at most one side may hold decision variables."""
    return _contract(A, B, "mul")


def poly_int_product(B: PolyMat, N: PolyMat, lower: Bound, upper: Bound) -> PolyMat:
    """``int_lower^upper B(s, xi) N(xi, theta) dxi``.

    ``B``'s theta slot and ``N``'s s slot both play the role of the
    integration variable.  Bounds are numbers, ``'a'``, ``'b'``, ``'s'`` or
    ``'theta'``.
    """
    return _contract(B, N, "int", lower, upper)


def poly_int(A: PolyMat, var: str, lower: Bound, upper: Bound) -> PolyMat:
    """Integrate the ``var`` slot of ``A`` between the given bounds.

    A symbolic bound names the variable the result is expressed in, e.g.
    ``poly_int(A, 'theta', 'a', 's')`` is ``int_a^s A(s, xi) dxi``.
    """
    var = _var(var)
    keys, (r, c, i, j) = A._present()
    a, b = A.domain
    if var == "s":
        q1, base_i, base_j = i + 1, np.zeros_like(i), j
    else:
        q1, base_i, base_j = j + 1, i, np.zeros_like(j)
    outs, ins, cs = [], [], []
    for bound, sign in ((upper, 1.0), (lower, -1.0)):
        oi, oj, oc = _power_terms(q1, base_i, base_j, np.ones(keys.size), bound, a, b, sign)
        outs.append(_encode(r, c, oi, oj, A.cols))
        ins.append(keys)
        cs.append(oc)
    return A._map_rows(A.rows, A.cols, np.concatenate(outs), np.concatenate(ins), np.concatenate(cs))


def poly_subs(A: PolyMat, var: str, value) -> PolyMat:
    """Substitute an endpoint/number for ``var``, or swap variables with ``value='swap'``."""
    if value == "swap":
        return A.swap()
    return A.subs(var, value)


def coeff_rows(A: PolyMat):
    """Sparse form of :func:`coeff_match`.

    Returns ``(M, rhs, keys)`` where row ``k`` states ``M[k] @ p == rhs[k]``
    (``p`` indexed by variable id, ``M[:, 0]`` is zero) and ``keys`` are the
    (entry, monomial) row keys, in graded-lex order per entry.
    """
    data = A.data
    keys = _present_rows(data)
    r, c, i, j = _decode(keys, A.cols)
    order = np.lexsort((-i, i + j, c, r))
    keys = keys[order]
    M = data[keys]
    const = M[:, [0]].toarray().ravel()
    mask = np.ones(M.shape[1])
    mask[0] = 0.0
    M = sp.csr_array(M @ sp.diags_array(mask))
    M.eliminate_zeros()
    return M, 0.0 - const, keys


def coeff_match(A: PolyMat) -> list[LinearEquation]:
    """One linear equation per (entry, monomial): the coefficient equals zero."""
    M, rhs, _ = coeff_rows(A)
    eqs = []
    for k in range(M.shape[0]):
        lo, hi = M.indptr[k], M.indptr[k + 1]
        coeffs = {int(v): float(w) for v, w in zip(M.indices[lo:hi], M.data[lo:hi])}
        eqs.append(LinearEquation(coeffs, float(rhs[k]) + 0.0))
    return eqs
