"""3-PI operators and their algebra.

A :class:`PIOperator` with parameters ``{N0, N1, N2}`` acts on vector
functions on ``[a, b]`` as::

    (P x)(s) = N0(s) x(s) + int_a^s N1(s, t) x(t) dt + int_s^b N2(s, t) x(t) dt

Operators may be rectangular.  Composition and adjoint are closed-form in
the parameters, so the class of operators with polynomial parameters is
closed under every operation here.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .polynomial import PolyMat, ShapeError, poly_int, poly_int_product, poly_mul
from .quadrature import DEFAULT_ORDER, QuadratureRule

__all__ = [
    "PIOperator",
    "pi_compose",
    "pi_adjoint",
    "pi_add",
    "pi_scale",
    "pi_concat",
    "pi_apply_numeric",
    "pi_apply_poly",
]


@dataclass(frozen=True, eq=False)
class PIOperator:
    N0: PolyMat
    N1: PolyMat
    N2: PolyMat

    def __post_init__(self):
        shapes = {self.N0.shape, self.N1.shape, self.N2.shape}
        if len(shapes) != 1:
            raise ShapeError(f"parameter shapes differ: {sorted(shapes)}")
        doms = {self.N0.domain, self.N1.domain, self.N2.domain}
        if len(doms) != 1:
            raise ShapeError("parameters live on different domains")
        if self.N0.degree()[1] > 0:
            raise ValueError("N0 must not depend on theta")

    # -- constructors -----------------------------------------------------

    @classmethod
    def zeros(cls, dim_out, dim_in, domain=(0.0, 1.0)):
        z = PolyMat.zeros(dim_out, dim_in, domain)
        return cls(z, z, z)

    @classmethod
    def identity(cls, n, domain=(0.0, 1.0)):
        z = PolyMat.zeros(n, n, domain)
        return cls(PolyMat.identity(n, domain), z, z)

    @classmethod
    def multiplier(cls, N0: PolyMat):
        z = PolyMat.zeros(N0.rows, N0.cols, N0.domain)
        return cls(N0, z, z)

    @classmethod
    def from_params(cls, N0=None, N1=None, N2=None, shape=None, domain=(0.0, 1.0)):
        """Build from any subset of parameters; missing ones are zero."""
        given = [p for p in (N0, N1, N2) if p is not None]
        if given:
            shape, domain = given[0].shape, given[0].domain
        if shape is None:
            raise ValueError("shape needed when no parameter is given")
        z = PolyMat.zeros(*shape, domain)
        return cls(N0 if N0 is not None else z, N1 if N1 is not None else z, N2 if N2 is not None else z)

    # -- properties -------------------------------------------------------

    @property
    def dim_out(self) -> int:
        return self.N0.rows

    @property
    def dim_in(self) -> int:
        return self.N0.cols

    @property
    def shape(self):
        return self.N0.shape

    @property
    def domain(self):
        return self.N0.domain

    @property
    def params(self):
        return (self.N0, self.N1, self.N2)

    @property
    def is_numeric(self) -> bool:
        return all(p.is_numeric for p in self.params)

    @property
    def nvars(self) -> int:
        return max(p.nvars for p in self.params)

    def degree(self):
        """Max ``(deg_s, deg_theta)`` over the three parameters."""
        degs = [p.degree() for p in self.params]
        return max(d[0] for d in degs), max(d[1] for d in degs)

    def instantiate(self, values) -> "PIOperator":
        return PIOperator(*(p.instantiate(values) for p in self.params))

    def block(self, rows, cols) -> "PIOperator":
        return PIOperator(*(p.block(rows, cols) for p in self.params))

    # -- algebra sugar ----------------------------------------------------

    def __add__(self, other):
        return pi_add(self, other)

    def __sub__(self, other):
        return pi_add(self, pi_scale(-1.0, other))

    def __neg__(self):
        return pi_scale(-1.0, self)

    def __mul__(self, c):
        return pi_scale(c, self)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return pi_compose(self, other)

    @property
    def adjoint(self) -> "PIOperator":
        return pi_adjoint(self)

    def __eq__(self, other):
        if not isinstance(other, PIOperator):
            return NotImplemented
        return all(p == q for p, q in zip(self.params, other.params))

    __hash__ = None

    def allclose(self, other: "PIOperator", atol=1e-12) -> bool:
        return self.shape == other.shape and all(
            p.allclose(q, atol) for p, q in zip(self.params, other.params)
        )

    def __repr__(self):
        return f"PIOperator({self.dim_out}x{self.dim_in}, domain={self.domain}, deg={self.degree()})"

    def __str__(self):
        return format_operator(self)


def format_operator(P: PIOperator, precision: int = 4) -> str:
    """Aligned listing of the nonzero entries of N0, N1, N2."""
    out = [f"3-PI operator {P.dim_out}x{P.dim_in} on [{P.domain[0]:g}, {P.domain[1]:g}]"]
    for name, par in zip(("N0", "N1", "N2"), P.params):
        body = par.to_str(precision)
        out.append(f"  {name}:")
        out.extend("    " + line for line in body.splitlines())
    return "\n".join(out)


def _check_domains(A: PIOperator, B: PIOperator):
    if not np.allclose(A.domain, B.domain):
        raise ShapeError(f"domain mismatch {A.domain} vs {B.domain}")


def pi_add(A: PIOperator, B: PIOperator) -> PIOperator:
    if A.shape != B.shape:
        raise ShapeError(f"shape mismatch {A.shape} vs {B.shape}")
    _check_domains(A, B)
    return PIOperator(A.N0 + B.N0, A.N1 + B.N1, A.N2 + B.N2)


def pi_scale(c: float, A: PIOperator) -> PIOperator:
    return PIOperator(*(p.scale(c) for p in A.params))


def pi_compose(B: PIOperator, N: PIOperator) -> PIOperator:
    """Parameters of ``B o N``."""
    if B.dim_in != N.dim_out:
        raise ShapeError(f"cannot compose {B.shape} with {N.shape}")
    _check_domains(B, N)
    B0, B1, B2 = B.params
    N0, N1, N2 = N.params
    N0_t = N0.subs("s", "theta")
    R0 = poly_mul(B0, N0)
    R1 = (
        poly_mul(B0, N1)
        + poly_mul(B1, N0_t)
        + poly_int_product(B1, N2, "a", "theta")
        + poly_int_product(B1, N1, "theta", "s")
        + poly_int_product(B2, N1, "s", "b")
    )
    R2 = (
        poly_mul(B0, N2)
        + poly_mul(B2, N0_t)
        + poly_int_product(B1, N2, "a", "s")
        + poly_int_product(B2, N2, "s", "theta")
        + poly_int_product(B2, N1, "theta", "b")
    )
    return PIOperator(R0, R1, R2)


def pi_adjoint(P: PIOperator) -> PIOperator:
    """Adjoint in ``L2``: swap and transpose the kernels, transpose the multiplier."""
    return PIOperator(P.N0.transpose(), P.N2.swap().transpose(), P.N1.swap().transpose())


def pi_concat(blocks: Sequence[Sequence[PIOperator | None]]) -> PIOperator:
    """Block operator from a grid; ``None`` entries are zero blocks."""
    if not blocks or not blocks[0]:
        raise ShapeError("empty block grid")
    width = len(blocks[0])
    if any(len(row) != width for row in blocks):
        raise ShapeError("ragged block grid")
    domain = next((b.domain for row in blocks for b in row if b is not None), None)
    grids = [[[None if b is None else b.params[k] for b in row] for row in blocks] for k in range(3)]
    return PIOperator(*(PolyMat.bmat(g, domain) for g in grids))


# ---------------------------------------------------------------------------
# application to functions
# ---------------------------------------------------------------------------


def _as_callable(x, rule: QuadratureRule, dim: int):
    if isinstance(x, PolyMat):
        if x.cols != 1 or x.rows != dim:
            raise ShapeError(f"expected a {dim}x1 polynomial vector, got {x.shape}")
        return lambda s: x.evaluate(s)[:, 0]
    if callable(x):
        return x
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape != (dim, rule.order):
        raise ShapeError(f"samples must have shape ({dim}, {rule.order}), got {arr.shape}")
    return rule.interpolant(arr)


def pi_apply_numeric(P: PIOperator, x, rule: QuadratureRule | None = None, points=None) -> np.ndarray:
    """Apply a numeric operator by quadrature split at the kernel seam.

    ``x`` is a callable mapping an array of points to ``(dim_in, *shape)``
    values, a ``dim_in x 1`` PolyMat in ``s``, or samples at the rule's
    nodes (interpolated by a Legendre series).  The result is sampled at
    ``points`` (default: the rule's nodes) with shape ``(dim_out, npoints)``.
    """
    if not P.is_numeric:
        raise ValueError("operator carries decision variables")
    a, b = P.domain
    if rule is None:
        rule = QuadratureRule(a, b, DEFAULT_ORDER)
    elif not np.allclose((rule.a, rule.b), (a, b)):
        raise ShapeError("quadrature rule and operator live on different intervals")
    f = _as_callable(x, rule, P.dim_in)
    pts = rule.nodes if points is None else np.asarray(points, dtype=float).ravel()
    lo_n, lo_w, hi_n, hi_w = rule.split_nodes(pts)
    S = np.broadcast_to(pts[:, None], lo_n.shape)
    out = np.einsum("rcp,cp->rp", P.N0.evaluate(pts), f(pts))
    out += np.einsum("rcpk,cpk,pk->rp", P.N1.evaluate(S, lo_n), f(lo_n), lo_w)
    out += np.einsum("rcpk,cpk,pk->rp", P.N2.evaluate(S, hi_n), f(hi_n), hi_w)
    return out


def pi_apply_poly(P: PIOperator, x: PolyMat) -> PolyMat:
    """Exact image of a polynomial vector ``x(s)`` (a ``dim_in x 1`` PolyMat)."""
    if x.shape != (P.dim_in, 1):
        raise ShapeError(f"expected a {P.dim_in}x1 polynomial vector, got {x.shape}")
    if x.degree()[1] > 0:
        raise ValueError("x must depend on s only")
    x_t = x.swap()
    return (
        poly_mul(P.N0, x)
        + poly_int(poly_mul(P.N1, x_t), "theta", "a", "s")
        + poly_int(poly_mul(P.N2, x_t), "theta", "s", "b")
    )
