"""Conversion of a standardized PDE to a partial integral equation.

The fundamental state ``xf = (x0, x1_s, x2_ss)`` lives in L2 with no
boundary constraints.  The PDE state is recovered as ``x = T xf`` and the
derivatives the dynamics need as ``(x1_s, x2_s) = H xf``, so the PDE becomes
``T xf_t = A xf``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .oracle import l2_inner, x_inner
from .pde import PDESystem, PDEValidationError, build_T_const, check_wellposed
from .pi_operator import PIOperator, pi_add, pi_apply_numeric, pi_apply_poly, pi_compose
from .polynomial import PolyMat, poly_mul
from .quadrature import DEFAULT_ORDER, QuadratureRule

__all__ = [
    "GParams",
    "PIESystem",
    "IllPosedError",
    "build_G",
    "build_T",
    "build_H",
    "build_A",
    "build_A_direct",
    "convert",
    "ConversionReport",
    "verify_conversion",
    "boundary_values",
    "random_poly_vector",
]


class IllPosedError(PDEValidationError):
    """``B T`` is singular, so the boundary lift does not exist."""


@dataclass(frozen=True, eq=False)
class GParams:
    G0: PolyMat
    G1: PolyMat
    G2: PolyMat
    G3: PolyMat
    G4: PolyMat
    G5: PolyMat
    Q: PolyMat
    K: PolyMat
    V: np.ndarray
    T_const: np.ndarray


@dataclass(frozen=True, eq=False)
class PIESystem:
    T: PIOperator
    A: PIOperator
    H: PIOperator
    source: PDESystem = field(repr=False)

    @property
    def n(self) -> int:
        return self.T.dim_out


def _eye(k, dom):
    return PolyMat.identity(k, dom)


def _zero(r, c, dom):
    return PolyMat.zeros(r, c, dom)


def _scalar_times_eye(k, poly: PolyMat, dom):
    if k == 0:
        return _zero(0, 0, dom)
    return PolyMat.bmat([[poly if r == c else None for c in range(k)] for r in range(k)], dom) if k > 1 else poly


def build_G(sys: PDESystem) -> GParams:
    rep = check_wellposed(sys)
    if not rep.invertible:
        raise IllPosedError([("B", rep.summary())])
    n0, n1, n2, n = sys.n0, sys.n1, sys.n2, sys.n
    a, b = sys.domain
    dom = sys.domain
    m = n1 + 2 * n2
    Tc = build_T_const(n1, n2, a, b)

    s = PolyMat.monomial(1, 0, 1.0, dom)
    th = PolyMat.monomial(0, 1, 1.0, dom)
    one = PolyMat.monomial(0, 0, 1.0, dom)

    def diag_scalar(k, poly):
        return _scalar_times_eye(k, poly, dom) if k else _zero(0, 0, dom)

    # Q(theta): boundary values contributed by the fundamental state
    Z = lambda r, c: _zero(r, c, dom)  # noqa: E731
    rows_Q = [
        [Z(n1, n0), Z(n1, n1), Z(n1, n2)],
        [Z(n1, n0), _eye(n1, dom), Z(n1, n2)],
        [Z(n2, n0), Z(n2, n1), Z(n2, n2)],
        [Z(n2, n0), Z(n2, n1), diag_scalar(n2, one.scale(b) - th)],
        [Z(n2, n0), Z(n2, n1), Z(n2, n2)],
        [Z(n2, n0), Z(n2, n1), _eye(n2, dom)],
    ]
    Q = PolyMat.bmat(rows_Q, dom)
    # K(s): interior values from the boundary data x_bc = (x1(a), x2(a), x2s(a))
    K = PolyMat.bmat(
        [
            [Z(n0, n1), Z(n0, n2), Z(n0, n2)],
            [_eye(n1, dom), Z(n1, n2), Z(n1, n2)],
            [Z(n2, n1), _eye(n2, dom), diag_scalar(n2, s - one.scale(a))],
        ],
        dom,
    )
    V = np.zeros((n1 + n2, m))
    V[n1:, n1 + n2:] = np.eye(n2)

    BT = sys.B @ Tc
    if m:
        W = np.linalg.solve(BT, sys.B)  # (BT)^-1 B
        BQ = poly_mul(PolyMat.constant(W, dom), Q)
    else:
        BQ = _zero(0, n, dom)
    G2 = -poly_mul(K, BQ)
    G5 = -poly_mul(PolyMat.constant(V, dom), BQ) if m else _zero(n1 + n2, n, dom)

    G0 = PolyMat.bmat(
        [
            [_eye(n0, dom), Z(n0, n1), Z(n0, n2)],
            [Z(n1, n0), Z(n1, n1), Z(n1, n2)],
            [Z(n2, n0), Z(n2, n1), Z(n2, n2)],
        ],
        dom,
    )
    L1 = PolyMat.bmat(
        [
            [Z(n0, n0), Z(n0, n1), Z(n0, n2)],
            [Z(n1, n0), _eye(n1, dom), Z(n1, n2)],
            [Z(n2, n0), Z(n2, n1), diag_scalar(n2, s - th)],
        ],
        dom,
    )
    G1 = L1 + G2
    G3 = PolyMat.bmat(
        [
            [Z(n1, n0), _eye(n1, dom), Z(n1, n2)],
            [Z(n2, n0), Z(n2, n1), Z(n2, n2)],
        ],
        dom,
    )
    L4 = PolyMat.bmat(
        [
            [Z(n1, n0), Z(n1, n1), Z(n1, n2)],
            [Z(n2, n0), Z(n2, n1), _eye(n2, dom)],
        ],
        dom,
    )
    G4 = L4 + G5
    return GParams(G0, G1, G2, G3, G4, G5, Q, K, V, Tc)


def build_T(sys: PDESystem, G: GParams | None = None) -> PIOperator:
    G = G or build_G(sys)
    return PIOperator(G.G0, G.G1, G.G2)


def build_H(sys: PDESystem, G: GParams | None = None) -> PIOperator:
    G = G or build_G(sys)
    return PIOperator(G.G3, G.G4, G.G5)


def _A20(sys: PDESystem) -> PolyMat:
    n, dom = sys.n, sys.domain
    return PolyMat.bmat([[_zero(n, sys.n0 + sys.n1, dom), sys.A2]], dom) if sys.n2 else _zero(n, n, dom)


def build_A(sys: PDESystem, G: GParams | None = None) -> PIOperator:
    """Generator assembled by composing multipliers with ``T`` and ``H``."""
    G = G or build_G(sys)
    T, H = build_T(sys, G), build_H(sys, G)
    A = pi_compose(PIOperator.multiplier(sys.A0), T)
    A = pi_add(A, pi_compose(PIOperator.multiplier(sys.A1), H))
    return pi_add(A, PIOperator.multiplier(_A20(sys)))


def build_A_direct(sys: PDESystem, G: GParams | None = None) -> PIOperator:
    """Generator written out parameter by parameter (independent of ``pi_compose``)."""
    G = G or build_G(sys)
    H0 = poly_mul(sys.A0, G.G0) + poly_mul(sys.A1, G.G3) + _A20(sys)
    H1 = poly_mul(sys.A0, G.G1) + poly_mul(sys.A1, G.G4)
    H2 = poly_mul(sys.A0, G.G2) + poly_mul(sys.A1, G.G5)
    return PIOperator(H0, H1, H2)


def convert(sys: PDESystem) -> PIESystem:
    G = build_G(sys)
    return PIESystem(build_T(sys, G), build_A(sys, G), build_H(sys, G), sys)


# ---------------------------------------------------------------------------
# verification by exact differentiation and quadrature
# ---------------------------------------------------------------------------


def random_poly_vector(rng: np.random.Generator, n: int, degree: int, domain) -> PolyMat:
    coeffs = rng.normal(size=(n, 1, degree + 1, 1))
    return PolyMat.from_dense(coeffs, domain)


def boundary_values(sys: PDESystem, x: PolyMat) -> np.ndarray:
    """``(x1(a), x1(b), x2(a), x2(b), x2s(a), x2s(b))`` of a polynomial state."""
    n0, n1 = sys.n0, sys.n1
    a, b = sys.domain
    x1 = x.block(slice(n0, n0 + n1), slice(None))
    x2 = x.block(slice(n0 + n1, None), slice(None))
    x2s = x2.diff("s")
    parts = [
        x1.evaluate(a)[:, 0], x1.evaluate(b)[:, 0],
        x2.evaluate(a)[:, 0], x2.evaluate(b)[:, 0],
        x2s.evaluate(a)[:, 0], x2s.evaluate(b)[:, 0],
    ]
    return np.concatenate(parts)


def _fundamental(sys: PDESystem, x: PolyMat) -> PolyMat:
    n0, n1 = sys.n0, sys.n1
    return PolyMat.bmat(
        [
            [x.block(slice(0, n0), slice(None))],
            [x.block(slice(n0, n0 + n1), slice(None)).diff("s")],
            [x.block(slice(n0 + n1, None), slice(None)).diff("s").diff("s")],
        ],
        x.domain,
    )


@dataclass
class ConversionReport:
    trials: int
    bc_residual: float = 0.0
    reconstruction_error: float = 0.0
    unitarity_error: float = 0.0
    rhs_error: float = 0.0
    failures: list = field(default_factory=list)
    tol: float = 1e-8

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "bc_residual": self.bc_residual,
            "reconstruction_error": self.reconstruction_error,
            "unitarity_error": self.unitarity_error,
            "rhs_error": self.rhs_error,
            "passed": self.passed,
            "failures": self.failures,
        }


def verify_conversion(
    sys: PDESystem,
    pie: PIESystem,
    trials: int = 20,
    degree: int = 4,
    seed: int = 0,
    tol: float = 1e-8,
    coeff_tol: float = 1e-10,
) -> ConversionReport:
    """Check boundary conditions, reconstruction, unitarity and the right-hand side on random inputs."""
    rng = np.random.default_rng(seed)
    dom = sys.domain
    rule = QuadratureRule(*dom, DEFAULT_ORDER)
    n0, n1, n2, n = sys.n0, sys.n1, sys.n2, sys.n
    rep = ConversionReport(trials, tol=tol)
    for t in range(trials):
        xh = random_poly_vector(rng, n, degree, dom)
        yh = random_poly_vector(rng, n, degree, dom)
        x = pi_apply_poly(pie.T, xh)
        y = pi_apply_poly(pie.T, yh)
        bc = float(np.linalg.norm(sys.B @ boundary_values(sys, x))) if sys.B.size else 0.0
        diff = _fundamental(sys, x) - xh
        rec = float(np.max(np.abs(diff.data.data), initial=0.0))
        uni = abs(x_inner(x, y, n0, n1, n2, rule) - l2_inner(xh, yh, rule))
        # PDE right-hand side on x versus A applied to xh by quadrature
        x1s = x.block(slice(n0, n0 + n1), slice(None)).diff("s")
        x2s = x.block(slice(n0 + n1, None), slice(None)).diff("s")
        x2ss = x2s.diff("s")
        nodes = rule.nodes
        lhs = np.einsum("rcp,cp->rp", sys.A0.evaluate(nodes), x.evaluate(nodes)[:, 0])
        if n1 + n2:
            d1 = PolyMat.bmat([[x1s], [x2s]], dom)
            lhs += np.einsum("rcp,cp->rp", sys.A1.evaluate(nodes), d1.evaluate(nodes)[:, 0])
        if n2:
            lhs += np.einsum("rcp,cp->rp", sys.A2.evaluate(nodes), x2ss.evaluate(nodes)[:, 0])
        rhs = pi_apply_numeric(pie.A, xh, rule)
        rhs_err = float(np.max(np.abs(lhs - rhs), initial=0.0))
        rep.bc_residual = max(rep.bc_residual, bc)
        rep.reconstruction_error = max(rep.reconstruction_error, rec)
        rep.unitarity_error = max(rep.unitarity_error, uni)
        rep.rhs_error = max(rep.rhs_error, rhs_err)
        bad = {
            k: v
            for k, v, lim in (
                ("bc_residual", bc, tol),
                ("reconstruction_error", rec, coeff_tol),
                ("unitarity_error", uni, tol),
                ("rhs_error", rhs_err, tol),
            )
            if not v <= lim
        }
        if bad:
            rep.failures.append({"trial": t, **bad})
    return rep
