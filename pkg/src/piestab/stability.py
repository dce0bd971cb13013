"""Lyapunov stability test for PIEs and bisection of stability margins.

For ``T xf_t = A xf`` the candidate is ``V = <T xf, P T xf>`` with
``P = P_cone + eps I``.  Stability follows when
``-delta T*T - A*PT - T*PA`` is itself a member of the positive cone.  The
test is sufficient only: failure to certify says nothing about instability.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .convert import PIESystem, convert
from .lpi import SDPProblem, declare_pos_pivar, enforce_op_eq, solve, to_standard
from .oracle import spectral_abscissa
from .pde import PDEFamily, PDESystem
from .pi_operator import PIOperator, pi_adjoint, pi_compose
from .polynomial import PolyMat
from .sdp import Status, export_sdpa

__all__ = [
    "StabilityQuery",
    "Certificate",
    "BisectionResult",
    "BracketError",
    "check_stability",
    "bisect_margin",
    "discretization_oracle",
    "derivative_operator",
    "balancing_weights",
    "coupling_components",
    "DEFAULT_EPSILON",
    "DEFAULT_DELTA",
]

DEFAULT_EPSILON = 1e-4
DEFAULT_DELTA = 1e-3
CERTIFIED = "certified"
NOT_CERTIFIED = "not certified"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class StabilityQuery:
    pie: PIESystem
    d: int = 1
    epsilon: float = DEFAULT_EPSILON
    delta: float = DEFAULT_DELTA
    q_degree: int | None = None
    split_components: bool = True
    balance: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.delta >= 0:
            raise ValueError("delta must be nonnegative")
        if self.d < 0:
            raise ValueError("degree must be nonnegative")

    @property
    def dual_degree(self) -> int:
        """Degree of the cone matched against the derivative (one above ``d`` by default)."""
        return self.d + 1 if self.q_degree is None else self.q_degree

    @property
    def neutral(self) -> bool:
        return self.delta == 0


@dataclass
class Certificate:
    status: str
    d: int
    epsilon: float
    delta: float
    gram: list = field(default_factory=list)
    P: PIOperator | None = None
    min_gram_eigenvalue: float = math.nan
    max_equality_residual: float = math.nan
    solver_status: str = ""
    solve_time: float = 0.0
    assembly_time: float = 0.0
    sizes: dict = field(default_factory=dict)
    q_degree: int = 0
    groups: int = 1
    weights: list = field(default_factory=list)
    effective_epsilon: float = math.nan
    effective_delta: float = math.nan
    solver_margin: float = math.nan

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "degree": self.d,
            "q_degree": self.q_degree,
            "channel_groups": self.groups,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "channel_weights": self.weights,
            "effective_epsilon": self.effective_epsilon,
            "effective_delta": self.effective_delta,
            "solver_status": self.solver_status,
            "solver_margin": self.solver_margin,
            "min_gram_eigenvalue": self.min_gram_eigenvalue,
            "max_equality_residual": self.max_equality_residual,
            "sdp": self.sizes,
        }


def derivative_operator(pie: PIESystem, P: PIOperator, delta: float) -> PIOperator:
    """``-delta T*T - A*PT - T*PA`` for a given (possibly symbolic) ``P``."""
    T, A = pie.T, pie.A
    Ts, As = pi_adjoint(T), pi_adjoint(A)
    PT = pi_compose(P, T)
    PA = pi_compose(P, A)
    D = -(pi_compose(As, PT) + pi_compose(Ts, PA))
    if delta:
        D = D - delta * pi_compose(Ts, T)
    return D


def coupling_components(pie: PIESystem) -> list[np.ndarray]:
    """Groups of state channels that ``T`` or ``A`` couple, directly or through a chain."""
    n = pie.n
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for op in (pie.T, pie.A):
        for par in op.params:
            r, c, *_ = par._terms()
            for i, j in zip(r.tolist(), c.tolist()):
                parent[find(i)] = find(j)
    groups: dict = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [np.array(g) for g in sorted(groups.values())]


def balancing_weights(sys: PDESystem) -> np.ndarray:
    """Channel weights that make one-way (cascade) couplings weak.

    Channels are grouped into strongly coupled sets; the sets form a
    directed acyclic graph of one-way influences.  A channel at depth ``k``
    in that graph gets weight ``rho**k`` with ``rho`` the ratio of the
    weakest self term (highest-order diagonal coefficient) to the strongest
    coupling, capped at 1.  Returns all ones when there is no cascade.
    """
    from scipy.sparse.csgraph import connected_components

    n, n0, n1, n2 = sys.n, sys.n0, sys.n1, sys.n2
    dom = sys.domain
    cols_of = {
        "A0": np.arange(n),
        "A1": np.arange(n0, n),
        "A2": np.arange(n0 + n1, n),
    }
    edges = np.zeros((n, n), dtype=bool)
    strength = np.zeros((n, n))
    self_terms = []
    for name in ("A0", "A1", "A2"):
        mat = getattr(sys, name)
        if mat.is_zero:
            continue
        sup = np.max(np.abs(mat.evaluate(np.linspace(dom[0], dom[1], 65), 0.0)), axis=-1)
        r, c, *_ = mat._terms()
        for i, k in sorted(set(zip(r.tolist(), c.tolist()))):
            j = int(cols_of[name][k])
            val = float(sup[i, k])
            if val == 0.0:
                continue
            if i != j:
                edges[j, i] = True
                strength[j, i] = max(strength[j, i], val)
            elif name != "A0" or (n1 + n2 == 0):
                self_terms.append(val)
    bcols = np.concatenate([np.arange(n0, n0 + n1)] * 2 + [np.arange(n0 + n1, n)] * 4) if n1 + n2 else []
    for row in sys.B:
        chans = sorted({int(bcols[k]) for k in np.flatnonzero(row)})
        for i in chans:
            for j in chans:
                if i != j:
                    edges[i, j] = True
    ncomp, label = connected_components(edges, directed=True, connection="strong")
    if ncomp <= 1 or not self_terms:
        return np.ones(n)
    dag = np.zeros((ncomp, ncomp), dtype=bool)
    cross = 0.0
    for j, i in zip(*np.nonzero(edges)):
        if label[i] != label[j]:
            dag[label[j], label[i]] = True
            cross = max(cross, strength[j, i])
    if cross == 0.0:
        return np.ones(n)
    depth = np.zeros(ncomp, dtype=int)
    for _ in range(ncomp):
        for u, v in zip(*np.nonzero(dag)):
            depth[v] = max(depth[v], depth[u] + 1)
    rho = min(1.0, min(self_terms) / cross)
    return rho ** depth[label].astype(float)


def _declare(prob, n, d, dom, groups):
    """Positive operator, block diagonal over the channel groups."""
    if len(groups) == 1:
        return declare_pos_pivar(prob, n, d, dom).op
    parts = []
    for g in groups:
        op = declare_pos_pivar(prob, len(g), d, dom).op
        parts.append(PIOperator(*(p.place(n, n, g, g) for p in op.params)))
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total


def _working_system(q: StabilityQuery):
    """The PIE the SDP is built for, with the channel weights that produced it."""
    pie = q.pie
    if q.balance and pie.source is not None:
        w = balancing_weights(pie.source)
        if np.any(w != 1.0):
            return convert(pie.source.scaled(w)), w
    return pie, np.ones(pie.n)


def _assemble(q: StabilityQuery, pie: PIESystem | None = None):
    pie = q.pie if pie is None else pie
    n, dom = pie.n, pie.T.domain
    groups = coupling_components(pie) if q.split_components else [np.arange(n)]
    prob = SDPProblem()
    Pcone = _declare(prob, n, q.d, dom, groups)
    P = Pcone + q.epsilon * PIOperator.identity(n, dom)
    D = derivative_operator(pie, P, q.delta)
    Qcone = _declare(prob, n, q.dual_degree, dom, groups)
    enforce_op_eq(prob, D, Qcone)
    return prob, Pcone, Qcone


def check_stability(q: StabilityQuery, export_path=None, tol: float = 1e-8) -> Certificate:
    """Run the LPI test once and return the certificate or the failure status.

    With balancing the test runs on rescaled channels ``z = w x``; the
    returned ``P`` is mapped back (``W P_z W``) and the guaranteed
    constants become ``epsilon * min(w)**2`` and ``delta * min(w)**2``.
    """
    t0 = time.perf_counter()
    pie, w = _working_system(q)
    prob, Pvar, _ = _assemble(q, pie)
    t_asm = time.perf_counter() - t0
    if export_path is not None:
        export_sdpa(to_standard(prob), export_path)
    res = solve(prob, tol=tol)
    if res.status == Status.FEASIBLE:
        status = CERTIFIED
    elif res.status == Status.INFEASIBLE:
        status = NOT_CERTIFIED
    else:
        status = INCONCLUSIVE
    grams = [prob.gram(k) for k in range(len(prob.block_sizes))]
    dom = pie.T.domain
    P = Pvar.instantiate(prob.values) + q.epsilon * PIOperator.identity(pie.n, dom)
    if np.any(w != 1.0):
        W = PIOperator.multiplier(PolyMat.constant(np.diag(w), dom))
        P = W @ P @ W
    info = res.info.get("standard_form", {})
    return Certificate(
        status, q.d, q.epsilon, q.delta, grams, P, res.min_eigenvalue, res.primal_residual,
        res.solver_status, res.solve_time, t_asm, info,
        q.dual_degree, len(coupling_components(pie)) if q.split_components else 1,
        w.tolist(), q.epsilon * float(w.min()) ** 2, q.delta * float(w.min()) ** 2,
        float(res.info.get("margin", math.nan)),
    )


# ---------------------------------------------------------------------------
# bisection
# ---------------------------------------------------------------------------


class BracketError(ValueError):
    """The supplied interval does not bracket the certification boundary."""


@dataclass
class BisectionResult:
    parameter: str
    certified_at: float
    not_certified_at: float
    probes: list = field(default_factory=list)

    @property
    def width(self) -> float:
        return abs(self.not_certified_at - self.certified_at)

    @property
    def margin(self) -> float:
        return self.certified_at

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "certified_at": self.certified_at,
            "not_certified_at": self.not_certified_at,
            "width": self.width,
            "probes": [{"value": v, "status": s} for v, s in self.probes],
        }


def bisect_margin(
    family: PDEFamily | Callable[[float], PDESystem],
    param: str,
    lo: float,
    hi: float,
    tol: float = 1e-2,
    d: int = 1,
    epsilon: float = DEFAULT_EPSILON,
    delta: float = DEFAULT_DELTA,
    max_probes: int = 40,
    fixed: dict | None = None,
    on_probe: Callable | None = None,
    q_degree: int | None = None,
) -> BisectionResult:
    """Bisect the certification boundary of ``param`` between ``lo`` (certified) and ``hi`` (not)."""
    fixed = dict(fixed or {})

    def build(v):
        if isinstance(family, PDEFamily):
            return family.instantiate(**{**fixed, param: v})
        return family(v)

    probes: list = []

    def probe(v):
        if len(probes) >= max_probes:
            raise BracketError(f"probe budget of {max_probes} exhausted")
        cert = check_stability(StabilityQuery(convert(build(v)), d, epsilon, delta, q_degree))
        probes.append((float(v), cert.status))
        if on_probe:
            on_probe(float(v), cert)
        return cert.status

    if probe(lo) != CERTIFIED:
        raise BracketError(f"{param}={lo} is not certified; widen the interval")
    if probe(hi) == CERTIFIED:
        raise BracketError(f"{param}={hi} is certified; widen the interval")
    good, bad = float(lo), float(hi)
    while abs(bad - good) > tol:
        mid = 0.5 * (good + bad)
        if probe(mid) == CERTIFIED:
            good = mid
        else:
            bad = mid
    if all(s == INCONCLUSIVE for _, s in probes[1:]):
        raise BracketError("every probe beyond the lower end was inconclusive")
    return BisectionResult(param, good, bad, probes)


def discretization_oracle(sys: PDESystem, grid: int = 400) -> float:
    """Spectral abscissa of a finite-difference model of ``sys`` (independent of the LPI path)."""
    return spectral_abscissa(sys, grid)
