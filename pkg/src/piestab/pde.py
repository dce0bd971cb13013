"""Standardized coupled linear PDEs and boundary-condition well-posedness.

The state is partitioned as ``x = (x0, x1, x2)`` with ``x0`` in L2, ``x1``
once and ``x2`` twice differentiable.  The dynamics are::

    x_t = A0(s) x + A1(s) [x1_s; x2_s] + A2(s) x2_ss

subject to ``B @ [x1(a), x1(b), x2(a), x2(b), x2_s(a), x2_s(b)] = 0``.
"""
from __future__ import annotations

import ast
import json
import math
import operator
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .polynomial import PolyMat

__all__ = [
    "PDESystem",
    "PDEFamily",
    "PDEValidationError",
    "WellPosednessReport",
    "build_T_const",
    "build_T_perp",
    "check_wellposed",
    "load_pde",
    "load_family",
    "serialize",
    "bundled_examples",
    "resolve_example",
    "SINGULAR_RTOL",
    "diffusion_channels",
]

#: BT counts as singular when sigma_min < SINGULAR_RTOL * max(sigma_max, 1).
SINGULAR_RTOL = 1e-9

EXAMPLES_DIR = Path(__file__).with_name("examples")


class PDEValidationError(ValueError):
    """Structured validation failure; ``problems`` lists ``(field, message)`` pairs."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [("", problems)]
        self.problems = list(problems)
        super().__init__("; ".join(f"{f}: {m}" if f else m for f, m in self.problems))


def _boundary_labels(n1: int, n2: int) -> list[str]:
    labels = []
    for name, n in (("x1(a)", n1), ("x1(b)", n1), ("x2(a)", n2), ("x2(b)", n2), ("x2s(a)", n2), ("x2s(b)", n2)):
        labels += [name if n == 1 else f"{name}[{k}]" for k in range(n)]
    return labels


@dataclass(frozen=True, eq=False)
class PDESystem:
    n0: int
    n1: int
    n2: int
    A0: PolyMat
    A1: PolyMat
    A2: PolyMat
    B: np.ndarray
    domain: tuple = (0.0, 1.0)
    name: str = ""

    def __post_init__(self):
        a, b = (float(v) for v in self.domain)
        object.__setattr__(self, "domain", (a, b))
        B = np.atleast_2d(np.asarray(self.B, dtype=float)) if np.size(self.B) else np.zeros((0, 0))
        n1, n2 = self.n1, self.n2
        if B.size == 0:
            B = np.zeros((n1 + 2 * n2, 2 * n1 + 4 * n2))
        B.setflags(write=False)
        object.__setattr__(self, "B", B)
        problems = []
        if min(self.n0, self.n1, self.n2) < 0:
            problems.append(("n0/n1/n2", "partition sizes must be nonnegative"))
        if not a < b:
            problems.append(("domain", f"need a < b, got [{a}, {b}]"))
        n = self.n0 + n1 + n2
        for fld, mat, shape in (
            ("A0", self.A0, (n, n)),
            ("A1", self.A1, (n, n1 + n2)),
            ("A2", self.A2, (n, n2)),
        ):
            if mat.shape != shape:
                problems.append((fld, f"expected shape {shape}, got {mat.shape}"))
            elif mat.degree()[1] > 0:
                problems.append((fld, "coefficients must depend on s only"))
            elif not np.allclose(mat.domain, (a, b)):
                problems.append((fld, "polynomial domain differs from the system domain"))
        if B.shape != (n1 + 2 * n2, 2 * n1 + 4 * n2):
            problems.append(("B", f"expected shape {(n1 + 2 * n2, 2 * n1 + 4 * n2)}, got {B.shape}"))
        elif not np.all(np.isfinite(B)):
            problems.append(("B", "entries must be finite"))
        if problems:
            raise PDEValidationError(problems)

    @property
    def n(self) -> int:
        return self.n0 + self.n1 + self.n2

    @property
    def a(self) -> float:
        return self.domain[0]

    @property
    def b(self) -> float:
        return self.domain[1]

    @property
    def boundary_labels(self) -> list[str]:
        return _boundary_labels(self.n1, self.n2)

    def scaled(self, weights) -> "PDESystem":
        """The same dynamics in the variables ``z_i = weights[i] * x_i``."""
        c = np.asarray(weights, dtype=float)
        if c.shape != (self.n,) or np.any(c <= 0):
            raise ValueError(f"need {self.n} positive channel weights")
        dom = self.domain
        n0, n1 = self.n0, self.n1
        c1, c2 = c[n0:n0 + n1], c[n0 + n1:]
        left = PolyMat.constant(np.diag(c), dom)

        def right(w):
            return PolyMat.constant(np.diag(1.0 / w), dom) if w.size else PolyMat.zeros(0, 0, dom)

        A0 = left @ self.A0 @ right(c)
        A1 = left @ self.A1 @ right(c[n0:])
        A2 = left @ self.A2 @ right(c2)
        bnd = np.concatenate([c1, c1, c2, c2, c2, c2])
        B = self.B / bnd[None, :] if bnd.size else self.B
        return PDESystem(n0, n1, self.n2, A0, A1, A2, B, dom, self.name)

    def with_B(self, B) -> "PDESystem":
        return PDESystem(self.n0, self.n1, self.n2, self.A0, self.A1, self.A2, B, self.domain, self.name)

    def __eq__(self, other):
        if not isinstance(other, PDESystem):
            return NotImplemented
        return (
            (self.n0, self.n1, self.n2, self.domain) == (other.n0, other.n1, other.n2, other.domain)
            and self.A0 == other.A0
            and self.A1 == other.A1
            and self.A2 == other.A2
            and np.array_equal(self.B, other.B)
        )

    __hash__ = None


# ---------------------------------------------------------------------------
# boundary lift and well-posedness
# ---------------------------------------------------------------------------


def build_T_const(n1: int, n2: int, a: float, b: float) -> np.ndarray:
    """Map from ``(x1(a), x2(a), x2s(a))`` to the full boundary vector, ignoring interior terms."""
    I1, I2 = np.eye(n1), np.eye(n2)
    m = n1 + 2 * n2
    T = np.zeros((2 * n1 + 4 * n2, m))
    r = 0
    for block in (
        [I1, None, None],
        [I1, None, None],
        [None, I2, None],
        [None, I2, (b - a) * I2],
        [None, None, I2],
        [None, None, I2],
    ):
        h = block[0].shape[0] if block[0] is not None else n2
        c = 0
        for blk, w in zip(block, (n1, n2, n2)):
            if blk is not None:
                T[r:r + h, c:c + w] = blk
            c += w
        r += h
    return T


def build_T_perp(n1: int, n2: int, a: float, b: float) -> np.ndarray:
    """Rows spanning the orthogonal complement of the columns of ``build_T_const``.

    Block rows: ``x1(a) - x1(b)``, ``x2(a) - x2(b) + (b-a) x2s(a)``, ``x2s(a) - x2s(b)``.
    """
    I1, I2 = np.eye(n1), np.eye(n2)
    Z12, Z21 = np.zeros((n1, n2)), np.zeros((n2, n1))
    Z22 = np.zeros((n2, n2))
    rows = [
        np.hstack([I1, -I1, Z12, Z12, Z12, Z12]),
        np.hstack([Z21, Z21, I2, -I2, (b - a) * I2, Z22]),
        np.hstack([Z21, Z21, Z22, Z22, I2, -I2]),
    ]
    return np.vstack(rows) if rows else np.zeros((0, 2 * n1 + 4 * n2))


_PATTERNS = ("x1(a) = x1(b)", "x2(a) + (b-a) x2s(a) = x2(b)", "x2s(a) = x2s(b)")


@dataclass(frozen=True)
class WellPosednessReport:
    bt_matrix: np.ndarray
    invertible: bool
    condition_estimate: float
    rank_of_B: int
    prohibited_bc_detected: bool
    prohibited_combinations: tuple = ()
    expected_rank: int = 0

    @property
    def rank_deficient(self) -> bool:
        return self.rank_of_B < self.expected_rank

    def summary(self) -> str:
        if self.invertible:
            return f"well-posed: BT invertible (cond {self.condition_estimate:.3g}, rank B = {self.rank_of_B})"
        why = []
        if self.rank_deficient:
            why.append(f"B is rank deficient ({self.rank_of_B} < {self.expected_rank})")
        if self.prohibited_bc_detected:
            why.append("prohibited boundary combination: " + "; ".join(self.prohibited_combinations))
        return "ill-posed: BT singular" + (" (" + "; ".join(why) + ")" if why else "")

    def to_dict(self) -> dict:
        return {
            "invertible": bool(self.invertible),
            "condition_estimate": float(self.condition_estimate),
            "rank_of_B": int(self.rank_of_B),
            "expected_rank": int(self.expected_rank),
            "prohibited_bc_detected": bool(self.prohibited_bc_detected),
            "prohibited_combinations": list(self.prohibited_combinations),
            "bt_matrix": np.asarray(self.bt_matrix).tolist(),
        }


def _singular_tol(svals) -> float:
    return SINGULAR_RTOL * max(float(svals.max(initial=0.0)), 1.0)


def _describe_prohibited(w: np.ndarray, n1: int, n2: int, a: float, b: float) -> list[str]:
    """Name the prohibited relations making up a boundary functional in row(T_perp)."""
    Tp = build_T_perp(n1, n2, a, b)
    coef, *_ = np.linalg.lstsq(Tp.T, w, rcond=None)
    coef = coef / max(np.abs(coef).max(), 1e-300)
    out = []
    offs = [0, n1, n1 + n2, n1 + 2 * n2]
    sizes = [n1, n2, n2]
    for k in range(3):
        for j in range(sizes[k]):
            if abs(coef[offs[k] + j]) > 1e-8:
                tag = _PATTERNS[k]
                if sizes[k] > 1:
                    tag = tag.replace(")", f")[{j}]")
                out.append(tag)
    return out


def check_wellposed(sys: PDESystem) -> WellPosednessReport:
    n1, n2 = sys.n1, sys.n2
    m = n1 + 2 * n2
    T = build_T_const(n1, n2, sys.a, sys.b)
    BT = sys.B @ T
    if m == 0:
        return WellPosednessReport(BT, True, 1.0, 0, False, (), 0)
    sv = np.linalg.svd(BT, compute_uv=False)
    tol = _singular_tol(sv)
    invertible = bool(sv.min() >= tol)
    cond = float(sv.max() / sv.min()) if sv.min() > 0 else math.inf
    svB = np.linalg.svd(sys.B, compute_uv=False)
    rank = int(np.sum(svB >= _singular_tol(svB)))
    prohibited = False
    combos: list[str] = []
    if not invertible and rank == m:
        prohibited = True
        U, svals, _ = np.linalg.svd(BT)
        for k in np.flatnonzero(svals < tol):
            combos += _describe_prohibited(U[:, k] @ sys.B, n1, n2, sys.a, sys.b)
        combos = list(dict.fromkeys(combos))
    return WellPosednessReport(BT, invertible, cond, rank, prohibited, tuple(combos), m)


# ---------------------------------------------------------------------------
# description files
# ---------------------------------------------------------------------------

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"sqrt": math.sqrt, "exp": math.exp, "sin": math.sin, "cos": math.cos}
_CONSTS = {"pi": math.pi, "e": math.e}
_IDENT = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")


def evaluate_expression(expr, params: Mapping[str, float]) -> float:
    """Evaluate a numeric literal or an arithmetic expression over named parameters."""
    if isinstance(expr, bool):
        raise ValueError("booleans are not numbers")
    if isinstance(expr, (int, float)):
        return float(expr)
    if not isinstance(expr, str):
        raise ValueError(f"expected a number or expression string, got {type(expr).__name__}")
    names = {}

    def rename(m):
        word = m.group(0)
        key = f"_v{len(names)}"
        for k, v in names.items():
            if v == word:
                return k
        names[key] = word
        return key

    src = _IDENT.sub(rename, expr)
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse expression {expr!r}") from exc

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Name):
            word = names[node.id]
            if word in params:
                return float(params[word])
            if word in _CONSTS:
                return _CONSTS[word]
            raise ValueError(f"unknown name {word!r} in expression {expr!r}")
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
            fn = names[node.func.id]
            if fn in _FUNCS and len(node.args) == 1:
                return _FUNCS[fn](ev(node.args[0]))
        raise ValueError(f"unsupported construct in expression {expr!r}")

    try:
        return float(ev(tree))
    except ZeroDivisionError as exc:
        raise ValueError(f"division by zero in expression {expr!r}") from exc


def _entries_to_polymat(entries, rows, cols, domain, params, fld, problems):
    terms: dict = {}
    if entries is None:
        entries = []
    if not isinstance(entries, list):
        problems.append((fld, "must be a list of {row, col, coeffs} entries"))
        return PolyMat.zeros(rows, cols, domain)
    for k, ent in enumerate(entries):
        where = f"{fld}[{k}]"
        if not isinstance(ent, dict):
            problems.append((where, "entry must be an object"))
            continue
        missing = [key for key in ("row", "col", "coeffs") if key not in ent]
        if missing:
            problems.append((where, f"missing field(s) {', '.join(missing)}"))
            continue
        r, c, coeffs = ent["row"], ent["col"], ent["coeffs"]
        if not (isinstance(r, int) and isinstance(c, int)) or isinstance(r, bool) or isinstance(c, bool):
            problems.append((where, "row/col must be integers"))
            continue
        if not (0 <= r < rows and 0 <= c < cols):
            problems.append((where, f"index ({r}, {c}) out of range for a {rows}x{cols} matrix"))
            continue
        if not isinstance(coeffs, list):
            problems.append((f"{where}.coeffs", "must be a list"))
            continue
        for i, expr in enumerate(coeffs):
            try:
                v = evaluate_expression(expr, params)
            except ValueError as exc:
                problems.append((f"{where}.coeffs[{i}]", str(exc)))
                continue
            if v != 0.0:
                key = (r, c)
                terms.setdefault(key, {})
                terms[key][(i, 0)] = terms[key].get((i, 0), 0.0) + v
    return PolyMat.from_entries(rows, cols, terms, domain)


def _json_loads(text: str, source: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise PDEValidationError([(f"{source}:{exc.lineno}:{exc.colno}", f"invalid JSON: {exc.msg}")]) from None


def _int_field(doc, key, problems):
    v = doc.get(key)
    if not isinstance(v, int) or isinstance(v, bool) or v < 0:
        problems.append((key, "must be a nonnegative integer"))
        return 0
    return v


@dataclass(frozen=True)
class PDEFamily:
    """A PDE description whose coefficients may reference named scalar parameters."""

    document: Mapping[str, Any]
    parameters: Mapping[str, float] = field(default_factory=dict)
    source: str = "<memory>"

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], source: str = "<memory>") -> "PDEFamily":
        if not isinstance(doc, dict):
            raise PDEValidationError([(source, "top level must be an object")])
        params = doc.get("parameters", {}) or {}
        if not isinstance(params, dict):
            raise PDEValidationError([("parameters", "must be an object {name: default}")])
        problems = []
        clean = {}
        for k, v in params.items():
            if not _IDENT.fullmatch(str(k)):
                problems.append((f"parameters.{k}", "not a valid identifier"))
            elif isinstance(v, bool) or not isinstance(v, (int, float)):
                problems.append((f"parameters.{k}", "default must be a number"))
            else:
                clean[k] = float(v)
        if problems:
            raise PDEValidationError(problems)
        fam = cls(doc, clean, source)
        fam.instantiate()  # surface schema errors at load time
        return fam

    @property
    def name(self) -> str:
        return str(self.document.get("name", Path(self.source).stem))

    @property
    def description(self) -> str:
        return str(self.document.get("description", ""))

    def instantiate(self, **overrides) -> PDESystem:
        unknown = set(overrides) - set(self.parameters)
        if unknown:
            raise PDEValidationError([("parameters", f"unknown parameter(s): {', '.join(sorted(unknown))}")])
        params = {**self.parameters, **{k: float(v) for k, v in overrides.items()}}
        doc = self.document
        problems: list = []
        known = {"name", "description", "notes", "domain", "n0", "n1", "n2", "A0", "A1", "A2", "B", "parameters"}
        for key in doc:
            if key not in known:
                problems.append((key, "unknown field"))
        dom = doc.get("domain", [0.0, 1.0])
        try:
            a, b = (evaluate_expression(v, params) for v in dom)
            if not a < b:
                raise ValueError("need a < b")
        except (TypeError, ValueError) as exc:
            problems.append(("domain", f"must be [a, b] with a < b ({exc})"))
            a, b = 0.0, 1.0
        n0, n1, n2 = (_int_field(doc, k, problems) for k in ("n0", "n1", "n2"))
        n = n0 + n1 + n2
        domain = (a, b)
        A0 = _entries_to_polymat(doc.get("A0"), n, n, domain, params, "A0", problems)
        A1 = _entries_to_polymat(doc.get("A1"), n, n1 + n2, domain, params, "A1", problems)
        A2 = _entries_to_polymat(doc.get("A2"), n, n2, domain, params, "A2", problems)
        m, width = n1 + 2 * n2, 2 * n1 + 4 * n2
        rawB = doc.get("B", [])
        B = np.zeros((m, width))
        if not isinstance(rawB, list) or len(rawB) != m:
            problems.append(("B", f"must be a list of {m} rows of length {width}"))
        else:
            for i, row in enumerate(rawB):
                if not isinstance(row, list) or len(row) != width:
                    problems.append((f"B[{i}]", f"row must have length {width}"))
                    continue
                for j, expr in enumerate(row):
                    try:
                        B[i, j] = evaluate_expression(expr, params)
                    except ValueError as exc:
                        problems.append((f"B[{i}][{j}]", str(exc)))
        if problems:
            raise PDEValidationError(problems)
        return PDESystem(n0, n1, n2, A0, A1, A2, B, domain, self.name)


def _read_source(path) -> tuple[str, str]:
    if isinstance(path, Mapping):
        return None, "<memory>"
    p = Path(path)
    if not p.exists():
        p = resolve_example(str(path))
    return p.read_text(), str(p)


def load_family(path) -> PDEFamily:
    """Load a description (path, bundled example name, or dict) keeping parameters symbolic."""
    if isinstance(path, Mapping):
        return PDEFamily.from_dict(dict(path))
    text, source = _read_source(path)
    return PDEFamily.from_dict(_json_loads(text, source), source)


def load_pde(path, **params) -> PDESystem:
    """Load and validate a PDE description, applying parameter overrides."""
    return load_family(path).instantiate(**params)


def _polymat_entries(P: PolyMat) -> list:
    out = []
    C = P.to_dense() if not P.is_zero else None
    if C is None:
        return out
    for r in range(P.rows):
        for c in range(P.cols):
            coeffs = C[r, c, :, 0]
            if np.any(coeffs):
                last = int(np.flatnonzero(coeffs).max())
                out.append({"row": r, "col": c, "coeffs": [float(v) for v in coeffs[: last + 1]]})
    return out


def serialize(sys: PDESystem) -> dict:
    """JSON-compatible description; ``load_pde(serialize(sys)) == sys``."""
    doc = {
        "domain": [sys.a, sys.b],
        "n0": sys.n0,
        "n1": sys.n1,
        "n2": sys.n2,
        "A0": _polymat_entries(sys.A0),
        "A1": _polymat_entries(sys.A1),
        "A2": _polymat_entries(sys.A2),
        "B": [[float(v) for v in row] for row in sys.B],
    }
    if sys.name:
        doc = {"name": sys.name, **doc}
    return doc


def bundled_examples() -> list[str]:
    return sorted(p.stem for p in EXAMPLES_DIR.glob("*.json"))


def resolve_example(name: str) -> Path:
    """Map ``examples/<name>``, ``<name>`` or ``<name>.json`` to a bundled file."""
    stem = Path(name).name
    if stem.endswith(".json"):
        stem = stem[:-5]
    p = EXAMPLES_DIR / f"{stem}.json"
    if not p.exists():
        raise FileNotFoundError(f"no such file or bundled example: {name!r}")
    return p


def diffusion_channels(n: int, reaction: float = 1.0, domain=(0.0, 1.0)) -> PDESystem:
    """``n`` uncoupled channels ``x_t = reaction x + x_ss`` with Dirichlet ends."""
    if n < 1:
        raise ValueError("need at least one channel")
    A0 = PolyMat.constant(reaction * np.eye(n), domain)
    A2 = PolyMat.identity(n, domain)
    B = np.zeros((2 * n, 4 * n))
    B[:n, :n] = np.eye(n)
    B[n:, n:2 * n] = np.eye(n)
    return PDESystem(0, 0, n, A0, PolyMat.zeros(n, n, domain), A2, B, domain, f"diffusion_channels_{n}")
