"""Gauss-Legendre rules and Legendre interpolation of sampled functions."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

DEFAULT_ORDER = 64


@lru_cache(maxsize=32)
def _reference(order: int):
    x, w = legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule with ``order`` nodes on ``[a, b]``.

    Exact for polynomials of degree ``2 * order - 1``.
    """

    a: float = 0.0
    b: float = 1.0
    order: int = DEFAULT_ORDER

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be positive")
        if not self.a < self.b:
            raise ValueError("need a < b")

    @property
    def nodes(self) -> np.ndarray:
        x, _ = _reference(self.order)
        return 0.5 * (self.b - self.a) * (x + 1.0) + self.a

    @property
    def weights(self) -> np.ndarray:
        _, w = _reference(self.order)
        return 0.5 * (self.b - self.a) * w

    def integrate(self, f) -> float:
        """Integral of a callable or of samples at the nodes (last axis)."""
        vals = f(self.nodes) if callable(f) else np.asarray(f)
        return np.tensordot(vals, self.weights, axes=([-1], [0]))

    def split_nodes(self, points):
        """Nodes/weights of the rule mapped onto ``[a, p]`` and ``[p, b]`` for each point.

        Returns ``(lo_nodes, lo_weights, hi_nodes, hi_weights)``, each of shape
        ``(len(points), order)``.
        """
        p = np.asarray(points, dtype=float)[:, None]
        x, w = _reference(self.order)
        half_lo = 0.5 * (p - self.a)
        half_hi = 0.5 * (self.b - p)
        lo_n = half_lo * (x + 1.0) + self.a
        hi_n = half_hi * (x + 1.0) + p
        return lo_n, half_lo * w, hi_n, half_hi * w

    def interpolant(self, samples):
        """Callable Legendre interpolant of ``samples`` (shape ``(..., order)``) at the nodes."""
        samples = np.asarray(samples, dtype=float)
        a, b = self.a, self.b
        t = (2.0 * self.nodes - (a + b)) / (b - a)
        V = legendre.legvander(t, self.order - 1)
        coeffs = np.linalg.solve(V, samples.reshape(-1, self.order).T)

        def f(s):
            s = np.asarray(s, dtype=float)
            u = (2.0 * s - (a + b)) / (b - a)
            vals = legendre.legval(u, coeffs)
            return vals.reshape(samples.shape[:-1] + s.shape)

        return f
