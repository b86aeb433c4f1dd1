"""Composite Gauss-Legendre helpers shared by the solvers.

Everything here works on a partition of an interval into cells, each cell
carrying ``p`` Gauss-Legendre nodes.  The cumulative routines integrate an
integrand sampled at those nodes and return the primitive at the nodes and
at the cell edges, anchored either at the left or at the right end.  Within
a cell the primitive is exact for polynomials of degree < p, so smooth
integrands converge spectrally as long as discontinuities sit on edges.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as L


@lru_cache(maxsize=None)
def gauss_legendre(p: int) -> tuple[np.ndarray, np.ndarray]:
    s, w = L.leggauss(p)
    return s, w


@lru_cache(maxsize=None)
def _integration_matrices(p: int) -> tuple[np.ndarray, np.ndarray]:
    # S_left[i, j] = int_{-1}^{s_i} l_j, S_right[i, j] = int_{s_i}^{1} l_j
    s, _ = gauss_legendre(p)
    V = L.legvander(s, p - 1)
    C = np.linalg.inv(V)
    A = np.empty((p, p))
    A1 = np.empty(p)
    Am1 = np.empty(p)
    for k in range(p):
        ck = np.zeros(p)
        ck[k] = 1.0
        ak = L.legint(ck)
        A[:, k] = L.legval(s, ak)
        A1[k] = L.legval(1.0, ak)
        Am1[k] = L.legval(-1.0, ak)
    S_left = (A - Am1[None, :]) @ C
    S_right = (A1[None, :] - A) @ C
    return S_left, S_right


def refine_edges(edges, h_max: float) -> np.ndarray:
    """Sorted unique edges, subdivided so no cell is longer than ``h_max``."""
    e = np.unique(np.asarray(edges, dtype=float))
    if e.size < 2:
        raise ValueError("need at least two distinct edges")
    out = [e[:1]]
    for a, b in zip(e[:-1], e[1:]):
        k = max(1, int(np.ceil((b - a) / h_max - 1e-12)))
        out.append(np.linspace(a, b, k + 1)[1:])
    return np.concatenate(out)


@dataclass(frozen=True)
class CellGrid:
    """Cells [edges[c], edges[c+1]] with p Gauss nodes each."""

    edges: np.ndarray
    p: int = 16

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def nodes(self) -> np.ndarray:
        s, _ = gauss_legendre(self.p)
        a = self.edges[:-1, None]
        return a + 0.5 * self.h[:, None] * (s[None, :] + 1.0)

    @property
    def weights(self) -> np.ndarray:
        _, w = gauss_legendre(self.p)
        return 0.5 * self.h[:, None] * w[None, :]

    def integrate(self, f_nodes: np.ndarray) -> complex:
        return np.sum(self.weights * f_nodes)

    def cumulative_right(self, f_nodes: np.ndarray):
        """Primitive int_x^{right end} f at the nodes and at the edges."""
        _, S_right = _integration_matrices(self.p)
        half = 0.5 * self.h[:, None]
        cell = np.sum(self.weights * f_nodes, axis=1)
        # value at right edge of cell c = sum of cells c+1..end
        tail = np.concatenate([np.cumsum(cell[::-1])[::-1][1:], [0.0]])
        at_nodes = tail[:, None] + half * (f_nodes @ S_right.T)
        at_edges = np.concatenate([tail + cell, [0.0]])
        return at_nodes, at_edges

    def cumulative_left(self, f_nodes: np.ndarray):
        """Primitive int_{left end}^x f at the nodes and at the edges."""
        S_left, _ = _integration_matrices(self.p)
        half = 0.5 * self.h[:, None]
        cell = np.sum(self.weights * f_nodes, axis=1)
        head = np.concatenate([[0.0], np.cumsum(cell)[:-1]])
        at_nodes = head[:, None] + half * (f_nodes @ S_left.T)
        at_edges = np.concatenate([head, [head[-1] + cell[-1]]])
        return at_nodes, at_edges


def adaptive_gl(fn, a: float, b: float, tol: float = 1e-10, breakpoints=(), max_depth: int = 40):
    """Adaptive composite Gauss rule (20 vs 10 point) on [a, b].

    Returns (value, error_estimate, converged).  ``fn`` must accept arrays.
    """
    if b <= a:
        return 0.0, 0.0, True
    pts = [a] + sorted(x for x in breakpoints if a < x < b) + [b]
    s20, w20 = gauss_legendre(20)
    s10, w10 = gauss_legendre(10)
    total = 0.0
    err = 0.0
    ok = True
    stack = [(lo, hi, 0) for lo, hi in zip(pts[:-1], pts[1:])]
    width = b - a
    while stack:
        # evaluate a batch of cells at once
        batch, stack = stack[:512], stack[512:]
        lo = np.array([c[0] for c in batch])
        hi = np.array([c[1] for c in batch])
        mid = 0.5 * (lo + hi)
        rad = 0.5 * (hi - lo)
        x20 = mid[:, None] + rad[:, None] * s20[None, :]
        x10 = mid[:, None] + rad[:, None] * s10[None, :]
        g20 = rad * (np.asarray(fn(x20.ravel())).reshape(x20.shape) @ w20)
        g10 = rad * (np.asarray(fn(x10.ravel())).reshape(x10.shape) @ w10)
        e = np.abs(g20 - g10)
        allow = np.maximum(tol * (hi - lo) / width, 1e-15 * np.abs(g20))
        for k, (l_, h_, d) in enumerate(batch):
            if e[k] <= allow[k]:
                total = total + g20[k]
                err += e[k]
            elif d >= max_depth:
                total = total + g20[k]
                err += e[k]
                ok = False
            else:
                m = 0.5 * (l_ + h_)
                stack.append((l_, m, d + 1))
                stack.append((m, h_, d + 1))
    return total, err, ok
