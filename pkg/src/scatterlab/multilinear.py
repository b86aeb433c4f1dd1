"""Martingale structures, g_delta functionals and ordered multilinear integrals.

A martingale structure on [a, b] is stored as one breakpoint array per level,
level m holding 2^m + 1 points; cell E^m_j = [x^m_{j-1}, x^m_j].  Level m is
every second point of level m + 1, so the nesting holds by construction.

M_n(f_1..f_n) = int_{x_1 <= .. <= x_n} prod f_i(x_i) is evaluated through the
primitive chain G_1 = int^x f_1, G_k = int^x f_k G_{k-1}, G_n(inf) = M_n, on
composite Gauss-Legendre cells.  For step functions G_k is a polynomial of
degree < n on every cell, so the chain is exact up to rounding.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from ._quad import CellGrid, gauss_legendre, refine_edges

DEPTH = 14
DELTA = 0.05
DELTA_PRIME = 0.1
N_MAX_BRUTE = 6


# -- function handles -----------------------------------------------------------

@dataclass(frozen=True)
class StepFunction:
    edges: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if e.ndim != 1 or v.shape != (e.size - 1,) or np.any(np.diff(e) <= 0):
            raise ValueError("edges must increase and carry one value per cell")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "values", v)

    @property
    def support(self):
        return float(self.edges[0]), float(self.edges[-1])

    @property
    def breaks(self):
        return self.edges

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = np.searchsorted(self.edges, x, side="right") - 1
        inside = (k >= 0) & (k < self.values.size)
        return np.where(inside, self.values[np.clip(k, 0, self.values.size - 1)], 0.0)

    def reflect(self) -> "StepFunction":
        return StepFunction(-self.edges[::-1], self.values[::-1])

    def __add__(self, other: "StepFunction") -> "StepFunction":
        e = np.union1d(self.edges, other.edges)
        mid = 0.5 * (e[:-1] + e[1:])
        return StepFunction(e, self(mid) + other(mid))


@dataclass(frozen=True)
class Handle:
    """A vectorised callable with compact support and known breakpoints."""

    fn: Callable
    a: float
    b: float
    breaks: tuple = ()
    resolution: float | None = None

    @property
    def support(self):
        return self.a, self.b

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.a) & (x <= self.b), self.fn(x), 0.0)


def as_handle(f) -> StepFunction | Handle:
    if isinstance(f, (StepFunction, Handle)):
        return f
    if isinstance(f, tuple) and len(f) >= 3:
        fn, a, b, *rest = f
        return Handle(fn, float(a), float(b), tuple(rest[0]) if rest else ())
    raise TypeError("expected StepFunction, Handle or (fn, a, b[, breaks])")


def indicator(a: float, b: float, value=1.0) -> StepFunction:
    return StepFunction(np.array([a, b]), np.array([value]))


def _edges_for(fs, h_max: float):
    pts = []
    for f in fs:
        a, b = f.support
        if not (np.isfinite(a) and np.isfinite(b)):
            raise ValueError("unbounded support")
        pts += [a, b, *[x for x in f.breaks if a <= x <= b]]
    return refine_edges(pts, h_max)


def _chain(fs, edges, p: int = 16):
    grid = CellGrid(edges, p)
    xs = grid.nodes
    G_nodes = np.ones_like(xs, dtype=complex)
    for f in fs:
        G_nodes, G_edges = grid.cumulative_left(np.asarray(f(xs), dtype=complex) * G_nodes)
    return grid, G_nodes, G_edges


# -- brute-force multilinear integrals ------------------------------------------

def _check_n(fs):
    if not 1 <= len(fs) <= N_MAX_BRUTE:
        raise ValueError(f"brute force limited to 1 <= n <= {N_MAX_BRUTE}")


def m_n_bruteforce(fs: Sequence, tol: float = 1e-8) -> complex:
    """int over x_1 <= .. <= x_n of prod f_i(x_i)."""
    fs = [as_handle(f) for f in fs]
    _check_n(fs)
    if all(isinstance(f, StepFunction) for f in fs):
        return complex(_chain(fs, _edges_for(fs, np.inf))[2][-1])
    width = max(f.support[1] for f in fs) - min(f.support[0] for f in fs)
    h = width / 4
    prev = complex(_chain(fs, _edges_for(fs, h))[2][-1])
    for _ in range(12):
        h /= 2
        cur = complex(_chain(fs, _edges_for(fs, h))[2][-1])
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    raise RuntimeError("primitive chain did not settle")


def m_n_star_bruteforce(fs: Sequence, tol: float = 1e-6) -> float:
    """sup_y |int_{x_1 <= .. <= x_n <= y} prod f_i(x_i)|."""
    fs = [as_handle(f) for f in fs]
    _check_n(fs)
    width = max(f.support[1] for f in fs) - min(f.support[0] for f in fs)
    h = width / 8
    prev = None
    for _ in range(16):
        _, G_nodes, G_edges = _chain(fs, _edges_for(fs, h))
        cur = float(max(np.max(np.abs(G_nodes)), np.max(np.abs(G_edges))))
        if prev is not None and abs(cur - prev) < tol:
            return cur
        prev = cur
        h /= 2
    raise RuntimeError("sup grid did not settle")


# -- martingale structures ----------------------------------------------------------

@dataclass
class MartingaleStructure:
    interval: tuple[float, float]
    levels: list  # levels[m] has 2^m + 1 breakpoints
    mode: str = "uniform"
    meta: dict = field(default_factory=dict)

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def cells(self, m: int):
        x = self.levels[m]
        return x[:-1], x[1:]

    def check(self) -> bool:
        a, b = self.interval
        for m, x in enumerate(self.levels):
            if x.size != 2**m + 1 or x[0] != a or x[-1] != b or np.any(np.diff(x) < 0):
                return False
            if m and not np.array_equal(self.levels[m - 1], x[::2]):
                return False
        return True


def uniform_structure(a: float, b: float, M: int = DEPTH) -> MartingaleStructure:
    fine = np.linspace(a, b, 2**M + 1)
    return MartingaleStructure((a, b), [fine[:: 2 ** (M - m)] for m in range(M + 1)])


class _Primitive:
    """Exact running integral of an integrand on a cell grid."""

    def __init__(self, fn, edges, p: int = 20):
        self.fn = fn
        self.grid = CellGrid(np.asarray(edges, dtype=float), p)
        _, at_edges = self.grid.cumulative_left(fn(self.grid.nodes))
        self.at_edges = np.real_if_close(at_edges)
        self.p = p

    @property
    def total(self):
        return self.at_edges[-1]

    def __call__(self, x: float):
        e = self.grid.edges
        c = int(np.clip(np.searchsorted(e, x, side="right") - 1, 0, e.size - 2))
        lo = e[c]
        if x <= lo:
            return self.at_edges[c]
        s, w = gauss_legendre(self.p)
        half = 0.5 * (x - lo)
        return self.at_edges[c] + half * np.sum(w * self.fn(lo + half * (s + 1)))

    def invert(self, target: float) -> float:
        """x with P(x) = target; P must be non-decreasing."""
        e = self.grid.edges
        tab = np.maximum.accumulate(np.real(self.at_edges))
        c = int(np.clip(np.searchsorted(tab, target, side="left") - 1, 0, e.size - 2))
        lo, hi = e[c], e[c + 1]
        flo = float(np.real(self(lo))) - target
        fhi = float(np.real(self(hi))) - target
        if flo >= 0:
            return lo
        if fhi <= 0:
            return hi
        return brentq(lambda y: float(np.real(self(y))) - target, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)


def _table_edges(f, a: float, b: float, M: int) -> np.ndarray:
    # 2^(M+4) cells as the cumulative table, plus the handle's own breakpoints
    pts = np.concatenate([np.linspace(a, b, 2 ** min(M + 4, 18) + 1), [x for x in getattr(f, "breaks", ()) if a < x < b]])
    return np.unique(pts)


def _resolution(f):
    r = getattr(f, "resolution", None)
    if r is None and getattr(f, "kind", None) == "sampled":
        r = float(np.min(np.diff(f.params["x"])))
    return r


def build_adapted(f, p: float, M: int = DEPTH, mode: str = "Lp", interval=None) -> MartingaleStructure:
    """Dyadic structure whose cells split |f|^p mass (Lp) or amalgam mass evenly."""
    if M < 1:
        raise ValueError("depth must be >= 1")
    if p < 1:
        raise ValueError("exponent must be >= 1")
    if interval is None:
        interval = f.support
    a, b = map(float, interval)
    if not (np.isfinite(a) and np.isfinite(b)) or b <= a:
        raise ValueError("need a finite interval")
    res = _resolution(f)
    if res is not None and 2**M > (b - a) / res:
        raise ValueError(f"depth {M} exceeds the resolution of the sampled function")
    edges = _table_edges(f, a, b, M)
    if mode == "Lp":
        P = _Primitive(lambda x: np.abs(f(x)) ** p, edges)
        total = float(P.total)
        if not total > 0:
            raise ValueError("zero mass")
        n = 2**M
        fine = np.empty(n + 1)
        fine[0], fine[-1] = a, b
        for k in range(1, n):
            fine[k] = P.invert(total * k / n)
        fine = np.maximum.accumulate(fine)
        levels = [fine[:: 2 ** (M - m)].copy() for m in range(M + 1)]
        return MartingaleStructure((a, b), levels, "Lp", {"p": p, "total": total})
    if mode == "amalgam":
        P = _Primitive(lambda x: np.abs(f(x)), np.union1d(edges, np.arange(np.ceil(a), np.floor(b) + 1)))
        total = amalgam_mass(P, a, b, p)
        if not total > 0:
            raise ValueError("zero mass")
        levels = [np.array([a, b])]
        for m in range(1, M + 1):
            prev = levels[-1]
            new = np.empty(2 * prev.size - 1)
            new[::2] = prev
            for j in range(prev.size - 1):
                new[2 * j + 1] = _split_amalgam(P, prev[j], prev[j + 1], p)
            levels.append(new)
        return MartingaleStructure((a, b), levels, "amalgam", {"p": p, "total": total})
    raise ValueError("mode must be Lp or amalgam")


def amalgam_mass(P: _Primitive, u: float, v: float, p: float) -> float:
    """sum_n (int_{[u,v] cap [n,n+1]} |f|)^p."""
    if v <= u:
        return 0.0
    cuts = np.concatenate([[u], np.arange(np.floor(u) + 1, np.ceil(v)), [v]])
    vals = np.array([float(np.real(P(c))) for c in cuts])
    return float(np.sum(np.clip(np.diff(vals), 0, None) ** p))


def _split_amalgam(P, u, v, p):
    if v <= u:
        return u
    g = lambda s: amalgam_mass(P, u, s, p) - amalgam_mass(P, s, v, p)
    if g(u) >= 0:
        return u
    if g(v) <= 0:
        return v
    return brentq(g, u, v, xtol=1e-14)


def level_masses(f, ms: MartingaleStructure, p: float, m: int) -> np.ndarray:
    P = _Primitive(lambda x: np.abs(f(x)) ** p, _table_edges(f, *ms.interval, ms.depth))
    vals = np.array([float(P(x)) for x in ms.levels[m]])
    return np.diff(vals)


# -- g functionals --------------------------------------------------------------------

@dataclass
class GValue:
    value: float
    per_level: np.ndarray
    depth: int

    @property
    def last_level(self) -> float:
        # truncation indicator: the last retained level's contribution
        return float(self.per_level[-1]) if self.per_level.size else 0.0


def _cell_integrals(f, ms: MartingaleStructure) -> list[np.ndarray]:
    fine = ms.levels[-1]
    edges = np.union1d(fine, [x for x in getattr(f, "breaks", ()) if ms.interval[0] < x < ms.interval[1]])
    P = _Primitive(lambda x: np.asarray(f(x), dtype=complex), edges, p=16)
    at = P.at_edges[np.searchsorted(P.grid.edges, fine)]
    step = [2 ** (ms.depth - m) for m in range(ms.depth + 1)]
    return [np.diff(at[::s]) for s in step]


def g_delta(f, ms: MartingaleStructure, delta: float = DELTA) -> GValue:
    """sum_{m=1}^M 2^{delta m} (sum_j |int_{E^m_j} f|^2)^{1/2}; f may be a list (family sup)."""
    fam = list(f) if isinstance(f, (list, tuple)) and not (isinstance(f, tuple) and callable(f[0])) else [f]
    fam = [as_handle(g) for g in fam]
    ints = [_cell_integrals(g, ms) for g in fam]
    terms = []
    for m in range(1, ms.depth + 1):
        s = np.max(np.stack([np.abs(I[m]) ** 2 for I in ints]), axis=0)
        terms.append(2.0 ** (delta * m) * np.sqrt(np.sum(s)))
    terms = np.array(terms)
    return GValue(float(np.sum(terms)), terms, ms.depth)


def g_phase(V, ms: MartingaleStructure, zeta: complex, phi: Callable, weights: str = "m",
            delta: float = DELTA, p: int = 20) -> GValue:
    """sum_m w_m G_m with G_m^2 = sum_j |s^{m,-}_j|^2 + |s^{m,+}_j|^2 (no '+' term for j = 2^m).

    s^{m,-}_j = int_{E} e^{2i[phi(t) - phi(t^-)]} V,  s^{m,+}_j = int_{E} e^{2i[phi(t^+) - phi(t)]} V.
    ``weights`` is "m" or "delta" (2^{delta m}).
    """
    if np.imag(zeta) < 0:
        raise ValueError("Im zeta must be >= 0")
    s, w = gauss_legendre(p)
    terms = []
    for m in range(1, ms.depth + 1):
        lo, hi = ms.cells(m)
        half = 0.5 * (hi - lo)
        t = lo[:, None] + half[:, None] * (s[None, :] + 1)
        vt = np.asarray(V(t.ravel()), dtype=complex).reshape(t.shape)
        ph = phi(t.ravel(), zeta).reshape(t.shape)
        ph_lo = phi(lo, zeta)
        ph_hi = phi(hi, zeta)
        sm = half * np.sum(w * np.exp(2j * (ph - ph_lo[:, None])) * vt, axis=1)
        sp = half * np.sum(w * np.exp(2j * (ph_hi[:, None] - ph)) * vt, axis=1)
        sp[-1] = 0.0
        Gm = np.sqrt(np.sum(np.abs(sm) ** 2 + np.abs(sp) ** 2))
        wm = m if weights == "m" else 2.0 ** (delta * m)
        terms.append(wm * Gm)
    terms = np.array(terms)
    return GValue(float(np.sum(terms)), terms, ms.depth)


# -- the numerical bound ---------------------------------------------------------------

@dataclass
class BnTable:
    C: float
    n_max: int

    @property
    def b(self) -> np.ndarray:
        n = np.arange(self.n_max + 1)
        return np.array([self.C ** (k + 1) / math.sqrt(math.factorial(k)) for k in n])

    def growth(self) -> np.ndarray:
        # sqrt(n) b_n / b_{n-1}, n = 1..n_max; constant C for this family
        b = self.b
        n = np.arange(1, self.n_max + 1)
        return np.sqrt(n) * b[1:] / b[:-1]


@dataclass
class BoundReport:
    n: int
    lhs: float
    rhs: float
    margin: float
    C: float
    delta: float
    corpus_id: str = ""
    star: bool = False

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12) or self.lhs == self.rhs == 0.0

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin,
                           "C": self.C, "delta": self.delta, "corpus_id": self.corpus_id})


def _rhs(fs, ms, C, d1, d2):
    n = len(fs)
    g1 = g_delta(fs[0], ms, -d1).value
    gk = g_delta(list(fs[1:]), ms, d2).value
    return C ** (n + 1) / math.sqrt(math.factorial(n)) * g1 * gk ** (n - 1)


def _margin(lhs, rhs):
    if rhs == 0:
        return 0.0 if lhs == 0 else -np.inf
    return 1.0 - lhs / rhs


def check_numerical_bound(fs, C: float, delta: float = DELTA, delta_prime: float = DELTA_PRIME,
                          ms: MartingaleStructure | None = None, corpus_id: str = ""):
    """(M_n report, M_n^* report) for the ordered multilinear bound."""
    fs = [as_handle(f) for f in fs]
    n = len(fs)
    if not 2 <= n <= 5:
        raise ValueError("need 2 <= n <= 5")
    if not delta_prime > delta >= 0:
        raise ValueError("need delta' > delta >= 0")
    if ms is None:
        a = min(f.support[0] for f in fs)
        b = max(f.support[1] for f in fs)
        ms = uniform_structure(a, b, DEPTH)
    lhs = abs(m_n_bruteforce(fs))
    rhs = _rhs(fs, ms, C, delta, delta)
    lhs_s = m_n_star_bruteforce(fs)
    rhs_s = _rhs(fs, ms, C, delta, delta_prime)
    return (BoundReport(n, lhs, rhs, _margin(lhs, rhs), C, delta, corpus_id),
            BoundReport(n, lhs_s, rhs_s, _margin(lhs_s, rhs_s), C, delta_prime, corpus_id, star=True))


def minimal_C(fs, star: bool = False, delta: float = DELTA, delta_prime: float = DELTA_PRIME, ms=None) -> float:
    """Smallest C for which the bound holds on this sample."""
    rep = check_numerical_bound(fs, 1.0, delta, delta_prime, ms)[1 if star else 0]
    if rep.lhs == 0:
        return 0.0
    return (rep.lhs / rep.rhs) ** (1.0 / (rep.n + 1))


def random_step_corpus(n_samples: int, seed: int, n_range=(2, 5), cells: int = 8, interval=(0.0, 1.0)):
    """Random complex step functions; sample k is a list of n functions."""
    rng = np.random.default_rng(seed)
    a, b = interval
    out = []
    for _ in range(n_samples):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        fs = []
        for _ in range(n):
            cuts = np.sort(rng.uniform(a, b, cells - 1))
            edges = np.concatenate([[a], cuts, [b]])
            vals = rng.normal(size=cells) + 1j * rng.normal(size=cells)
            fs.append(StepFunction(edges, vals))
        out.append(fs)
    return out


def corpus_hash(corpus) -> str:
    h = hashlib.sha256()
    for fs in corpus:
        for f in fs:
            h.update(np.ascontiguousarray(f.edges).tobytes())
            h.update(np.ascontiguousarray(f.values).tobytes())
    return h.hexdigest()[:16]


@dataclass
class Calibration:
    C: float
    C_raw: float
    safety: float
    corpus_id: str
    per_sample: np.ndarray


def calibrate_C(corpus, safety: float = 1.25, depth: int = 10) -> Calibration:
    """Largest per-sample minimal C (over M_n and M_n^*) times a safety factor."""
    cs = []
    for fs in corpus:
        ms = uniform_structure(0.0, 1.0, depth)
        cs.append(max(minimal_C(fs, False, ms=ms), minimal_C(fs, True, ms=ms)))
    cs = np.array(cs)
    raw = float(np.max(cs))
    return Calibration(raw * safety, raw, safety, corpus_hash(corpus), cs)


# -- modified binomial inequality --------------------------------------------------------

@dataclass
class BnCheck:
    ok: bool
    violation: tuple | None = None  # (n, x, y)
    worst_slack: float = 0.0


def _circle(grid_size: int):
    th = np.linspace(0.0, np.pi / 2, grid_size)
    return np.cos(th), np.sin(th)


def _bn_terms(n: int, x, y):
    """(x^n + y^n, sum_{i=2}^{n-2} sqrt(binom(n, i)) x^i y^{n-i})."""
    ends = x**n + y**n
    mid = np.zeros_like(x)
    for i in range(2, n - 1):
        mid += math.sqrt(math.comb(n, i)) * x**i * y ** (n - i)
    return ends, mid


def calibrate_bn(C: float, n_max: int = 20, grid_size: int = 10_000) -> BnCheck:
    """b_n y^n + sum_{i=2}^{n-2} b_i b_{n-i} x^i y^{n-i} + b_n x^n <= b_n on x^2 + y^2 = 1.

    With b_n = C^{n+1}/sqrt(n!) the check divides through by b_n, leaving
    x^n + y^n + C sum sqrt(binom(n, i)) x^i y^{n-i} <= 1.
    """
    if n_max > 20:
        raise ValueError("n_max <= 20")
    x, y = _circle(grid_size)
    worst = np.inf
    for n in range(2, n_max + 1):
        ends, mid = _bn_terms(n, x, y)
        slack = 1.0 - ends - C * mid
        k = int(np.argmin(slack))
        worst = min(worst, float(slack[k]))
        if slack[k] < -1e-14:
            return BnCheck(False, (n, float(x[k]), float(y[k])), float(slack[k]))
    return BnCheck(True, None, float(worst))


def max_bn_constant(n_max: int = 20, grid_size: int = 10_000) -> float:
    """Largest C passing calibrate_bn on the grid (the inequality caps C from above)."""
    x, y = _circle(grid_size)
    x, y = x[1:-1], y[1:-1]  # equality at the end points
    best = np.inf
    for n in range(4, n_max + 1):
        ends, mid = _bn_terms(n, x, y)
        best = min(best, float(np.min((1.0 - ends) / mid)))
    return best
