"""Potentials on the line and their integral/norm bookkeeping.

A :class:`Potential` is an immutable description (kind, params, seed) plus a
vectorised evaluator.  Builders cover the families used by the experiments:

    square barrier      h * 1_[a, b]
    power decay         c (1 + x)^-alpha             (x >= 0, optionally even)
    Wigner-von Neumann  c sin(2x) / (1 + x)          (x >= 0, optionally even)
    smooth bump         amp * 64 s^3 (1 - s)^3,  s = (x - a)/(b - a)
    random decaying     sum_n a_n g(n) f(x - n),  a_n ~ U[-1, 1] from a seed
    sampled             linear interpolation of (x_k, v_k), real or complex

The bump profile f of the random model is the polynomial 140 s^3 (1 - s)^3
on (0, 1), which has unit mass.  It is C^2, not C^infinity.

The running integral Q(x) = int_0^x V (signed for x < 0) is served from a
cache of cell nodes filled by an adaptive composite Gauss rule; within a cell
the remainder is a 20-point Gauss rule, exact on every kind that is smooth
between declared breakpoints.  Divergent norms are reported through flags on
the result objects, never raised.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import zeta

from ._quad import adaptive_gl, gauss_legendre

DEFAULT_TOL = 1e-10
CACHE_H = 0.25

KINDS = (
    "zero",
    "square_barrier",
    "power_decay",
    "wigner_von_neumann",
    "bump",
    "random_decaying",
    "sampled",
)


@dataclass(frozen=True)
class TailModel:
    """|V(x)| behaves like |c| (1 + |x|)^-alpha for |x| >= x0.

    ``exact`` means equality (power decay), otherwise the model is only an
    envelope and tail contributions are upper bounds.
    """

    c: float
    alpha: float
    x0: float = 0.0
    exact: bool = True


@dataclass(frozen=True)
class NormResult:
    value: float
    finite: bool
    estimated: bool = False
    note: str = ""


@dataclass(frozen=True)
class TailReport:
    value: complex
    oscillation: float
    convergent: bool


class _CumulativeCache:
    """Monotone nodes x_k with Q(x_k); extended under a lock, never shrunk."""

    def __init__(self, pot: "Potential", tol: float):
        self._pot = pot
        self._tol = tol
        self._lock = threading.Lock()
        self.x = np.zeros(1)
        self.Q = np.zeros(1, dtype=complex if pot.is_complex else float)
        self.ok = True

    def _build_side(self, hi: float, sign: int):
        pot = self._pot
        step = CACHE_H
        n = int(np.ceil(hi / step))
        base = sign * step * np.arange(n + 1)
        bps = np.array([b for b in pot.breakpoints if 0 < sign * b < step * n])
        xs = np.unique(np.concatenate([base, bps]))
        if sign < 0:
            xs = xs[::-1]
        lo = np.minimum(xs[:-1], xs[1:])
        hi = np.maximum(xs[:-1], xs[1:])
        s20, w20 = gauss_legendre(20)
        s10, w10 = gauss_legendre(10)
        mid, rad = 0.5 * (lo + hi), 0.5 * (hi - lo)
        g20 = rad * (pot.eval((mid[:, None] + rad[:, None] * s20).ravel()).reshape(-1, 20) @ w20)
        g10 = rad * (pot.eval((mid[:, None] + rad[:, None] * s10).ravel()).reshape(-1, 10) @ w10)
        bad = np.nonzero(np.abs(g20 - g10) > self._tol * (hi - lo))[0]
        for k in bad:
            v, _, ok = adaptive_gl(pot.eval, lo[k], hi[k], tol=self._tol * (hi[k] - lo[k]))
            self.ok &= ok
            g20[k] = v
        vals = np.concatenate([[0.0], np.cumsum(sign * g20)]).astype(self.Q.dtype)
        return xs, vals

    def ensure(self, lo: float, hi: float):
        if lo >= self.x[0] and hi <= self.x[-1]:
            return
        with self._lock:
            if lo >= self.x[0] and hi <= self.x[-1]:
                return
            new_hi = max(hi, self.x[-1], 1.0) * (1.25 if hi > self.x[-1] else 1.0)
            new_lo = min(lo, self.x[0], 0.0) * (1.25 if lo < self.x[0] else 1.0)
            xr, qr = self._build_side(new_hi, +1) if new_hi > 0 else (np.zeros(1), np.zeros(1))
            if new_lo < 0:
                xl, ql = self._build_side(-new_lo, -1)
                x = np.concatenate([xl[::-1][:-1], xr])
                Q = np.concatenate([ql[::-1][:-1], qr])
            else:
                x, Q = xr, qr
            self.x, self.Q = x, Q.astype(self.Q.dtype)


@dataclass(frozen=True, eq=False)
class Potential:
    kind: str
    params: dict
    seed: int | None = None
    support: tuple[float, float] | None = None
    breakpoints: tuple[float, ...] = ()
    tail: TailModel | None = None
    period: float | None = None
    is_complex: bool = False
    declared_p: float | None = None
    tol: float = DEFAULT_TOL
    _fn: Callable = field(default=None, repr=False)
    _cache: _CumulativeCache = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_cache", _CumulativeCache(self, self.tol))

    # -- evaluation -------------------------------------------------------
    def eval(self, x):
        """V(x); sampled kinds interpolate linearly and refuse extrapolation."""
        x = np.asarray(x, dtype=float)
        return self._fn(x)

    def __call__(self, x):
        return self.eval(x)

    def cumulative(self, x):
        """Q(x) = int_0^x V, signed for negative x."""
        x = np.asarray(x, dtype=float)
        shape = x.shape
        xf = x.ravel()
        if xf.size == 0:
            return xf.astype(self._cache.Q.dtype).reshape(shape)
        if self.kind == "zero":
            return np.zeros(shape)[()]
        cache = self._cache
        cache.ensure(float(xf.min()), float(xf.max()))
        k = np.clip(np.searchsorted(cache.x, xf, side="right") - 1, 0, cache.x.size - 1)
        x0 = cache.x[k]
        s, w = gauss_legendre(20)
        rad = 0.5 * (xf - x0)
        pts = x0[:, None] + rad[:, None] * (s[None, :] + 1.0)
        vals = self.eval(pts.ravel()).reshape(pts.shape)
        out = cache.Q[k] + rad * (vals @ w)
        return out.reshape(shape)[()]

    def cache_nodes(self, lo: float, hi: float):
        """The cached (x_k, Q(x_k)) pairs inside [lo, hi]."""
        self._cache.ensure(lo, hi)
        m = (self._cache.x >= lo) & (self._cache.x <= hi)
        return self._cache.x[m], self._cache.Q[m]

    @property
    def quadrature_ok(self) -> bool:
        return self._cache.ok

    def right_edge(self, default: float) -> float:
        """End of support, or ``default`` when the support is unbounded."""
        if self.support is not None and np.isfinite(self.support[1]):
            return float(self.support[1])
        return float(default)

    def to_spec(self) -> str:
        return serialize_spec(self)


# -- builders ---------------------------------------------------------------

def make_zero() -> Potential:
    return Potential("zero", {}, support=(0.0, 0.0), _fn=lambda x: np.zeros(np.shape(x)))


def make_square_barrier(h: float, a: float, b: float) -> Potential:
    if not b > a:
        raise ValueError("barrier needs a < b")
    h = float(h)

    def fn(x):
        return np.where((x >= a) & (x <= b), h, 0.0)

    return Potential(
        "square_barrier", {"h": h, "a": float(a), "b": float(b)},
        support=(float(a), float(b)), breakpoints=(float(a), float(b)),
        declared_p=1.0, _fn=fn,
    )


def make_power_decay(c: float, alpha: float, even: bool = False) -> Potential:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    c, alpha = float(c), float(alpha)

    def fn(x):
        r = (1.0 + np.abs(x)) ** (-alpha) * c
        return r if even else np.where(x >= 0, r, 0.0)

    return Potential(
        "power_decay", {"c": c, "alpha": alpha, "even": bool(even)},
        support=(-np.inf if even else 0.0, np.inf), breakpoints=(0.0,),
        tail=TailModel(c, alpha, 0.0, True), declared_p=None, _fn=fn,
    )


def make_wigner_von_neumann(c: float, even: bool = False) -> Potential:
    c = float(c)

    def fn(x):
        r = c * np.sin(2.0 * x) / (1.0 + np.abs(x))
        return r if even else np.where(x >= 0, r, 0.0)

    return Potential(
        "wigner_von_neumann", {"c": c, "even": bool(even)},
        support=(-np.inf if even else 0.0, np.inf), breakpoints=(0.0,),
        tail=TailModel(c, 1.0, 0.0, False), period=np.pi, _fn=fn,
    )


def _bump_shape(s):
    s = np.asarray(s, dtype=float)
    inside = (s > 0) & (s < 1)
    return np.where(inside, s**3 * (1.0 - s) ** 3, 0.0)


def bump_profile(s):
    """Unit-mass polynomial bump 140 s^3 (1-s)^3 on (0, 1)."""
    return 140.0 * _bump_shape(s)


def make_bump(amp: float, a: float, b: float) -> Potential:
    """Polynomial bump of height ``amp`` supported on [a, b]."""
    if not b > a:
        raise ValueError("bump needs a < b")
    amp, a, b = float(amp), float(a), float(b)

    def fn(x):
        return amp * 64.0 * _bump_shape((x - a) / (b - a))

    return Potential(
        "bump", {"amp": amp, "a": a, "b": b},
        support=(a, b), breakpoints=(a, b), declared_p=1.0, _fn=fn,
    )


def make_random_decaying(g=0.7, profile=None, seed: int = 0, n_cells: int = 200) -> Potential:
    """V(x) = sum_{n=1}^{n_cells} a_n g(n) f(x - n) with a_n ~ U[-1, 1].

    ``g`` is a callable on the integers or a float exponent meaning n^-g.
    A custom ``profile`` must vanish outside (0, 1).
    """
    n = np.arange(1, n_cells + 1)
    if callable(g):
        gn = np.asarray([g(k) for k in n], dtype=float)
        g_param = None
    else:
        gn = n.astype(float) ** (-float(g))
        g_param = float(g)
    f = bump_profile if profile is None else profile
    probe = np.array([-0.5, -1e-9, 0.0, 1.0, 1.0 + 1e-9, 1.5])
    if np.any(np.asarray(f(probe)) != 0):
        raise ValueError("bump profile must be supported in (0, 1)")
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1.0, 1.0, n_cells)
    coef = a * gn

    def fn(x):
        x = np.asarray(x, dtype=float)
        k = np.floor(x).astype(int)
        valid = (k >= 1) & (k <= n_cells)
        kk = np.clip(k, 1, n_cells)
        return np.where(valid, coef[kk - 1] * f(x - kk), 0.0)

    params = {"g_power": g_param, "n_cells": int(n_cells), "coefficients": coef.tolist() if g_param is None else None}
    return Potential(
        "random_decaying", params, seed=int(seed),
        support=(1.0, float(n_cells + 1)), breakpoints=tuple(float(k) for k in range(1, n_cells + 2)),
        _fn=fn,
    )


def make_sampled(grid, values) -> Potential:
    """Linear interpolation of samples; first-order accurate between nodes."""
    xg = np.asarray(grid, dtype=float)
    vg = np.asarray(values)
    if xg.ndim != 1 or xg.size != vg.size or xg.size < 2 or np.any(np.diff(xg) <= 0):
        raise ValueError("sampled potential needs a strictly increasing grid with matching values")
    cplx = np.iscomplexobj(vg)

    def fn(x):
        x = np.asarray(x, dtype=float)
        if np.any((x < xg[0]) | (x > xg[-1])):
            raise ValueError(f"x outside sampled domain [{xg[0]}, {xg[-1]}]")
        if cplx:
            return np.interp(x, xg, vg.real) + 1j * np.interp(x, xg, vg.imag)
        return np.interp(x, xg, vg)

    params = {"x": xg.tolist(), "values": np.real(vg).tolist()}
    if cplx:
        params["values_im"] = np.imag(vg).tolist()
    return Potential(
        "sampled", params, support=(float(xg[0]), float(xg[-1])),
        breakpoints=tuple(xg.tolist()), is_complex=cplx, _fn=fn,
    )


# -- spec round trip --------------------------------------------------------

def from_spec(spec) -> Potential:
    """Build from a JSON string or dict {"kind", "params", "seed"?}."""
    d = json.loads(spec) if isinstance(spec, str) else dict(spec)
    unknown = set(d) - {"kind", "params", "seed"}
    if unknown:
        raise ValueError(f"unknown spec fields: {sorted(unknown)}")
    kind = d.get("kind")
    p = dict(d.get("params") or {})
    if kind not in KINDS:
        raise ValueError(f"unknown potential kind: {kind!r}")
    try:
        if kind == "zero":
            return make_zero()
        if kind == "square_barrier":
            return make_square_barrier(p["h"], p["a"], p["b"])
        if kind == "power_decay":
            return make_power_decay(p["c"], p["alpha"], bool(p.get("even", False)))
        if kind == "wigner_von_neumann":
            return make_wigner_von_neumann(p["c"], bool(p.get("even", False)))
        if kind == "bump":
            return make_bump(p["amp"], p["a"], p["b"])
        if kind == "random_decaying":
            if p.get("g_power") is None:
                raise ValueError("random_decaying spec needs g_power")
            return make_random_decaying(p["g_power"], seed=int(d.get("seed", 0)), n_cells=int(p.get("n_cells", 200)))
        vals = np.asarray(p["values"], dtype=float)
        if "values_im" in p:
            vals = vals + 1j * np.asarray(p["values_im"], dtype=float)
        return make_sampled(p["x"], vals)
    except KeyError as e:
        raise ValueError(f"missing parameter {e} for kind {kind!r}") from None


def serialize_spec(pot: Potential) -> str:
    params = {k: v for k, v in pot.params.items() if v is not None}
    if pot.kind == "random_decaying":
        params.pop("coefficients", None)
        if params.get("g_power") is None:
            raise ValueError("random potential with callable g has no textual spec")
    d = {"kind": pot.kind, "params": params}
    if pot.seed is not None:
        d["seed"] = pot.seed
    return json.dumps(d, sort_keys=True)


# -- integrals and norms ----------------------------------------------------

def eval(p: Potential, x):  # noqa: A001 - mirrors the operation name
    return p.eval(x)


def cumulative(p: Potential, x):
    return p.cumulative(x)


def _abs_pow(p: Potential, exponent: float):
    return lambda x: np.abs(p.eval(x)) ** exponent


def norm_lp(p: Potential, exponent: float, a: float = 0.0, b: float = np.inf, x_switch: float = 100.0) -> NormResult:
    """(int_a^b |V|^p)^(1/p); an unbounded tail is handled through the tail model."""
    if not exponent >= 1:
        raise ValueError("exponent must be >= 1")
    if not b > a:
        raise ValueError("need a < b")
    lo, hi = a, b
    if p.support is not None:
        lo, hi = max(a, p.support[0]), min(b, p.support[1])
    if p.kind == "zero" or hi <= lo:
        return NormResult(0.0, True)
    tail_val, estimated, note = 0.0, False, ""
    if np.isinf(hi) or np.isinf(lo):
        if p.tail is None:
            return NormResult(np.inf, False, True, "unbounded support without tail model")
        t = p.tail
        ap = t.alpha * exponent
        if ap <= 1:
            return NormResult(np.inf, False, not t.exact, f"tail exponent {ap:g} <= 1")
        X = max(x_switch, t.x0, abs(lo) if np.isfinite(lo) else 0.0)
        tail_one = abs(t.c) ** exponent * (1 + X) ** (1 - ap) / (ap - 1)
        if np.isinf(hi):
            tail_val += tail_one
            hi = X
        if np.isinf(lo):
            tail_val += tail_one
            lo = -X
        estimated = not t.exact
        note = "tail from model" + ("" if t.exact else " (envelope bound)")
    bps = [x for x in p.breakpoints if lo < x < hi]
    val, _, ok = adaptive_gl(_abs_pow(p, exponent), lo, hi, tol=p.tol, breakpoints=bps)
    if not ok:
        note = (note + "; " if note else "") + "quadrature did not converge"
    return NormResult(float((val + tail_val) ** (1.0 / exponent)), True, estimated or not ok, note)


def cell_masses(p: Potential, n_lo: int, n_hi: int) -> np.ndarray:
    """int_n^{n+1} |V| for n in [n_lo, n_hi)."""
    n = np.arange(n_lo, n_hi)
    s, w = gauss_legendre(20)
    out = np.zeros(n.size)
    # split each unit cell at declared breakpoints
    bps = np.array(sorted(p.breakpoints)) if p.breakpoints else np.array([])
    for k, nk in enumerate(n):
        inner = bps[(bps > nk) & (bps < nk + 1)] if bps.size else bps
        edges = np.concatenate([[nk], inner, [nk + 1]])
        tot = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            v, _, _ = adaptive_gl(lambda x: np.abs(p.eval(x)), a, b, tol=p.tol * (b - a))
            tot += v
        out[k] = tot
    return out


def norm_amalgam(p: Potential, exponent: float, n_direct: int = 2000) -> NormResult:
    """(sum_n (int_n^{n+1} |V|)^p)^(1/p) over the integer cells meeting the support."""
    if not exponent >= 1:
        raise ValueError("exponent must be >= 1")
    if p.kind == "zero":
        return NormResult(0.0, True)
    lo, hi = p.support if p.support is not None else (-np.inf, np.inf)
    tail_sum, estimated, note = 0.0, False, ""
    n_lo = int(np.floor(lo)) if np.isfinite(lo) else -n_direct
    n_hi = int(np.ceil(hi)) if np.isfinite(hi) else n_direct
    if not (np.isfinite(lo) and np.isfinite(hi)):
        if p.tail is None:
            return NormResult(np.inf, False, True, "unbounded support without tail model")
        t = p.tail
        ap = t.alpha * exponent
        if ap <= 1:
            return NormResult(np.inf, False, not t.exact, f"tail exponent {ap:g} <= 1")
        if t.exact:
            # cell mass c * int_n^{n+1} (1+x)^-a = c s^-a (1 + a(a+1)/(24 s^2) + ...), s = n + 1.5
            corr = exponent * t.alpha * (t.alpha + 1) / 24.0
            one = abs(t.c) ** exponent * (zeta(ap, n_direct + 1.5) + corr * zeta(ap + 2, n_direct + 1.5))
        else:
            one = abs(t.c) ** exponent * zeta(exponent * t.alpha, n_direct + 1.0)
            estimated = True
            note = "tail from envelope bound"
        tail_sum += one * ((not np.isfinite(hi)) + (not np.isfinite(lo)))
    masses = cell_masses(p, n_lo, n_hi)
    total = np.sum(masses**exponent) + tail_sum
    return NormResult(float(total ** (1.0 / exponent)), True, estimated, note)


def improper_tail(p: Potential, N: float, samples: int = 2001) -> TailReport:
    """Q(N) and the oscillation sup_{N' in [N/2, N]} |Q(N') - Q(N)|.

    Convergence is judged by comparing against the same oscillation on
    [N/4, N/2]: a convergent improper integral shrinks it, a divergent one
    does not.
    """
    if not N > 0:
        raise ValueError("N must be positive")
    xs = np.linspace(N / 2, N, samples)
    Q = p.cumulative(xs)
    osc = float(np.max(np.abs(Q - Q[-1])))
    xs2 = np.linspace(N / 4, N / 2, samples)
    Q2 = p.cumulative(xs2)
    osc2 = float(np.max(np.abs(Q2 - Q2[-1])))
    conv = osc <= 1e3 * p.tol or (osc2 > 0 and osc <= 0.75 * osc2)
    return TailReport(complex(Q[-1]) if p.is_complex else float(Q[-1]), osc, bool(conv))
