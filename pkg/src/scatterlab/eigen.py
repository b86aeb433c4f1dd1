"""Generalized eigenfunctions of -u'' + V u = z u on the half-line.

Three independent solution paths live here:

* ``solve_series``: the WKB-normalised series.  With the phase
  xi(x, z) = sqrt(z) x - Q(x) / (2 sqrt(z)) and the iterated integrals
  J_k(x) = int_x^inf e^{2i(-1)^(k-1) xi(t)} V(t) J_{k-1}(t) dt, J_0 = 1,
  T_n = (2 sqrt z)^-n J_n and

      u  = e^{i xi} A + e^{-i xi} B,   u' = i sqrt(z) (e^{i xi} A - e^{-i xi} B),
      A  = sum_n T_{2n},               B  = -i sum_n T_{2n+1}.

  The factor -i on the odd sum is what variation of parameters produces;
  without it the sum does not solve the equation (checked against the ODE
  in the tests).  Each J_k is a right-anchored primitive evaluated with a
  composite Gauss-Legendre integration matrix.

* ``solve_ivp``: scipy's DOP853 on the first-order system, split at the
  potential's breakpoints.  This is the oracle.

* ``propagate``: a fourth-order Magnus stepper vectorised over many
  spectral parameters at once.  It conserves the Wronskian exactly (each
  step is a determinant-one matrix) and is what the spectral tables use.

``weyl_m`` follows the Dirichlet convention f = u_1 m + u_2 in L^2 with
u_1(0) = (0, 1), u_2(0) = (1, 0), so m = u'(0)/u(0) for the decaying u.
For V = 0 this gives m(z) = i sqrt(z).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.integrate as si

from ._quad import CellGrid, refine_edges
from .potential import Potential

logger = logging.getLogger(__name__)

RHO = 0.1  # small-|zeta| floor
EPS0 = 0.1
K_EPS = 12
X_FAR = 200.0  # far-field truncation for potentials with unbounded support


class SpectralPoleError(ValueError):
    """u(0, z) vanished: z sits at a pole of m."""


@dataclass(frozen=True)
class SpectralParameter:
    z: complex
    zeta: complex
    on_real_axis: bool


def sqrt_branch(z) -> complex:
    """sqrt(z) with Im >= 0 on the closed upper half-plane minus (-inf, 0]."""
    z = complex(z)
    if z.imag < 0 or (z.imag == 0 and z.real <= 0):
        raise ValueError(f"z={z} outside C^+ union R^+")
    return np.sqrt(z)


def spectral_parameter(z) -> SpectralParameter:
    z = complex(z)
    return SpectralParameter(z, sqrt_branch(z), z.imag == 0)


def phase_xi(p: Potential, x, z, rho: float = RHO):
    zeta = sqrt_branch(z)
    if abs(zeta) < rho:
        raise ValueError(f"|sqrt z| = {abs(zeta):.3g} below floor {rho}")
    x = np.asarray(x, dtype=float)
    return zeta * x - p.cumulative(x) / (2.0 * zeta)


@dataclass
class EigenSolution:
    x: np.ndarray
    u: np.ndarray
    up: np.ndarray
    z: complex
    tag: str  # "wkb" | "initial" | "beta"
    meta: dict = field(default_factory=dict)

    def to_csv_rows(self):
        return np.column_stack([self.x, self.u.real, self.u.imag, self.up.real, self.up.imag])


@dataclass
class SeriesDiagnostics:
    N: int
    term_norms: np.ndarray
    tail: float
    converged: bool


# -- series ------------------------------------------------------------------

def _series_grid(p: Potential, grid, h_max: float, x_right: float | None):
    grid = np.asarray(grid, dtype=float)
    X = max(grid[-1], p.right_edge(X_FAR) if x_right is None else x_right)
    bps = [b for b in p.breakpoints if grid[0] < b < X]
    edges = refine_edges(np.concatenate([grid, bps, [X]]), h_max)
    idx = np.searchsorted(edges, grid)
    return CellGrid(edges), idx


def _series_terms(p: Potential, grid, z, nmax: int, h_max: float = 0.1, x_right=None):
    """T_0..T_nmax at the grid points (and the cell grid used)."""
    zeta = sqrt_branch(z)
    cg, idx = _series_grid(p, grid, h_max, x_right)
    nodes = cg.nodes
    xi_nodes = phase_xi(p, nodes, z)
    Vn = p.eval(nodes)
    ep = np.exp(2j * xi_nodes) * Vn
    em = np.exp(-2j * xi_nodes) * Vn
    J_nodes = np.ones_like(nodes, dtype=complex)
    terms = [np.ones(idx.size, dtype=complex)]
    for k in range(1, nmax + 1):
        f = (ep if k % 2 == 1 else em) * J_nodes
        J_nodes, J_edges = cg.cumulative_right(f)
        terms.append(J_edges[idx] / (2.0 * zeta) ** k)
    return np.array(terms), cg


def series_Tn(p: Potential, n: int, x, z, nmax: int = 16, h_max: float = 0.1):
    if n > nmax:
        raise ValueError(f"n={n} exceeds configured max {nmax}")
    if n == 0:
        return np.ones(np.shape(x), dtype=complex)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    order = np.argsort(x)
    xs = x[order]
    uniq, inv = np.unique(xs, return_inverse=True)
    if uniq.size == 1:
        uniq = np.array([uniq[0], uniq[0] + 1e-3])
    T, _ = _series_terms(p, uniq, z, n, h_max)
    out = np.empty(x.size, dtype=complex)
    out[order] = T[n][inv]
    return out


def solve_series(p: Potential, grid, z, N: int = 16, tol: float = 1e-14, h_max: float = 0.1):
    """WKB-tagged solution from the series, truncated at N or when terms drop below tol."""
    grid = np.asarray(grid, dtype=float)
    zeta = sqrt_branch(z)
    T, _ = _series_terms(p, grid, z, N, h_max)
    norms = np.max(np.abs(T), axis=1)
    used = N
    for n in range(1, N + 1):
        if norms[n] < tol:
            used = n
            break
    A = np.sum(T[0 : used + 1 : 2], axis=0)
    B = -1j * np.sum(T[1 : used + 1 : 2], axis=0)
    xi = phase_xi(p, grid, z)
    ep, em = np.exp(1j * xi), np.exp(-1j * xi)
    u = ep * A + em * B
    up = 1j * zeta * (ep * A - em * B)
    tail = float(norms[used]) if used < N else float(norms[N])
    # tail keeps decreasing for a convergent series
    nz = norms[1 : used + 1]
    nz = nz[nz > 0]
    converged = bool(nz.size < 3 or nz[-1] <= nz[0]) and np.all(np.isfinite(norms))
    wkb_gap = float(abs(u[-1] - ep[-1]))
    diag = SeriesDiagnostics(used, norms[: used + 1], tail, converged)
    sol = EigenSolution(grid, u, up, complex(z), "wkb", {"wkb_gap_right": wkb_gap})
    if not converged:
        logger.warning("series at z=%s did not converge (norms %s)", z, norms)
    return sol, diag


# -- ODE oracle --------------------------------------------------------------

def _rhs(p: Potential, z):
    def f(x, y):
        v = p.eval(x)
        return np.array([y[1], (v - z) * y[0]])

    return f


def solve_ivp(p: Potential, z, init, grid, direction: str = "forward", rtol: float = 1e-12, atol: float = 1e-14):
    """Integrate (u, u') with DOP853 across ``grid``.

    ``init`` is (u, u') at grid[0] for direction="forward" and at grid[-1]
    for direction="backward".  Output is on the grid points.
    """
    grid = np.asarray(grid, dtype=float)
    if not np.all(np.isfinite(init)):
        raise ValueError("initial data must be finite")
    z = complex(z)
    lo, hi = grid[0], grid[-1]
    cuts = [b for b in p.breakpoints if lo < b < hi]
    pieces = np.concatenate([[lo], cuts, [hi]])
    if direction == "backward":
        pieces = pieces[::-1]
    elif direction != "forward":
        raise ValueError("direction must be forward or backward")
    y = np.asarray(init, dtype=complex)
    U = np.empty(grid.size, dtype=complex)
    UP = np.empty(grid.size, dtype=complex)
    start = 0 if direction == "forward" else grid.size - 1
    U[start], UP[start] = y
    f = _rhs(p, z)
    for a, b in zip(pieces[:-1], pieces[1:]):
        lo_, hi_ = min(a, b), max(a, b)
        inside = grid[(grid > lo_) & (grid < hi_)]
        te = np.concatenate([inside[::-1] if direction == "backward" else inside, [b]])
        r = si.solve_ivp(f, (a, b), y, method="DOP853", t_eval=te, rtol=rtol, atol=atol)
        if r.status != 0:
            raise RuntimeError(f"ODE integration failed: {r.message}")
        y = r.y[:, -1]
        hit = np.isin(grid, te)
        ii = np.searchsorted(te if direction == "forward" else te[::-1], grid[hit])
        ys = r.y if direction == "forward" else r.y[:, ::-1]
        U[hit], UP[hit] = ys[0, ii], ys[1, ii]
    return EigenSolution(grid, U, UP, z, "initial", {"init": tuple(np.asarray(init, dtype=complex)), "direction": direction})


@dataclass
class WronskianReport:
    values: np.ndarray
    mean: complex
    max_drift: float  # relative


def wronskian(u: EigenSolution, v: EigenSolution) -> WronskianReport:
    if u.x.shape != v.x.shape or not np.allclose(u.x, v.x, rtol=0, atol=0):
        raise ValueError("solutions live on different grids")
    if u.z != v.z:
        raise ValueError("solutions belong to different spectral parameters")
    w = u.u * v.up - u.up * v.u
    scale = max(abs(w[0]), np.max(np.abs(u.u * v.up)), 1e-300)
    return WronskianReport(w, complex(np.mean(w)), float(np.max(np.abs(w - w[0])) / scale))


# -- far-field data ----------------------------------------------------------

def _tail_phase(p: Potential, z, X: float) -> complex:
    """int_X^inf (k - zeta + V/(2 zeta)) dt with k = sqrt(z - V)."""
    if p.support is not None and p.support[1] <= X:
        return 0.0
    zeta = sqrt_branch(z)

    def g(t):
        v = p.eval(t)
        k = np.sqrt(z - v + 0j)
        return -(v**2) / (2 * zeta * (k + zeta) ** 2)

    re = si.quad(lambda t: g(t).real, X, np.inf, limit=400, epsabs=1e-13)[0]
    im = si.quad(lambda t: g(t).imag, X, np.inf, limit=400, epsabs=1e-13)[0]
    return re + 1j * im


def wkb_data(p: Potential, z, X: float):
    """(u, u') at X of the solution with u - e^{i xi} -> 0 at +infinity.

    Exact beyond a compact support; otherwise second-order WKB with the
    convergent part of the phase beyond X added back.
    """
    z = complex(z)
    zeta = sqrt_branch(z)
    xi = complex(phase_xi(p, X, z))
    if p.support is not None and p.support[1] <= X:
        e = np.exp(1j * xi)
        return e, 1j * zeta * e
    v = complex(p.eval(X))
    d = 1e-4
    vp = complex((p.eval(X + d) - p.eval(X - d)) / (2 * d))
    k = np.sqrt(z - v + 0j)
    # Theta(X) = xi(X) + int_X^inf (k - zeta + V/(2 zeta))
    theta = xi + _tail_phase(p, z, X)
    amp = np.sqrt(zeta / k)
    u = amp * np.exp(1j * theta)
    kp = -vp / (2 * k)
    up = (1j * k - kp / (2 * k)) * u
    return u, up


def far_point(p: Potential, x_min: float = 1.0) -> float:
    return max(p.right_edge(X_FAR), x_min)


# -- Weyl m ------------------------------------------------------------------

def decaying_solution(p: Potential, z, grid=None, X: float | None = None) -> EigenSolution:
    X = far_point(p) if X is None else X
    grid = np.array([0.0, X]) if grid is None else np.asarray(grid, dtype=float)
    if grid[-1] < X:
        grid = np.concatenate([grid, [X]])
    init = wkb_data(p, z, grid[-1])
    sol = solve_ivp(p, z, init, grid, direction="backward")
    sol.tag = "wkb"
    return sol


def weyl_m(p: Potential, z, beta: float | None = None, X: float | None = None) -> complex:
    """m(z) = u'(0)/u(0) for the decaying u; with beta, the rotated m_beta.

    The beta boundary condition is cos(beta) f(0) - sin(beta) f'(0) = 0 with
    u_1^beta(0) = (sin beta, cos beta), u_2^beta(0) = (cos beta, -sin beta);
    then m_beta = (m cos beta + sin beta) / (cos beta - m sin beta).
    """
    z = complex(z)
    if not z.imag > 0:
        raise ValueError("weyl_m needs Im z > 0")
    sol = decaying_solution(p, z, X=X)
    u0, up0 = sol.u[0], sol.up[0]
    if abs(u0) < 1e-13 * max(1.0, abs(up0)):
        raise SpectralPoleError(f"u(0, {z}) = 0")
    m = up0 / u0
    if beta is None:
        return complex(m)
    c, s = np.cos(beta), np.sin(beta)
    den = c - m * s
    if abs(den) < 1e-13:
        raise SpectralPoleError(f"m_beta has a pole at z={z}")
    return complex((m * c + s) / den)


# -- boundary values ---------------------------------------------------------

@dataclass
class BoundaryLimit:
    value: complex | None
    error: float
    stable: bool
    eps: np.ndarray
    samples: np.ndarray


def boundary_limit(F: Callable[[complex], complex], E: float, eps0: float = EPS0, K: int = K_EPS, order: int = 3) -> BoundaryLimit:
    """Richardson-extrapolated F(E + i0) from F(E + i eps0 2^-k), k <= K."""
    eps = eps0 * 2.0 ** (-np.arange(K + 1))
    vals = np.array([complex(F(E + 1j * e)) for e in eps])
    d = np.abs(np.diff(vals))
    scale = max(np.max(np.abs(vals)), 1e-300)
    floor = 1e-13 * scale
    tail = d[len(d) // 2 :]
    stable = bool(np.all(np.isfinite(vals)) and np.all((tail[1:] <= 1.05 * tail[:-1]) | (tail[1:] <= floor)))
    R = vals.copy()
    prev = None
    for j in range(1, order + 1):
        Rn = R[1:] + (R[1:] - R[:-1]) / (2.0**j - 1.0)
        prev, R = R, Rn
    value = R[-1]
    err = float(abs(R[-1] - R[-2])) if R.size > 1 else float(abs(value - prev[-1]))
    if not stable:
        return BoundaryLimit(None, err, False, eps, vals)
    return BoundaryLimit(complex(value), err, True, eps, vals)


# -- vectorised Magnus propagation ---------------------------------------------

_G = 0.5 - np.sqrt(3) / 6.0


def _expm_traceless(O):
    """exp of a stack of traceless 2x2 matrices, shape (..., 2, 2)."""
    det = O[..., 0, 0] * O[..., 1, 1] - O[..., 0, 1] * O[..., 1, 0]
    s = np.sqrt(-det + 0j)
    small = np.abs(s) < 1e-6
    ss = np.where(small, 1.0, s)
    c = np.where(small, 1.0 + s**2 / 2, np.cosh(ss))
    sh = np.where(small, 1.0 + s**2 / 6, np.sinh(ss) / ss)
    out = sh[..., None, None] * O
    out[..., 0, 0] += c
    out[..., 1, 1] += c
    return out


def magnus_steps(Afun, edges, Y_start, direction: str = "backward", keep=None):
    """Propagate Y' = A(x) Y across ``edges`` with 4th-order Magnus steps.

    ``Afun(x)`` returns a stack (..., 2, 2) for scalar x.  ``Y_start`` has
    shape (..., 2) and sits at edges[-1] (backward) or edges[0] (forward).
    Returns Y at every edge (or at ``keep`` indices), shape (n, ..., 2).
    """
    edges = np.asarray(edges, dtype=float)
    n = edges.size
    order = range(n - 1, 0, -1) if direction == "backward" else range(0, n - 1)
    Y = np.asarray(Y_start, dtype=complex)
    out = np.empty((n,) + Y.shape, dtype=complex)
    out[n - 1 if direction == "backward" else 0] = Y
    for k in order:
        a, b = (edges[k - 1], edges[k]) if direction == "backward" else (edges[k], edges[k + 1])
        h = b - a
        A1 = Afun(a + _G * h)
        A2 = Afun(b - _G * h)
        comm = A2 @ A1 - A1 @ A2
        O = 0.5 * h * (A1 + A2) + (np.sqrt(3) / 12.0) * h * h * comm
        if direction == "backward":
            M = _expm_traceless(-O)
            Y = np.einsum("...ij,...j->...i", M, Y)
            out[k - 1] = Y
        else:
            M = _expm_traceless(O)
            Y = np.einsum("...ij,...j->...i", M, Y)
            out[k + 1] = Y
    return out if keep is None else out[keep]


def propagate(p: Potential, zs, grid, init=None, h_max: float = 0.05, direction: str = "backward"):
    """(u, u') on ``grid`` for every z in ``zs`` (vectorised Magnus).

    ``init`` defaults to the WKB data at grid[-1] (backward).  Returns two
    arrays of shape (len(zs), len(grid)).
    """
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    grid = np.asarray(grid, dtype=float)
    bps = [b for b in p.breakpoints if grid[0] < b < grid[-1]]
    edges = refine_edges(np.concatenate([grid, bps]), h_max)
    keep = np.searchsorted(edges, grid)
    if init is None:
        if direction != "backward":
            raise ValueError("default initial data only for backward runs")
        init = np.array([wkb_data(p, z, grid[-1]) for z in zs])
    init = np.asarray(init, dtype=complex).reshape(zs.size, 2)

    def Afun(x):
        v = p.eval(x)
        A = np.zeros((zs.size, 2, 2), dtype=complex)
        A[:, 0, 1] = 1.0
        A[:, 1, 0] = v - zs
        return A

    Y = magnus_steps(Afun, edges, init, direction, keep)
    return Y[..., 0].T, Y[..., 1].T


def residual(sol: EigenSolution, p: Potential) -> np.ndarray:
    """Centered second-difference residual of -u'' + (V - z) u on interior nodes."""
    x, u = sol.x, sol.u
    h1 = x[1:-1] - x[:-2]
    h2 = x[2:] - x[1:-1]
    upp = 2 * (h1 * u[2:] - (h1 + h2) * u[1:-1] + h2 * u[:-2]) / (h1 * h2 * (h1 + h2))
    return -upp + (p.eval(x[1:-1]) - sol.z) * u[1:-1]
