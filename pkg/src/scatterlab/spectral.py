"""Half-line spectral data and the eigenfunction transform.

Conventions (Dirichlet at 0, u the WKB-normalised outgoing solution):

    gamma(E)    = 1 / u(0, E)
    psi(x, lam) = (2i)^-1 (u - (conj(gamma)/gamma) conj(u)) = lam conj(gamma) u_1
    g~(lam)     = int conj(psi) g dx
    g(x)        = (2/pi) int psi g~ dlam                      (ac part)
    U_V F       = sqrt(2/pi) int F psi dlam                   (unitary)
    e^{-itH} g  = (2/pi) int e^{-i lam^2 t} psi g~ dlam

For V = 0, psi = sin(lam x) and these reduce to the sine transform, which
is how the constants were pinned.  |gamma|^2 sqrt(E) = Im m(E + i0)
follows from the constant Wronskian Im(u' conj u) = lam.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import eigen
from .eigen import RHO, SpectralPoleError, boundary_limit, propagate, wkb_data
from .potential import Potential

RESONANCE_TOL = 1e-10


def _trap_weights(x: np.ndarray) -> np.ndarray:
    w = np.zeros_like(x, dtype=float)
    d = np.diff(x)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def _check_lam(lam):
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if np.any(lam < RHO):
        raise ValueError(f"lambda below the floor {RHO}")
    return lam


# -- point data ----------------------------------------------------------------

def outgoing_at_zero(p: Potential, lam, method: str = "magnus", X: float | None = None):
    """(u(0), u'(0)) of the WKB solution at E = lam^2 for each lam."""
    lam = _check_lam(lam)
    X = eigen.far_point(p) if X is None else X
    if method == "magnus":
        u, up = propagate(p, lam**2, np.array([0.0, X]))
        return u[:, 0], up[:, 0]
    if method == "ivp":
        out = [eigen.solve_ivp(p, l**2, wkb_data(p, l**2, X), np.array([0.0, X]), "backward") for l in lam]
        return np.array([s.u[0] for s in out]), np.array([s.up[0] for s in out])
    if method == "series":
        out = [eigen.solve_series(p, np.array([0.0, X]), l**2 + 0j)[0] for l in lam]
        return np.array([s.u[0] for s in out]), np.array([s.up[0] for s in out])
    raise ValueError(f"unknown method {method!r}")


def gamma_coeff(p: Potential, lam, method: str = "magnus"):
    u0, _ = outgoing_at_zero(p, lam, method)
    if np.any(np.abs(u0) < RESONANCE_TOL):
        raise SpectralPoleError("u(0, lam^2) vanishes on the grid")
    g = 1.0 / u0
    return g if np.ndim(lam) else complex(g[0])


@dataclass
class DensityResult:
    value: float | None
    stable: bool
    error: float


def m_boundary(p: Potential, E: float, **kw):
    return boundary_limit(lambda z: eigen.weyl_m(p, z), E, **kw)


def ac_density(p: Potential, lam: float, **kw) -> DensityResult:
    """Im m(E + i0) / pi at E = lam^2; value withheld when unstable."""
    _check_lam(lam)
    bl = m_boundary(p, float(lam) ** 2, **kw)
    if not bl.stable:
        return DensityResult(None, False, bl.error)
    return DensityResult(bl.value.imag / np.pi, True, bl.error)


@dataclass
class SpectralTable:
    lam: np.ndarray
    m: np.ndarray
    density: np.ndarray
    gamma: np.ndarray
    omega: np.ndarray
    stable: np.ndarray
    m_error: np.ndarray

    COLUMNS = ("lambda", "Re m", "Im m", "density", "Re gamma", "Im gamma", "omega", "stable_flag")

    def rows(self):
        return np.column_stack([
            self.lam, self.m.real, self.m.imag, self.density,
            self.gamma.real, self.gamma.imag, self.omega, self.stable.astype(int),
        ])

    def absorption_defect(self) -> np.ndarray:
        """| |gamma|^2 sqrt(E) - Im m | / Im m on stable rows (nan elsewhere)."""
        lhs = np.abs(self.gamma) ** 2 * self.lam
        out = np.full(self.lam.shape, np.nan)
        s = self.stable
        out[s] = np.abs(lhs[s] - self.m.imag[s]) / np.abs(self.m.imag[s])
        return out


def build_table(p: Potential, lam, **kw) -> SpectralTable:
    lam = _check_lam(lam)
    gam = gamma_coeff(p, lam)
    ms, st, er = [], [], []
    for l in lam:
        bl = m_boundary(p, l**2, **kw)
        st.append(bl.stable and bl.value is not None and bl.value.imag >= 0)
        ms.append(bl.value if bl.value is not None else np.nan + 0j)
        er.append(bl.error)
    m = np.array(ms)
    omega = np.angle(np.conj(gam) / gam)
    return SpectralTable(lam, m, m.imag / np.pi, gam, omega, np.array(st), np.array(er))


# -- eigenfunction tables --------------------------------------------------------

@dataclass
class PsiTable:
    lam: np.ndarray
    x: np.ndarray
    psi: np.ndarray  # (n_lam, n_x)
    gamma: np.ndarray
    consistency: float  # max |psi_a - psi_b|
    masked: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def build_psi(p: Potential, lam, x, h_max: float = 0.05, check: bool = True, X: float | None = None) -> PsiTable:
    """psi(x, lam) from the outgoing solution, cross-checked against lam conj(gamma) u_1."""
    lam = _check_lam(lam)
    x = np.asarray(x, dtype=float)
    if x[0] != 0.0:
        x_full = np.concatenate([[0.0], x])
    else:
        x_full = x
    X = max(x_full[-1], eigen.far_point(p)) if X is None else X
    grid = x_full if x_full[-1] >= X else np.concatenate([x_full, [X]])
    u, _ = propagate(p, lam**2, grid, h_max=h_max)
    u0 = u[:, 0]
    masked = np.abs(u0) < RESONANCE_TOL
    gam = np.where(masked, np.nan, 1.0 / np.where(masked, 1.0, u0))
    ratio = np.conj(gam) / gam
    sel = slice(1 if x[0] != 0.0 else 0, x_full.size)
    uu = u[:, sel]
    psi = (uu - ratio[:, None] * np.conj(uu)) / 2j
    cons = 0.0
    if check:
        init = np.tile(np.array([0.0, 1.0], dtype=complex), (lam.size, 1))
        u1, _ = propagate(p, lam**2, x_full, init=init, direction="forward", h_max=h_max)
        psi_b = (lam * np.conj(gam))[:, None] * u1[:, sel]
        good = ~masked
        cons = float(np.max(np.abs(psi[good] - psi_b[good]))) if good.any() else 0.0
    return PsiTable(lam, x, psi, gam, cons, masked)


# -- packets and transforms ----------------------------------------------------

@dataclass
class WavePacket:
    x: np.ndarray
    g: np.ndarray | None
    lam: np.ndarray | None = None
    gt: np.ndarray | None = None
    authoritative: str = "x"
    defect: float = float("nan")
    meta: dict = field(default_factory=dict)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(_trap_weights(self.x) * np.abs(self.g) ** 2)))


def forward_transform(table: PsiTable, g) -> np.ndarray:
    """g~(lam) = int conj(psi(x, lam)) g(x) dx on the table's x grid."""
    w = _trap_weights(table.x)
    return np.conj(table.psi) @ (w * np.asarray(g))


def inverse_transform(table: PsiTable, gt) -> np.ndarray:
    """(2/pi) int psi(x, lam) g~(lam) dlam."""
    w = _trap_weights(table.lam)
    return (2.0 / np.pi) * ((w * np.asarray(gt)) @ table.psi)


def spectral_norm(table: PsiTable, gt) -> float:
    """||g~|| in the normalisation where it equals ||g_ac||."""
    w = _trap_weights(table.lam)
    return float(np.sqrt((2.0 / np.pi) * np.sum(w * np.abs(gt) ** 2)))


def leakage(table: PsiTable, gt, edge_frac: float = 0.05) -> float:
    """Share of spectral mass in the top edge_frac of the lambda grid."""
    n = max(1, int(edge_frac * table.lam.size))
    a = np.abs(gt) ** 2
    return float(np.sum(a[-n:]) / max(np.sum(a), 1e-300))


def make_packet(table: PsiTable, g) -> WavePacket:
    g = np.asarray(g, dtype=complex)
    gt = forward_transform(table, g)
    back = inverse_transform(table, gt)
    pk = WavePacket(table.x, g, table.lam, gt, "x")
    nrm = pk.norm()
    pk.defect = float(np.sqrt(np.sum(_trap_weights(table.x) * np.abs(back - g) ** 2)) / nrm) if nrm > 0 else 0.0
    pk.meta["leakage"] = leakage(table, gt)
    return pk


def unitarity_defect(table: PsiTable, g) -> float:
    return make_packet(table, g).defect


def project_ac(table: PsiTable, a: float, b: float, g) -> np.ndarray:
    """(2/pi) int_a^b psi g~ dlam on the table's grids."""
    if not 0 < a < b:
        raise ValueError("need 0 < a < b")
    for e in (a, b):
        k = int(np.argmin(np.abs(table.lam - e)))
        if table.masked.size and table.masked[k]:
            raise SpectralPoleError(f"band endpoint {e} sits on a masked lambda")
    gt = forward_transform(table, g)
    sel = (table.lam >= a) & (table.lam <= b)
    sub = PsiTable(table.lam[sel], table.x, table.psi[sel], table.gamma[sel], table.consistency)
    return inverse_transform(sub, gt[sel])


def resolvable_horizon(lam: np.ndarray) -> float:
    """Largest t with dlam <= pi / (2 t lam_max)."""
    dl = float(np.max(np.diff(lam)))
    return np.pi / (2.0 * dl * float(lam[-1]))


def evolve_V(table: PsiTable, g, t: float, gt=None) -> np.ndarray:
    """(2/pi) int e^{-i lam^2 t} psi g~ dlam."""
    hz = resolvable_horizon(table.lam)
    if abs(t) > hz:
        raise ValueError(f"t={t} beyond the resolvable horizon {hz:.3g} of this lambda grid")
    gt = forward_transform(table, g) if gt is None else gt
    return inverse_transform(table, np.exp(-1j * table.lam**2 * t) * gt)


def check_limiting_absorption(p: Potential, lam, **kw):
    """Relative gap between |gamma|^2 sqrt(E) and Im m(E + i0) per lambda."""
    return build_table(p, lam, **kw).absorption_defect()
