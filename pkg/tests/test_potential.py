import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from scatterlab import potential as P
from scatterlab.potential import (
    bump_profile, from_spec, improper_tail, make_bump, make_power_decay, make_random_decaying,
    make_sampled, make_square_barrier, make_wigner_von_neumann, make_zero, norm_amalgam, norm_lp,
)


def test_barrier_eval_and_cumulative():
    p = make_square_barrier(1, 0, 1)
    assert p.eval(0.5) == 1.0
    assert p.eval(1.5) == 0.0
    assert p.cumulative(2.0) == pytest.approx(1.0, abs=1e-12)
    assert p.cumulative(0.5) == pytest.approx(0.5, abs=1e-12)


def test_power_decay_cumulative_closed_form():
    p = make_power_decay(1.0, 0.6)
    for x in (0.3, 10.0, 250.0):
        assert p.cumulative(x) == pytest.approx(((1 + x) ** 0.4 - 1) / 0.4, rel=1e-11)


def test_cumulative_shapes():
    p = make_power_decay(1.0, 0.6)
    x = np.linspace(0, 5, 12).reshape(3, 4)
    assert p.cumulative(x).shape == (3, 4)
    assert np.ndim(p.cumulative(2.0)) == 0


def test_wvn_is_signed_for_negative_x():
    p = make_wigner_von_neumann(1.0, even=True)
    ref = -quad(p.eval, -3, 0, epsabs=1e-13)[0]
    assert p.cumulative(-3.0) == pytest.approx(ref, abs=1e-10)


@pytest.mark.parametrize("p", [
    make_square_barrier(2.0, 0.5, 1.5),
    make_power_decay(1.3, 0.8),
    make_wigner_von_neumann(0.7),
    make_bump(1.0, 0, 2),
    make_random_decaying(0.7, seed=3, n_cells=20),
], ids=lambda p: p.kind)
def test_cumulative_matches_requadrature(p):
    pts = np.array([0.7, 3.3, 12.0, 25.0])
    # breakpoints spoil Simpson, so compare against scipy.quad with explicit breaks
    for x in pts:
        br = [b for b in p.breakpoints if 0 < b < x]
        ref = quad(p.eval, 0, x, points=br or None, limit=500, epsabs=1e-13, epsrel=1e-13)[0]
        assert abs(p.cumulative(x) - ref) <= 10 * p.tol + 1e-12


def test_norm_lp_closed_form_and_divergence():
    p = make_power_decay(1.0, 0.6)
    r = norm_lp(p, 1.8)
    # int_0^inf (1+x)^-1.08 dx = 1/0.08
    assert r.finite and r.value == pytest.approx((1 / 0.08) ** (1 / 1.8), rel=1e-8)
    bad = norm_lp(p, 1.0)
    assert not bad.finite and not np.isfinite(bad.value)


def test_norm_lp_barrier():
    assert norm_lp(make_square_barrier(1, 0, 1), 2.0).value == pytest.approx(1.0, rel=1e-10)


def test_amalgam_barrier_and_cells():
    assert norm_amalgam(make_square_barrier(1, 0, 1), 2.0).value == pytest.approx(1.0, rel=1e-10)
    assert norm_amalgam(make_square_barrier(1, 0, 2), 2.0).value == pytest.approx(np.sqrt(2), rel=1e-10)


def test_amalgam_power_decay_against_cell_sum():
    # unit-cell masses in closed form; long partial sum plus Euler-Maclaurin tail
    e = 1.8
    n = np.arange(0, 200000, dtype=float)
    cells = ((1 + n + 1) ** 0.4 - (1 + n) ** 0.4) / 0.4
    N = n[-1] + 1
    tail = (N + 1) ** (1 - 0.6 * e) / (0.6 * e - 1) - 0.5 * (N + 1) ** (-0.6 * e)
    ref = (np.sum(cells**e) + tail) ** (1 / e)
    assert norm_amalgam(make_power_decay(1.0, 0.6), e).value == pytest.approx(ref, rel=1e-6)


def test_improper_tail_gate():
    assert improper_tail(make_square_barrier(1, 0, 1), 10).convergent
    assert improper_tail(make_wigner_von_neumann(1.0), 400).convergent
    r = improper_tail(make_power_decay(1.0, 0.6), 200)
    assert not r.convergent


def test_random_builder_reproducible_and_zero_mean():
    a = make_random_decaying(0.7, seed=11, n_cells=50)
    b = make_random_decaying(0.7, seed=11, n_cells=50)
    x = np.linspace(0, 52, 999)
    assert np.array_equal(a.eval(x), b.eval(x))
    big = make_random_decaying(0.0, seed=5, n_cells=10_000)
    mids = np.arange(1, 10_001) + 0.5
    coef = big.eval(mids) / bump_profile(0.5)
    assert abs(coef.mean()) < 3 * np.sqrt(1 / 3) / np.sqrt(coef.size)
    assert np.all(np.abs(coef) <= 1)


def test_random_builder_rejects_bad_profile():
    with pytest.raises(ValueError):
        make_random_decaying(0.7, profile=lambda s: np.ones_like(s))


def test_sampled_refuses_extrapolation_and_handles_complex():
    p = make_sampled([0, 1, 2], [0.0, 1.0 + 1j, 0.0])
    assert p.eval(0.5) == pytest.approx(0.5 + 0.5j)
    with pytest.raises(ValueError):
        p.eval(3.0)


def test_spec_rejects_unknowns():
    with pytest.raises(ValueError):
        from_spec({"kind": "nope"})
    with pytest.raises(ValueError):
        from_spec({"kind": "zero", "colour": 1})
    with pytest.raises(ValueError):
        from_spec({"kind": "square_barrier", "params": {"h": 1}})


@given(h=st.floats(-3, 3), a=st.floats(-2, 2), w=st.floats(0.1, 3))
def test_spec_round_trip_barrier(h, a, w):
    p = make_square_barrier(h, a, a + w)
    q = from_spec(p.to_spec())
    x = np.linspace(a - 1, a + w + 1, 57)
    assert np.array_equal(p.eval(x), q.eval(x))
    assert json.loads(q.to_spec()) == json.loads(p.to_spec())


@given(seed=st.integers(0, 2**31 - 1), g=st.floats(0.3, 1.5))
def test_spec_round_trip_random(seed, g):
    p = make_random_decaying(g, seed=seed, n_cells=15)
    q = from_spec(p.to_spec())
    x = np.linspace(0, 17, 101)
    assert np.array_equal(p.eval(x), q.eval(x))


@given(st.floats(0.05, 40), st.floats(0.05, 40))
def test_cumulative_additive(x, y):
    p = make_power_decay(0.9, 0.7)
    lo, hi = sorted((x, y))
    ref = quad(p.eval, lo, hi, epsabs=1e-13, epsrel=1e-13)[0]
    assert p.cumulative(hi) - p.cumulative(lo) == pytest.approx(ref, abs=1e-9)


@given(h=st.floats(0.1, 2), a=st.floats(0, 3), w=st.floats(0.2, 4), e=st.floats(1, 3))
def test_amalgam_dominated_by_l1(h, a, w, e):
    # ||f||_{l^p(L^1)} <= ||f||_{l^1(L^1)} = ||f||_1 for p >= 1
    p = make_square_barrier(h, a, a + w)
    assert norm_amalgam(p, e).value <= h * w * (1 + 1e-9)


def test_zero_potential_norms():
    z = make_zero()
    assert norm_lp(z, 2.0).value == 0.0
    assert P.cumulative(z, 5.0) == 0.0
