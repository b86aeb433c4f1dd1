import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from scatterlab.multilinear import (
    DELTA, BnTable, Handle, StepFunction, build_adapted, calibrate_bn, check_numerical_bound,
    corpus_hash, g_delta, g_phase, indicator, level_masses, m_n_bruteforce, m_n_star_bruteforce,
    max_bn_constant, minimal_C, random_step_corpus, uniform_structure,
)
from scatterlab.potential import make_sampled


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
def test_indicators_give_simplex_volume(n):
    assert m_n_bruteforce([indicator(0, 1)] * n) == pytest.approx(1 / math.factorial(n), abs=1e-14)
    assert m_n_star_bruteforce([indicator(0, 1)] * n) == pytest.approx(1 / math.factorial(n), abs=1e-9)


def test_callable_closed_form():
    # int_{x1<x2} x1 x2 = 1/8 ; int_{x1<x2<x3} x1 x2 x3 = 1/48
    f = Handle(lambda x: x, 0.0, 1.0)
    assert m_n_bruteforce([f, f]) == pytest.approx(1 / 8, abs=1e-9)
    assert m_n_bruteforce([f, f, f]) == pytest.approx(1 / 48, abs=1e-9)


def test_disjoint_supports_ordering():
    a, b = indicator(0, 1, 2.0), indicator(2, 3, 3j)
    assert m_n_bruteforce([a, b]) == pytest.approx(6j)
    assert m_n_bruteforce([b, a]) == 0


def test_star_sees_interior_sup():
    # f = 1 on [0,1], -1 on [1,2]: running integral peaks at y = 1
    f = StepFunction([0, 1, 2], [1, -1])
    assert m_n_star_bruteforce([f]) == pytest.approx(1.0, abs=1e-9)
    assert abs(m_n_bruteforce([f])) < 1e-14


def test_brute_force_rejects_large_n():
    with pytest.raises(ValueError):
        m_n_bruteforce([indicator(0, 1)] * 7)


steps = st.builds(
    lambda cuts, re, im: StepFunction(np.concatenate([[0.0], np.sort(cuts), [1.0]]), np.array(re) + 1j * np.array(im)),
    st.lists(st.floats(0.01, 0.99), min_size=3, max_size=3, unique=True),
    st.lists(st.floats(-2, 2), min_size=4, max_size=4),
    st.lists(st.floats(-2, 2), min_size=4, max_size=4),
)


@given(st.lists(steps, min_size=2, max_size=4))
def test_reflection_reverses_order(fs):
    lhs = m_n_bruteforce(fs)
    rhs = m_n_bruteforce([f.reflect() for f in reversed(fs)])
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))


@given(st.lists(steps, min_size=2, max_size=4), st.floats(-3, 3))
def test_multilinear_in_each_slot(fs, c):
    base = m_n_bruteforce(fs)
    scaled = [StepFunction(fs[0].edges, c * fs[0].values)] + fs[1:]
    assert abs(m_n_bruteforce(scaled) - c * base) <= 1e-12 * (1 + abs(c * base))


@given(steps, steps)
def test_shuffle_identity_n2(f, g):
    # M(f, g) + M(g, f) = (int f)(int g)
    If = m_n_bruteforce([f])
    Ig = m_n_bruteforce([g])
    assert abs(m_n_bruteforce([f, g]) + m_n_bruteforce([g, f]) - If * Ig) < 1e-12


def test_uniform_structure_is_nested():
    ms = uniform_structure(0, 2, 6)
    assert ms.check() and ms.depth == 6
    assert ms.levels[3].size == 9


def test_adapted_lp_splits_mass_evenly():
    f = Handle(lambda x: 2 * x, 0.0, 1.0)
    ms = build_adapted(f, 1.0, M=8)
    assert ms.check()
    # |f| = 2x: cumulative mass x^2, so level-m breakpoints are sqrt(k / 2^m)
    assert np.allclose(ms.levels[4], np.sqrt(np.arange(17) / 16), atol=1e-12)
    masses = level_masses(f, ms, 1.0, 8)
    assert np.allclose(masses, 1 / 256, rtol=1e-9)


@settings(max_examples=10)
@given(p=st.floats(1, 3), m=st.integers(1, 6))
def test_adapted_lp_masses_property(p, m):
    f = Handle(lambda x: np.exp(-x) * (1 + np.sin(5 * x) ** 2), 0.0, 4.0)
    ms = build_adapted(f, p, M=7)
    masses = level_masses(f, ms, p, m)
    assert np.allclose(masses, ms.meta["total"] / 2**m, rtol=1e-9)


def test_adapted_amalgam_mass_bound():
    f = Handle(lambda x: (1 + x) ** -0.6, 0.0, 10.0)
    from scatterlab.multilinear import _Primitive, amalgam_mass
    ms = build_adapted(f, 1.8, M=5, mode="amalgam")
    assert ms.check()
    P = _Primitive(lambda x: np.abs(f(x)), np.linspace(0, 10, 2049))
    total = ms.meta["total"]
    for m in range(1, 6):
        lo, hi = ms.cells(m)
        cells = [amalgam_mass(P, u, v, 1.8) for u, v in zip(lo, hi)]
        assert max(cells) <= total * 2.0**-m * (1 + 1e-8)


def test_adapted_rejects_bad_input():
    f = indicator(0, 1)
    with pytest.raises(ValueError):
        build_adapted(f, 0.5)
    with pytest.raises(ValueError):
        build_adapted(f, 2, M=0)
    with pytest.raises(ValueError):
        build_adapted(Handle(lambda x: 0 * x, 0.0, 1.0), 2)
    coarse = make_sampled(np.linspace(0, 1, 9), np.ones(9))
    with pytest.raises(ValueError):
        build_adapted(coarse, 2, M=5, interval=(0, 1))


def test_g_delta_indicator_closed_form():
    ms = uniform_structure(0, 1, 10)
    m = np.arange(1, 11)
    ref = np.sum(2.0 ** (DELTA * m) * 2.0 ** (-m / 2))
    assert g_delta(indicator(0, 1), ms, DELTA).value == pytest.approx(ref, rel=1e-12)


def test_g_delta_family_takes_cellwise_sup():
    ms = uniform_structure(0, 1, 4)
    a, b = indicator(0, 0.5, 2.0), indicator(0.5, 1, 1.0)
    fam = g_delta([a, b], ms, 0.0)
    # level m: half the cells carry 2/2^m, half 1/2^m
    ref = sum(np.sqrt(2 ** (m - 1) * (4 + 1)) / 2**m for m in range(1, 5))
    assert fam.value == pytest.approx(ref, rel=1e-12)


def test_g_phase_zero_phase_is_cell_integrals():
    ms = uniform_structure(0, 1, 5)
    V = lambda x: np.ones_like(x)
    gp = g_phase(V, ms, 1j, lambda t, z: 0 * t, weights="m")
    ref = sum(m * np.sqrt((2 * 2**m - 1) * 4.0**-m) for m in range(1, 6))
    assert gp.value == pytest.approx(ref, rel=1e-12)
    with pytest.raises(ValueError):
        g_phase(V, ms, -1j, lambda t, z: 0 * t)


def test_bound_at_minimal_C_is_tight():
    fs = random_step_corpus(1, seed=4, n_range=(3, 3))[0]
    ms = uniform_structure(0, 1, 8)
    C = minimal_C(fs, ms=ms)
    rep, _ = check_numerical_bound(fs, C, ms=ms)
    assert abs(rep.margin) < 1e-10
    assert check_numerical_bound(fs, 1.01 * C, ms=ms)[0].holds
    assert not check_numerical_bound(fs, 0.99 * C, ms=ms)[0].holds


def test_bound_report_json():
    fs = random_step_corpus(1, seed=2, n_range=(2, 2))[0]
    rep = check_numerical_bound(fs, 2.0, ms=uniform_structure(0, 1, 6), corpus_id="abc")[0]
    assert '"corpus_id": "abc"' in rep.to_json()


def test_bound_validates_parameters():
    fs = random_step_corpus(1, seed=2, n_range=(2, 2))[0]
    with pytest.raises(ValueError):
        check_numerical_bound(fs, 1.0, delta=0.2, delta_prime=0.1)
    with pytest.raises(ValueError):
        check_numerical_bound(fs[:1], 1.0)


def test_corpus_is_reproducible():
    assert corpus_hash(random_step_corpus(5, 9)) == corpus_hash(random_step_corpus(5, 9))
    assert corpus_hash(random_step_corpus(5, 9)) != corpus_hash(random_step_corpus(5, 10))


def test_bn_table_growth():
    t = BnTable(0.3, 10)
    assert t.b[0] == pytest.approx(0.3)
    assert np.allclose(t.growth(), 0.3)


def test_bn_n4_closed_form():
    # n = 4: 1 - c^4 - s^4 = 2 c^2 s^2, middle term sqrt(6) c^2 s^2, so C <= 2/sqrt(6)
    res = minimize_scalar(lambda th: (1 - np.cos(th) ** 4 - np.sin(th) ** 4) / (np.sqrt(6) * (np.cos(th) * np.sin(th)) ** 2),
                          bounds=(0.1, 1.4), method="bounded")
    assert res.fun == pytest.approx(2 / np.sqrt(6), rel=1e-9)
    assert max_bn_constant(n_max=4) == pytest.approx(2 / np.sqrt(6), rel=1e-9)


def test_bn_cap_is_sharp_on_grid():
    c = max_bn_constant()
    assert calibrate_bn(0.999 * c).ok
    bad = calibrate_bn(1.01 * c)
    assert not bad.ok and bad.violation is not None
    with pytest.raises(ValueError):
        calibrate_bn(0.1, n_max=21)
