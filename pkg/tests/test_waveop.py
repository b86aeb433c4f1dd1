import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import gaussian_free_whole
from scatterlab.potential import make_bump, make_power_decay, make_square_barrier, make_zero
from scatterlab.spectral import _trap_weights
from scatterlab.waveop import (
    ConvergenceReport, barrier_transmission, build_psi_wholeline, evolve_free, evolve_modified_free,
    evolve_modified_free_wholeline, evolve_V_wholeline, geometric_schedule, modified_phase,
    parse_schedule, scattering_halfline, scattering_wholeline, sine_coefficients, sine_synthesis,
    smooth_band, w_phase, waveop_experiment,
)

LAM = np.array([0.5, 1.0, 2.0])


def l2(x, f):
    return float(np.sqrt(np.sum(_trap_weights(x) * np.abs(f) ** 2)))


# the four (operator, sign of t) cases on V = 1_[0,1], t large enough that Q has saturated
@pytest.mark.parametrize("op,t,extra", [
    ("-", 50.0, lambda l: -1 / (2 * l)),
    ("-", -50.0, lambda l: 0 * l),
    ("+", -50.0, lambda l: 1 / (2 * l)),
    ("+", 50.0, lambda l: 0 * l),
])
def test_modifier_sign_pins(op, t, extra):
    p = make_square_barrier(1, 0, 1)
    assert np.allclose(modified_phase(p, LAM, t, op), -LAM**2 * t + extra(LAM), atol=1e-12)


def test_whole_line_phase_includes_free_part():
    p = make_square_barrier(1, 0, 1)
    assert np.allclose(w_phase(p, LAM, 50.0, "whole"), LAM**2 * 50 + 1 / (2 * LAM))
    with pytest.raises(ValueError):
        w_phase(p, [0.01], 1.0)


def test_free_whole_line_gaussian():
    x = np.linspace(-60, 60, 2401)
    lam = np.linspace(-10, 10, 2001)
    g = gaussian_free_whole(x, 0.0, 0, 1.0, 2.0)
    for t in (0.5, 3.0):
        out = evolve_free(g, x, t, lam, "whole")
        assert l2(x, out - gaussian_free_whole(x, t, 0, 1.0, 2.0)) < 1e-8


def test_free_half_line_images():
    x = np.linspace(0, 60, 1201)
    lam = np.linspace(0, 10, 2001)
    ref = lambda t: gaussian_free_whole(x, t, 15, 1.0, 3.0) - gaussian_free_whole(x, t, -15, 1.0, -3.0)
    out = evolve_free(ref(0.0), x, 2.0, lam, "half")
    assert l2(x, out - ref(2.0)) < 1e-7


def test_modified_free_reduces_to_free_for_zero_potential():
    x = np.linspace(0, 40, 801)
    lam = np.linspace(0.1, 8, 1581)
    g = np.exp(-((x - 10) ** 2) / 2) * np.sin(2 * x)
    a = evolve_modified_free(make_zero(), g, x, 1.5, lam)
    b = evolve_free(g, x, 1.5, lam, "half")
    assert np.allclose(a, b, atol=1e-13)
    xw = np.linspace(-40, 40, 1601)
    lw = np.linspace(-8, 8, 1601)
    lw = lw[np.abs(lw) > 0.1]
    gw = np.exp(-xw**2 / 2)
    assert np.allclose(evolve_modified_free_wholeline(make_zero(), gw, xw, 1.0, lw),
                       evolve_free(gw, xw, 1.0, lw, "whole"), atol=1e-13)


@settings(max_examples=10)
@given(shift=st.floats(5, 15), k=st.floats(1, 3))
def test_sine_pair_round_trip(shift, k):
    x = np.linspace(0, 40, 801)
    lam = np.linspace(0, 10, 2001)
    g = np.exp(-((x - shift) ** 2)) * np.cos(k * x)
    back = sine_synthesis(lam, sine_coefficients(x, g, lam), x)
    assert l2(x, back - g) < 1e-6 * max(1.0, l2(x, g))


def test_smooth_band_support():
    lam = np.linspace(0, 2, 201)
    b = smooth_band(lam, 0.8, 1.2)
    assert np.all(b[(lam <= 0.8) | (lam >= 1.2)] == 0) and b.max() == pytest.approx(1.0)


def test_schedule_parsing():
    assert np.allclose(parse_schedule("geometric:12.5:3"), [12.5, 12.5 * np.sqrt(2), 25])
    assert np.allclose(geometric_schedule(1, 5)[-1], 4)
    for bad in ("linear:1:2", "geometric:1"):
        with pytest.raises(ValueError):
            parse_schedule(bad)


def test_cauchy_contract_bookkeeping():
    t = geometric_schedule(1, 5)  # 1, 1.41, 2, 2.83, 4
    inc = np.array([np.nan, 1.0, 0.8, 0.5, 0.4])
    r = ConvergenceReport(t, inc, inc, inc)
    ok, a, b = r.cauchy_contract(1.0)
    assert (a, b) == (1.0, 0.5) and ok
    assert not ConvergenceReport(t, np.array([np.nan, 1.0, 0.8, 0.7, 0.4]), inc, inc).cauchy_contract(1.0)[0]


# -- scattering ----------------------------------------------------------------------

@pytest.mark.parametrize("p", [make_square_barrier(1, 0, 1), make_bump(1.0, -1, 1.5)], ids=lambda p: p.kind)
def test_wholeline_identities(p):
    S = scattering_wholeline(p, np.linspace(0.5, 3, 20))
    assert S.unitarity_defect().max() < 1e-9
    assert S.symmetry_defect().max() < 1e-9
    assert S.reflection_defect().max() < 1e-9
    M = S.matrix(3)
    assert np.allclose(M.conj().T @ M, np.eye(2), atol=1e-9)


@pytest.mark.parametrize("E", [1.5, 2.0, 5.0])
def test_barrier_transmission_closed_form(E):
    S = scattering_wholeline(make_square_barrier(1, 0, 1), [np.sqrt(E)])
    assert abs(S.t1[0]) ** 2 == pytest.approx(barrier_transmission(1, 1, E), abs=1e-10)


def test_barrier_value():
    assert barrier_transmission(1, 1, 2) == pytest.approx(0.9187, abs=1e-4)


def test_wholeline_free_is_trivial():
    S = scattering_wholeline(make_zero(), [1.0, 2.0])
    assert np.allclose(S.t1, 1) and np.allclose(S.r1, 0)


def test_halfline_multiplier_is_unimodular():
    S = scattering_halfline(make_bump(1.0, 0, 2), np.linspace(0.5, 3, 10))
    assert np.allclose(np.abs(S.multiplier), 1, atol=1e-12)
    assert S.moller_phase is not None


def test_halfline_free_multiplier():
    # u = e^{i lam x}, gamma = 1: the multiplier is 1
    S = scattering_halfline(make_zero(), [1.0, 2.0])
    assert np.allclose(S.multiplier, 1)


@settings(max_examples=15)
@given(kappa=st.floats(-np.pi, np.pi))
def test_halfline_multiplier_normalisation_invariant(kappa):
    p = make_square_barrier(1, 0, 1)
    lam = np.array([0.7, 1.9])
    assert np.allclose(scattering_halfline(p, lam, kappa).multiplier, scattering_halfline(p, lam).multiplier, atol=1e-12)


def test_power_decay_has_no_moller_phase():
    assert scattering_halfline(make_power_decay(1.0, 0.6), [1.0]).moller_phase is None


def test_wholeline_evolution_free_gaussian():
    x = np.linspace(-40, 40, 1601)
    tab = build_psi_wholeline(make_zero(), np.arange(0.1, 8, 0.01), x)
    # k0 s = 6 keeps the mass below the lambda floor negligible
    g = gaussian_free_whole(x, 0, -5, 1.5, 4.0)
    out = evolve_V_wholeline(tab, g, 1.0)
    assert l2(x, out - gaussian_free_whole(x, 1.0, -5, 1.5, 4.0)) < 1e-5


def test_wholeline_evolution_conserves_norm_with_barrier():
    x = np.linspace(-60, 60, 2401)
    tab = build_psi_wholeline(make_square_barrier(1, 0, 1), np.arange(0.1, 8, 0.01), x)
    g = gaussian_free_whole(x, 0, -15, 1.5, 2.0)
    out = evolve_V_wholeline(tab, g, 4.0)
    assert l2(x, out) == pytest.approx(l2(x, g), rel=1e-4)


# -- experiment gates ----------------------------------------------------------------

def test_unmodified_experiment_gated_on_divergent_integral():
    r = waveop_experiment(make_power_decay(1.0, 0.6), (0.8, 1.2), geometric_schedule(5, 3), modified=False)
    assert not r.admissible and np.all(np.isnan(r.dist_to_limit))


def test_experiment_rejects_bad_input():
    with pytest.raises(ValueError):
        waveop_experiment(make_zero(), (0.05, 1.0), [1.0])
    with pytest.raises(ValueError):
        waveop_experiment(make_zero(), (0.8, 1.2), [-1.0])


def test_experiment_zero_potential_is_exact():
    r = waveop_experiment(make_zero(), (0.8, 1.2), geometric_schedule(5, 3))
    assert np.all(r.dist_to_limit == 0)


def test_small_barrier_experiment_converges():
    r = waveop_experiment(make_square_barrier(1, 0, 1), (0.8, 1.2), geometric_schedule(4, 5),
                          modified=False, n_band=400, margin=60)
    assert r.admissible
    assert np.all(np.diff(r.dist_to_limit) < 0)
    assert r.norm_defect.max() < 1e-3
