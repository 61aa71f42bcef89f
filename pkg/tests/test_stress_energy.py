import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from kgquant.errors import VacuumRegionError
from kgquant.field import NATURAL, CylindricalMode, FieldState, PhysicalConstants, bessel_peak_radius, evaluate, preset
from kgquant.stress_energy import (
    local_group_velocity,
    momentum_density_theta,
    stress_energy_at,
    t00_scale,
)


def time_average(fn, period):
    val, _ = integrate.quad(fn, 0.0, period, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val / period


def test_uniform_at_t0():
    f = preset("uniform_oscillator", amplitude=2.0)
    s = stress_energy_at(f, 0.0, 1.0, 0.0, 0.0, "instantaneous")
    assert s.t00 == pytest.approx(0.5 * 4.0)
    np.testing.assert_array_equal(s.t0i, 0.0)
    np.testing.assert_array_equal(local_group_velocity(s), 0.0)


def test_uniform_superposition_quadratic():
    a = FieldState(NATURAL, (CylindricalMode(1.5),))
    ab = FieldState(NATURAL, (CylindricalMode(1.5), CylindricalMode(0.7)))
    ta = stress_energy_at(a, 0.0, 1.0, 0.0, 0.0, "instantaneous").t00
    tab = stress_energy_at(ab, 0.0, 1.0, 0.0, 0.0, "instantaneous").t00
    assert tab == pytest.approx(ta * (2.2 / 1.5) ** 2)


@pytest.mark.parametrize("l", [1, 2, 3])
def test_cycle_averaged_p_theta_closed_form(l):
    f = preset("rotor_l", l=l, alpha=0.1, amplitude=1.3)
    m = f.modes[0]
    r = 17.0
    got = momentum_density_theta(f, 0.0, r, 0.4)
    want = 1.3**2 * m.omega * l * special.jv(l, m.k_r * r) ** 2 / (2 * r)
    assert got == pytest.approx(want, rel=1e-12)
    # independent oracle: exact time average of the instantaneous density over one mode period
    oracle = time_average(lambda t: float(stress_energy_at(f, t, r, 0.4, 0.0, "instantaneous").p_theta), 2 * math.pi / m.omega)
    assert got == pytest.approx(oracle, rel=1e-9)


def test_cycle_averaged_t00_matches_time_average():
    f = preset("mixed_l", alpha=0.2)
    # both modes share omega, so the mode period averages everything
    period = 2 * math.pi / f.modes[0].omega
    for r, th in [(4.0, 0.3), (9.0, 2.0)]:
        got = stress_energy_at(f, 0.0, r, th).t00
        oracle = time_average(lambda t: float(stress_energy_at(f, t, r, th, 0.0, "instantaneous").t00), period)
        assert got == pytest.approx(oracle, rel=1e-10)


def test_quadrature_method_close_to_analytic():
    alpha = 0.05
    f = preset("rotor_l", l=1, alpha=alpha)
    r = bessel_peak_radius(f)
    a = stress_energy_at(f, 0.2, r, 0.1)
    q = stress_energy_at(f, 0.2, r, 0.1, method="quadrature")
    # averaging over 2 pi/omega0 instead of 2 pi/omega leaves an O(alpha^2) ripple
    assert q.t00 == pytest.approx(a.t00, rel=alpha**2)
    assert q.p_theta == pytest.approx(a.p_theta, rel=alpha**2)


def test_rotor_velocity_ratio_scales_with_alpha_squared():
    errs = []
    for alpha in (0.1, 0.05, 0.025):
        f = preset("rotor_l", l=2, alpha=alpha)
        w = f.modes[0].omega
        r = bessel_peak_radius(f)
        v = local_group_velocity(stress_energy_at(f, 0.0, r, 0.0))
        errs.append(abs(v[1] * w * r / 2 - 1))
    assert errs[0] < 0.01
    assert 3.2 < errs[0] / errs[1] < 4.8
    assert 3.2 < errs[1] / errs[2] < 4.8


def test_rotor_instantaneous_crest():
    f = preset("rotor_l", l=1, alpha=0.05)
    w = f.modes[0].omega
    s = stress_energy_at(f, 0.7, 20.0, w * 0.7, 0.0, "instantaneous")
    assert abs(s.p_theta) < 1e-15


def test_sign_conventions_agree_for_positive_l():
    f = preset("rotor_l", l=1, alpha=0.05)
    s = stress_energy_at(f, 0.0, 30.0, 0.0)
    assert s.p_theta > 0
    assert s.v[1] > 0


def test_vacuum_region_error():
    f = preset("rotor_l", l=1, alpha=0.1, window="auto")
    s = stress_energy_at(f, 0.0, 2 * f.window.support, 0.0)
    assert np.isnan(s.v).all()
    with pytest.raises(VacuumRegionError):
        local_group_velocity(s)


def test_floor_is_relative():
    f = preset("rotor_l", l=1, alpha=0.1)
    s = stress_energy_at(f, 0.0, 5.0, 0.0)
    assert s.floor == pytest.approx(1e-12 * t00_scale(f))
    g = f.scaled(10.0)
    assert stress_energy_at(g, 0.0, 5.0, 0.0).floor == pytest.approx(100 * s.floor)


def test_t00_scale_bounds_density():
    f = preset("mixed_l", alpha=0.3, window="auto")
    r = np.linspace(0, f.window.support, 400)
    for averaging in ("instantaneous", "cycle_averaged"):
        assert np.max(stress_energy_at(f, 0.3, r, 0.7, 0.0, averaging).t00) <= t00_scale(f)


def test_convention_switch_and_warning():
    k = PhysicalConstants(c=3.0, hbar=1.0, m=1.0)
    f = preset("rotor_l", k, l=1, alpha=0.05)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        printed = stress_energy_at(f, 0.0, 30.0, 0.0, convention="printed")
    assert any("printed" in str(w.message) for w in caught)
    flux = stress_energy_at(f, 0.0, 30.0, 0.0, convention="flux")
    np.testing.assert_allclose(flux.v, 3.0 * printed.v)
    n = preset("rotor_l", l=1, alpha=0.05)
    np.testing.assert_array_equal(
        stress_energy_at(n, 0.0, 30.0, 0.0, convention="flux").v, stress_energy_at(n, 0.0, 30.0, 0.0).v
    )


def test_cycle_averaged_speed_subluminal():
    f = preset("mixed_l", alpha=0.5)
    r = np.linspace(0.1, 20, 200)
    s = stress_energy_at(f, 0.0, r, 1.1)
    assert not s.superluminal.any()
    assert np.all(np.linalg.norm(s.v, axis=-1) <= 1 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(
    amp=st.floats(0.1, 5),
    scale=st.floats(0.2, 4),
    t=st.floats(-3, 3),
    r=st.floats(0.5, 30),
    theta=st.floats(-4, 4),
    averaging=st.sampled_from(["instantaneous", "cycle_averaged"]),
)
def test_nonnegative_energy_and_quadratic_scaling(amp, scale, t, r, theta, averaging):
    f = FieldState(NATURAL, (CylindricalMode(amp, 1, 0.2), CylindricalMode(0.5 * amp, -2, 0.1, 0.05, phase=0.4)))
    s = stress_energy_at(f, t, r, theta, 0.3, averaging)
    g = stress_energy_at(f.scaled(scale), t, r, theta, 0.3, averaging)
    assert s.t00 >= 0
    assert g.t00 == pytest.approx(scale**2 * s.t00, rel=1e-12, abs=1e-300)
    np.testing.assert_allclose(g.t0i, scale**2 * s.t0i, rtol=1e-12, atol=1e-300)
    if s.t00 > s.floor and g.t00 > g.floor:
        np.testing.assert_allclose(g.v, s.v, rtol=1e-10, atol=1e-14)


def test_axis_limits():
    f = preset("rotor_l", l=1, alpha=0.1)
    s = stress_energy_at(f, 0.3, 0.0, 0.2, 0.0, "instantaneous")
    assert np.isfinite(s.t00) and np.all(np.isfinite(s.t0i))
    e = evaluate(f, 0.3, 0.0, 0.2)
    assert np.isfinite(e.d_theta)
