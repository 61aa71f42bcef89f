import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from kgquant.errors import QuadratureError
from kgquant.field import NATURAL, bessel_peak_radius, preset
from kgquant.hypersurface import trace_surface
from kgquant.quantization import (
    REPORT_KEYS,
    angular_momentum,
    bohr_sommerfeld_check,
    lz_chain_check,
    normalize_energy,
    quantize_seam,
    quantized_tolerance,
    total_energy,
)
from kgquant.stress_energy import stress_energy_at
from kgquant.surfaces import FlatSurface

# --- seam quantization --------------------------------------------------------


@pytest.mark.parametrize(
    "delta_t,n,res",
    [
        (0.0, 0, 0.0),
        (math.pi, 1, 0.0),
        (-2 * math.pi, -2, 0.0),
        (2.2 * math.pi, 2, 0.2),
        (2.5 * math.pi, 2, 0.5),  # ties go to even
        (3.5 * math.pi, 4, 0.5),
    ],
)
def test_quantize_seam_examples(delta_t, n, res):
    got_n, got_res = quantize_seam(delta_t, NATURAL)
    assert got_n == n
    assert got_res == pytest.approx(res, abs=1e-12)


def test_tie_is_never_quantized():
    _, res = quantize_seam(2.5 * math.pi, NATURAL)
    assert not res < quantized_tolerance(0.05)
    assert quantized_tolerance(0.05) == pytest.approx(0.0125)
    assert quantized_tolerance(0.01) == 0.01


def test_quantize_seam_rejects_non_finite():
    with pytest.raises(ValueError):
        quantize_seam(math.nan, NATURAL)


@settings(max_examples=60, deadline=None)
@given(st.floats(-50, 50))
def test_residual_at_most_half(delta_t):
    n, res = quantize_seam(delta_t, NATURAL)
    assert 0 <= res <= 0.5
    assert abs(delta_t / math.pi - n) == pytest.approx(res, abs=1e-12)


def test_rotor_seam_closed_form():
    # loop at radius r: 4 pi omega l / (omega^2 + 1 + k^2 J'^2/J^2 + l^2/r^2), J' = 0 at the peak
    alpha = 0.05
    f = preset("rotor_l", l=1, alpha=alpha)
    r = bessel_peak_radius(f)
    w = f.modes[0].omega
    rule = bohr_sommerfeld_check(f, r)
    want = 4 * math.pi * w / (w * w + 1 + 1 / r**2)
    assert rule.delta_t == pytest.approx(want, rel=1e-12)
    n, res = quantize_seam(rule.delta_t, NATURAL)
    assert n == 2
    assert res <= 2 * alpha**2


# --- Bohr-Sommerfeld-like rule ------------------------------------------------


def test_uniform_loop_rule_is_zero():
    rule = bohr_sommerfeld_check(preset("uniform_oscillator"), 4.0)
    assert rule.bs_lhs == 0.0 and rule.bs_ratio == 0.0


@pytest.mark.parametrize("l", [1, 2, 3])
def test_loop_rule_identity_and_value(l):
    alpha = 0.05
    rule = bohr_sommerfeld_check(preset("rotor_l", l=l, alpha=alpha))
    assert rule.bs_ratio == pytest.approx(rule.delta_t / math.pi, rel=1e-12)
    assert abs(rule.bs_ratio - 2 * l) <= 2 * l * 5 * alpha**2


def test_loop_rule_with_units():
    from kgquant.field import PhysicalConstants

    k = PhysicalConstants(c=2.0, hbar=0.5, m=3.0)
    f = preset("rotor_l", k, l=2, alpha=0.05)
    rule = bohr_sommerfeld_check(f, convention="flux")
    assert rule.bs_ratio == pytest.approx(rule.delta_t * k.omega0 / math.pi, rel=1e-12)
    assert round(rule.bs_ratio) == 4


# --- energy and angular momentum ---------------------------------------------


def simpson_radial(field, density, n=8001):
    """Independent fixed-grid oracle for a theta-independent cycle-averaged density."""
    r = np.linspace(0.0, field.window.support, n)
    vals = density(r)
    return 2 * math.pi * integrate.simpson(r * vals, x=r)


def test_energy_matches_simpson_oracle():
    f = preset("rotor_l", l=1, alpha=0.05, amplitude=0.3, window="auto")
    got = total_energy(f)
    want = simpson_radial(f, lambda r: stress_energy_at(f, 0.0, r, 0.0).t00)
    assert got.value == pytest.approx(want, rel=1e-3)
    assert got.tail_estimate == 0.0
    assert got.error_estimate < 1e-3 * got.value


def test_angular_momentum_matches_simpson_oracle():
    f = preset("rotor_l", l=2, alpha=0.05, window="auto")
    got = angular_momentum(f).value
    want = simpson_radial(f, lambda r: r * stress_energy_at(f, 0.0, r, 0.0).p_theta)
    assert got == pytest.approx(want, rel=1e-3)


@pytest.mark.parametrize("l", [1, 2, 3])
def test_lz_over_energy_ratio(l):
    alpha = 0.05
    f = preset("rotor_l", l=l, alpha=alpha, window="auto")
    w = f.modes[0].omega
    ratio = angular_momentum(f).value * w / total_energy(f).value
    # positive for l > 0 under the physical sign of T0i
    assert ratio == pytest.approx(l, rel=5 * alpha**2)


def test_uniform_has_no_angular_momentum():
    f = preset("uniform_oscillator", amplitude=1.2)
    assert angular_momentum(f, r_max=3.0).value == 0.0
    e = total_energy(f, r_max=3.0)
    assert e.value == pytest.approx(0.5 * 1.44 * math.pi * 9.0, rel=1e-12)
    assert e.tail_estimate == 0.0


def test_zero_amplitude_energy():
    f = preset("rotor_l", l=1, alpha=0.1, amplitude=0.0, window="auto")
    assert total_energy(f).value == 0.0


def test_orthogonal_packets_are_additive():
    a = preset("rotor_l", l=1, alpha=0.05, window="auto")
    b = preset("rotor_l", l=3, alpha=0.05, amplitude=0.7).with_window(a.window)
    both = a + b
    for fn in (total_energy, angular_momentum):
        assert fn(both).value == pytest.approx(fn(a).value + fn(b).value, rel=1e-10)


def test_unwindowed_tail():
    f = preset("rotor_l", l=1, alpha=0.1)
    with pytest.raises(QuadratureError):
        total_energy(f)
    cut = total_energy(f, r_max=40.0)
    assert math.isinf(cut.tail_estimate)
    with pytest.raises(QuadratureError):
        total_energy(f, r_max=40.0, tail_tol=1e-3)


def test_energy_is_time_independent():
    f = preset("mixed_l", alpha=0.05, window="auto")
    e0 = total_energy(f, FlatSurface(0.0), "instantaneous", n_r=32, n_theta=48).value
    e1 = total_energy(f, FlatSurface(1.7), "instantaneous", n_r=32, n_theta=48).value
    assert e1 == pytest.approx(e0, rel=5e-3)
    assert total_energy(f).value == pytest.approx(e0, rel=5e-3)


@pytest.mark.parametrize("factor", [2.0, 0.5])
def test_amplitude_scaling(factor):
    f = preset("rotor_l", l=1, alpha=0.05, window="auto")
    g = f.scaled(factor)
    for fn in (total_energy, angular_momentum):
        assert fn(g).value == pytest.approx(factor**2 * fn(f).value, rel=1e-12)


def test_normalize_energy():
    f = normalize_energy(preset("rotor_l", l=1, alpha=0.05, amplitude=3.0, window="auto"))
    assert total_energy(f).value == pytest.approx(1.0, rel=1e-12)
    g = normalize_energy(f, 2.5)
    assert total_energy(g).value == pytest.approx(2.5, rel=1e-12)


def test_mesh_integrals_on_natural_surface():
    # the mesh patch is a finite annulus, so only the ratio carries over from the flat slice
    f = normalize_energy(preset("rotor_l", l=1, alpha=0.05, window="auto"))
    mesh = trace_surface(f)
    e_mesh = total_energy(f, mesh)
    l_mesh = angular_momentum(f, mesh)
    assert e_mesh.value > 0
    assert l_mesh.value * f.modes[0].omega / e_mesh.value == pytest.approx(1.0, abs=0.05)
    assert l_mesh.tilt_correction != 0.0


# --- full chain ---------------------------------------------------------------


def test_chain_rotor_normalized():
    alpha = 0.05
    f = normalize_energy(preset("rotor_l", l=1, alpha=alpha, window="auto"))
    rep = lz_chain_check(f)
    assert rep.n_est == 2
    assert rep.flags["quantized"] and not rep.flags["no_natural_surface"]
    assert not rep.flags["relativistic"]
    assert rep.E_tot == pytest.approx(1.0, rel=1e-9)
    assert rep.L_z_predicted == pytest.approx(1.0, rel=1e-9)
    assert abs(rep.L_z - rep.L_z_predicted) <= max(5 * alpha**2, 0.005)
    assert rep.extras["closure_ok"]
    assert rep.spread_bound == pytest.approx(4 * alpha**2)
    # sign of L_z follows the seam
    assert rep.L_z > 0 and rep.delta_t > 0


def test_chain_negative_l():
    f = normalize_energy(preset("rotor_l", l=-1, alpha=0.05, window="auto"))
    rep = lz_chain_check(f)
    assert rep.n_est == -2
    assert rep.L_z < 0 and rep.delta_t < 0
    assert rep.L_z == pytest.approx(rep.L_z_predicted, abs=5 * 0.05**2)


def test_chain_uniform():
    rep = lz_chain_check(preset("uniform_oscillator"), r_max=3.0)
    assert rep.n_est == 0 and rep.n_residual == 0.0
    assert rep.L_z == 0.0
    assert rep.flags["quantized"]


def test_chain_mixed_has_no_natural_surface():
    rep = lz_chain_check(preset("mixed_l", alpha=0.05, window="auto"))
    assert rep.flags["no_natural_surface"] and not rep.flags["quantized"]
    assert rep.n_est is None and rep.delta_t is None and rep.L_z_predicted is None


def test_chain_closure_constant_bounded_across_alpha():
    consts = []
    for alpha in (0.1, 0.05, 0.025):
        f = normalize_energy(preset("rotor_l", l=1, alpha=alpha, window="auto"))
        rep = lz_chain_check(f)
        assert rep.n_est == 2
        consts.append(abs(rep.L_z * 1.0 / rep.E_tot - rep.n_est / 2) / alpha**2)
    assert max(consts) < 5


def test_report_invariant_under_rotation_and_time_shift():
    f = normalize_energy(preset("rotor_l", l=2, alpha=0.05, window="auto"))
    base = lz_chain_check(f)
    for g in (f.rotated(0.9), f.time_shifted(1.3)):
        rep = lz_chain_check(g)
        assert rep.n_est == base.n_est
        assert rep.delta_t == pytest.approx(base.delta_t, rel=1e-9)
        assert rep.L_z == pytest.approx(base.L_z, rel=1e-9)
        assert rep.E_tot == pytest.approx(base.E_tot, rel=1e-9)


def test_report_amplitude_invariants():
    f = preset("rotor_l", l=1, alpha=0.05, window="auto")
    a, b = lz_chain_check(f), lz_chain_check(f.scaled(2.0))
    assert b.n_est == a.n_est
    assert b.bs_ratio == pytest.approx(a.bs_ratio, rel=1e-12)
    assert b.E_tot == pytest.approx(4 * a.E_tot, rel=1e-12)
    assert b.L_z == pytest.approx(4 * a.L_z, rel=1e-12)
    assert b.L_z / b.E_tot == pytest.approx(a.L_z / a.E_tot, rel=1e-12)


def test_report_serialization():
    f = normalize_energy(preset("rotor_l", l=1, alpha=0.05, window="auto"))
    rep = lz_chain_check(f)
    d = json.loads(rep.to_json())
    assert list(d)[: len(REPORT_KEYS)] == list(REPORT_KEYS)
    assert set(d["flags"]) == {"quantized", "no_natural_surface", "relativistic"}
    assert d["n_est"] == 2
    assert isinstance(d["extras"]["closure_ok"], bool)
    mixed = json.loads(lz_chain_check(preset("mixed_l", alpha=0.05, window="auto")).to_json())
    assert mixed["n_est"] is None
