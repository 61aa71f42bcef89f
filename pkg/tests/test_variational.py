import math

import numpy as np
import pytest

from kgquant.errors import InadmissibleVariationError, NonSpacelikeError, QuadratureError, ScenarioError
from kgquant.field import preset
from kgquant.hypersurface import trace_surface
from kgquant.surfaces import FlatSurface, FunctionSurface
from kgquant.variational import (
    COORDINATE_BC,
    NATURAL_NCBC,
    NON_EXTREMIZING_NCBC,
    POSITION_FIXED,
    ParticleScenario,
    Region4D,
    Trajectory,
    bump_variation,
    classify_boundary,
    constant_variation,
    endpoint_variation,
    field_action,
    field_boundary_term,
    field_first_variation,
    free_trajectory,
    gaussian_variation,
    harmonic_trajectory,
    particle_action,
    particle_action_slope,
    particle_first_variation,
    potential,
    random_variations,
    uniform_force_trajectory,
    velocity_fixed,
)

# --- particle ---------------------------------------------------------------


def test_free_particle_action():
    sc = ParticleScenario(1.0, potential("free"), free_trajectory(0.0, 2.0), 0.0, 1.0)
    assert particle_action(sc) == pytest.approx(2.0, abs=1e-12)


def test_static_particle_action_zero():
    sc = ParticleScenario(1.0, potential("free"), free_trajectory(3.0, 0.0), 0.0, 5.0)
    assert particle_action(sc) == 0.0


@pytest.mark.parametrize("fraction", [1.0, 0.3, 0.77])
def test_harmonic_classical_action_closed_form(fraction):
    m, w, A = 1.7, 2.0, 0.6
    T = fraction * math.pi / w
    sc = ParticleScenario(m, potential("harmonic", k=m * w * w), harmonic_trajectory(A, w), 0.0, T)
    # textbook: S = -(m A^2 w / 4) sin(2 w T) for x = A cos(w t)
    assert particle_action(sc) == pytest.approx(-(m * A * A * w / 4) * math.sin(2 * w * T), abs=1e-10)


def test_spline_trajectory():
    t = np.linspace(0, 1, 201)
    tr = Trajectory.from_samples(t, 0.5 * 9.8 * t**2)
    sc = ParticleScenario(1.0, potential("linear", g=-9.8), tr)
    exact = ParticleScenario(1.0, potential("linear", g=-9.8), uniform_force_trajectory(9.8))
    assert particle_action(sc) == pytest.approx(particle_action(exact), rel=1e-9)


@pytest.mark.parametrize(
    "scenario",
    [
        ParticleScenario(1.0, potential("free"), free_trajectory(0.0, 1.0)),
        ParticleScenario(2.0, potential("harmonic", k=8.0), harmonic_trajectory(1.0, 2.0, 0.3), 0.0, 2.0),
        ParticleScenario(1.0, potential("linear", g=3.0), uniform_force_trajectory(-3.0, 1.0, 2.0)),
    ],
)
def test_el_trajectory_bulk_vanishes_for_random_family(scenario):
    family = random_variations(scenario, count=20, seed=4)
    assert len(family) == 20
    for var in family:
        fv = particle_first_variation(scenario, var)
        assert abs(fv.bulk) < 1e-9
        assert fv.boundary == 0.0
        assert abs(fv.total) < 1e-9


def test_free_particle_velocity_fixed_boundary_term():
    sc = ParticleScenario(1.0, potential("free"), free_trajectory(0.0, 1.0), bc=(POSITION_FIXED, velocity_fixed(1.0)))
    fv = particle_first_variation(sc, endpoint_variation(0.0, 1.0, "end", 1.0))
    assert fv.boundary == 1.0
    assert abs(fv.bulk) < 1e-12


def test_turning_point_boundary_term_vanishes():
    # x = cos t reaches a turning point at t = pi
    sc = ParticleScenario(1.0, potential("harmonic", k=1.0), harmonic_trajectory(1.0, 1.0), 0.0, math.pi, bc=(POSITION_FIXED, velocity_fixed(0.0)))
    fv = particle_first_variation(sc, endpoint_variation(0.0, math.pi, "end", 1.0))
    assert abs(fv.boundary) < 1e-12
    assert abs(fv.total) < 1e-9


def test_inadmissible_variation():
    sc = ParticleScenario(1.0, potential("free"), free_trajectory())
    with pytest.raises(InadmissibleVariationError):
        particle_first_variation(sc, endpoint_variation(0.0, 1.0, "end"))
    sc2 = ParticleScenario(1.0, potential("free"), free_trajectory(), bc=(POSITION_FIXED, velocity_fixed(1.0)))
    with pytest.raises(InadmissibleVariationError):
        particle_first_variation(sc2, bump_variation(0.9, 0.3))  # slope nonzero at t1


def test_bad_scenarios():
    with pytest.raises(ScenarioError):
        ParticleScenario(0.0, potential("free"), free_trajectory())
    with pytest.raises(ScenarioError):
        ParticleScenario(1.0, potential("free"), free_trajectory(), 1.0, 1.0)
    with pytest.raises(ScenarioError):
        potential("cubic")


def test_quadrature_failure_reported():
    sc = ParticleScenario(1.0, potential("free"), Trajectory(lambda t: 0.0, lambda t: np.sin(1e6 * t), lambda t: 0.0))
    with pytest.raises(QuadratureError):
        particle_action(sc, tol=1e-14)


def test_finite_difference_second_order():
    # a non-EL trajectory in a quartic well so both bulk and boundary parts are nonzero
    sc = ParticleScenario(
        1.3, potential("quartic", lam=2.0), harmonic_trajectory(0.8, 1.1, 0.2), 0.0, 1.5, bc=(POSITION_FIXED, velocity_fixed(0.0))
    )
    var = endpoint_variation(0.0, 1.5, "end", 0.7)
    exact = particle_first_variation(sc, var).total
    errs = [abs(particle_action_slope(sc, var, eps) - exact) for eps in (1e-2, 1e-3, 1e-4)]
    print("central-difference errors:", errs)
    assert errs[0] > 1e-7  # quartic term makes the O(eps^2) error visible
    assert 70 < errs[0] / errs[1] < 130
    assert errs[2] < max(errs[1] / 50, 1e-9)


# --- field ------------------------------------------------------------------


def slab_region(t0, t1, r_cut, z=(0.0, 1.0)):
    return Region4D(FlatSurface(t0, (0.0, r_cut), z), FlatSurface(t1, (0.0, r_cut), z), r_cut, z)


def test_uniform_action_over_period_vanishes():
    f = preset("uniform_oscillator", amplitude=1.4)
    res = field_action(f, slab_region(0.0, 2 * math.pi, 3.0), n_t=32)
    assert abs(res.value) < 1e-12
    half = field_action(f, slab_region(0.0, 0.4, 3.0), n_t=32)
    # closed form: L = -(A^2/2) cos(2 w0 t), so S = -(A^2/4) sin(2 w0 T) per unit volume
    vol = math.pi * 9.0
    assert half.value == pytest.approx(-(1.4**2 / 4) * math.sin(0.8) * vol, rel=1e-12)


def test_action_quadratic_in_amplitude():
    f = preset("rotor_l", l=1, alpha=0.2)
    reg = slab_region(0.0, 1.0, 12.0)
    s1 = field_action(f, reg).value
    s2 = field_action(f.scaled(0.1), reg).value
    assert s2 == pytest.approx(0.01 * s1, rel=1e-12)


def test_action_tail_bound():
    f = preset("rotor_l", l=1, alpha=0.2, window="auto")
    cut = 0.7 * f.window.support
    small = field_action(f, slab_region(0.0, 1.0, cut))
    big = field_action(f, slab_region(0.0, 1.0, 2 * cut))
    assert big.tail_estimate == 0.0
    assert abs(big.value - small.value) <= small.tail_estimate
    unwindowed = field_action(f.without_window(), slab_region(0.0, 1.0, cut))
    assert math.isinf(unwindowed.tail_estimate)
    with pytest.raises(QuadratureError):
        field_action(f, slab_region(0.0, 1.0, cut), tail_tol=1e-12)


def test_boundary_term_examples():
    f = preset("uniform_oscillator", amplitude=1.4)
    flat0 = FlatSurface(0.0, (0.0, 2.0), (0.0, 1.0))
    assert field_boundary_term(f, flat0, constant_variation(0.0)).value == 0.0
    assert abs(field_boundary_term(f, flat0, constant_variation(3.0)).value) < 1e-15
    quarter = FlatSurface(math.pi / 2, (0.0, 2.0), (0.0, 1.0))
    bt = field_boundary_term(f, quarter, constant_variation(1.0))
    assert bt.value == pytest.approx(-1.4 * quarter.volume, rel=1e-12)
    assert bt.max_normalized == pytest.approx(1.0)


def test_non_spacelike_surface_rejected():
    f = preset("uniform_oscillator")
    steep = FunctionSurface(lambda r, th, z: 2.0 * r, lambda r, th, z: np.stack(np.broadcast_arrays(2.0 + 0 * r, 0 * r, 0 * r), -1), (0.0, 1.0))
    with pytest.raises(NonSpacelikeError):
        field_boundary_term(f, steep, constant_variation())


def test_classification():
    alpha = 0.05
    f = preset("rotor_l", l=1, alpha=alpha)
    mesh = trace_surface(f)
    tol = 5 * alpha**2
    assert classify_boundary(f, mesh, "phi_fixed").kind == COORDINATE_BC
    nat = classify_boundary(f, mesh, "derivative", tol)
    assert nat.kind == NATURAL_NCBC
    flat = FlatSurface(0.0, mesh.r_range, (-0.5, 0.5), n_r=9)
    bad = classify_boundary(f, flat, "derivative", tol)
    assert bad.kind == NON_EXTREMIZING_NCBC
    assert bad.max_normalized > 0.1
    assert bad.witness_delta_s > 1e3 * tol * nat.witness_delta_s
    with pytest.raises(ScenarioError):
        classify_boundary(f, flat, "momentum")


def test_uniform_crest_is_natural_at_default_tolerance():
    f = preset("uniform_oscillator")
    c = classify_boundary(f, FlatSurface(0.0, (0.0, 3.0)), "derivative")
    assert c.kind == NATURAL_NCBC
    assert c.max_normalized == 0.0


@pytest.mark.parametrize("seed", [0, 1])
def test_field_first_variation_matches_finite_difference(seed):
    f = preset("rotor_l", l=1, alpha=0.3)
    rng = np.random.default_rng(seed)
    r_cut, z = 12.0, (-8.0, 8.0)
    reg = slab_region(0.0, 2.0, r_cut, z)
    x, y = rng.uniform(-2, 2, 2)
    var = gaussian_variation((1.0, x, y, 0.0), 0.5, 1.0, 1.0)
    kw = dict(n_r=32, n_theta=32, n_z=16, n_t=24)
    fv = field_first_variation(f, reg, var, **kw)
    eps = 1e-4
    fd = (field_action(f, reg, var, eps, **kw).value - field_action(f, reg, var, -eps, **kw).value) / (2 * eps)
    assert abs(fv.bulk) < 1e-10 * max(abs(fv.boundary), 1.0)
    assert fv.total == pytest.approx(fd, rel=1e-7)


def test_first_variation_on_crest_surfaces_vanishes():
    # uniform oscillator between two crests: no boundary contribution at all
    f = preset("uniform_oscillator")
    reg = slab_region(0.0, 2 * math.pi, 6.0, (-6.0, 6.0))
    var = gaussian_variation((1.0, 0.3, -0.2, 0.0), 2.0, 0.6, 1.0)
    fv = field_first_variation(f, reg, var, n_r=24, n_theta=16, n_z=16)
    assert abs(fv.total) < 1e-12


def test_lateral_admissibility():
    f = preset("uniform_oscillator")
    reg = slab_region(0.0, 1.0, 2.0)
    with pytest.raises(InadmissibleVariationError):
        field_first_variation(f, reg, constant_variation(1.0))


def test_region_order():
    f = preset("uniform_oscillator")
    with pytest.raises(ScenarioError):
        field_action(f, slab_region(1.0, 0.5, 2.0))
    with pytest.raises(ScenarioError):
        Region4D(FlatSurface(0.0), FlatSurface(1.0), 0.0)
