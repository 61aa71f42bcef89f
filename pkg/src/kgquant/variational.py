"""Actions, first variations and boundary terms.

Two settings share the same bookkeeping: a particle in one dimension with
Lagrangian m xdot^2/2 - V(x), and the scalar field with

    L = 0.5 * (phi_t**2 / c**2 - |grad phi|**2 - mu**2 phi**2),  S = int L dt d^3x.

For the field, the first variation splits as

    dS = -int (box phi + mu^2 phi) dphi  +  (1/c^2) [ int (phi_t + c^2 grad T . grad phi) dphi d^3x ]_{s0}^{s1}

and in natural units the bracket is the integral of (d phi / d eta) dphi ds.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from . import quadrature
from .errors import InadmissibleVariationError, QuadratureError, ScenarioError
from .field import FieldState, complex_amplitudes, evaluate
from .surfaces import Hypersurface, check_spacelike, normal_derivative, normal_flux

# ---------------------------------------------------------------------------
# particle


@dataclass(frozen=True)
class Potential:
    name: str
    value: Callable
    deriv: Callable
    params: dict = dc_field(default_factory=dict)


def potential(name: str = "free", **params) -> Potential:
    """Named analytic potential: free, harmonic(k), linear(g), quartic(lam)."""
    if name == "free":
        return Potential(name, lambda x: np.zeros_like(np.asarray(x, float)), lambda x: np.zeros_like(np.asarray(x, float)))
    if name == "harmonic":
        k = float(params.get("k", 1.0))
        return Potential(name, lambda x: 0.5 * k * np.asarray(x) ** 2, lambda x: k * np.asarray(x), {"k": k})
    if name == "linear":
        g = float(params.get("g", 1.0))
        return Potential(name, lambda x: g * np.asarray(x), lambda x: np.full_like(np.asarray(x, float), g), {"g": g})
    if name == "quartic":
        lam = float(params.get("lam", 1.0))
        return Potential(name, lambda x: 0.25 * lam * np.asarray(x) ** 4, lambda x: lam * np.asarray(x) ** 3, {"lam": lam})
    raise ScenarioError(f"unknown potential {name!r}")


@dataclass(frozen=True)
class Trajectory:
    x: Callable
    v: Callable
    a: Callable

    @classmethod
    def from_samples(cls, t, x) -> "Trajectory":
        """C^2 cubic-spline trajectory through sampled positions."""
        spline = CubicSpline(np.asarray(t, float), np.asarray(x, float))
        return cls(spline, spline.derivative(1), spline.derivative(2))


def free_trajectory(x0: float = 0.0, v: float = 1.0) -> Trajectory:
    return Trajectory(
        lambda t: x0 + v * np.asarray(t, float),
        lambda t: np.full_like(np.asarray(t, float), v),
        lambda t: np.zeros_like(np.asarray(t, float)),
    )


def harmonic_trajectory(amplitude: float, omega: float, phase: float = 0.0) -> Trajectory:
    """x = A cos(omega t + phase)."""
    return Trajectory(
        lambda t: amplitude * np.cos(omega * np.asarray(t) + phase),
        lambda t: -amplitude * omega * np.sin(omega * np.asarray(t) + phase),
        lambda t: -amplitude * omega**2 * np.cos(omega * np.asarray(t) + phase),
    )


def uniform_force_trajectory(accel: float, x0: float = 0.0, v0: float = 0.0) -> Trajectory:
    return Trajectory(
        lambda t: x0 + v0 * np.asarray(t) + 0.5 * accel * np.asarray(t) ** 2,
        lambda t: v0 + accel * np.asarray(t, float),
        lambda t: np.full_like(np.asarray(t, float), accel),
    )


@dataclass(frozen=True)
class EndpointBC:
    kind: str  # "position_fixed" | "velocity_fixed"
    value: float | None = None

    def __post_init__(self):
        if self.kind not in ("position_fixed", "velocity_fixed"):
            raise ScenarioError(f"unknown endpoint constraint {self.kind!r}")


POSITION_FIXED = EndpointBC("position_fixed")


def velocity_fixed(value: float) -> EndpointBC:
    return EndpointBC("velocity_fixed", float(value))


@dataclass(frozen=True)
class ParticleScenario:
    mass: float
    potential: Potential
    trajectory: Trajectory
    t0: float = 0.0
    t1: float = 1.0
    bc: tuple[EndpointBC, EndpointBC] = (POSITION_FIXED, POSITION_FIXED)

    def __post_init__(self):
        if not self.mass > 0:
            raise ScenarioError("mass must be positive")
        if not self.t1 > self.t0:
            raise ScenarioError("need t1 > t0")

    def el_residual(self, t):
        """-V'(x) - m xddot along the trajectory."""
        tr = self.trajectory
        return -self.potential.deriv(tr.x(t)) - self.mass * tr.a(t)


@dataclass(frozen=True)
class ParticleVariation:
    delta: Callable
    d_delta: Callable
    breakpoints: tuple[float, ...] = ()


def bump_variation(center: float, width: float, amplitude: float = 1.0, power: int = 4) -> ParticleVariation:
    """amplitude * (1 - s^2)^power for |s| < 1, s = (t - center)/width."""

    def s_of(t):
        return (np.asarray(t, float) - center) / width

    def delta(t):
        s = s_of(t)
        return np.where(np.abs(s) < 1, amplitude * (1 - s * s) ** power, 0.0)

    def d_delta(t):
        s = s_of(t)
        return np.where(np.abs(s) < 1, amplitude * power * (1 - s * s) ** (power - 1) * (-2 * s) / width, 0.0)

    return ParticleVariation(delta, d_delta, (center - width, center + width))


def endpoint_variation(t0: float, t1: float, at: str = "end", value: float = 1.0) -> ParticleVariation:
    """Smoothstep: ``value`` at one endpoint, zero (with zero slope) at the other.

    The slope vanishes at both ends, so velocity constraints are untouched.
    """
    span = t1 - t0

    def u(t):
        s = (np.asarray(t, float) - t0) / span
        return s if at == "end" else 1 - s

    sign = 1.0 if at == "end" else -1.0
    return ParticleVariation(
        lambda t: value * u(t) ** 2 * (3 - 2 * u(t)),
        lambda t: sign * value * 6 * u(t) * (1 - u(t)) / span,
    )


def check_admissible(scenario: ParticleScenario, variation: ParticleVariation, atol: float = 1e-14):
    for end, bc in zip((scenario.t0, scenario.t1), scenario.bc):
        if bc.kind == "position_fixed" and abs(float(variation.delta(end))) > atol:
            raise InadmissibleVariationError(f"variation moves the fixed position at t={end}")
        if bc.kind == "velocity_fixed" and abs(float(variation.d_delta(end))) > atol:
            raise InadmissibleVariationError(f"variation changes the fixed velocity at t={end}")


def random_variations(scenario: ParticleScenario, count: int = 20, seed: int = 0) -> list[ParticleVariation]:
    """Seeded admissible family: interior bumps plus endpoint pieces where x is free."""
    rng = np.random.default_rng(seed)
    t0, t1 = scenario.t0, scenario.t1
    span = t1 - t0
    free_ends = [at for at, bc in zip(("start", "end"), scenario.bc) if bc.kind == "velocity_fixed"]
    out = []
    for _ in range(count):
        width = span * rng.uniform(0.05, 0.3)
        center = rng.uniform(t0 + width, t1 - width)
        parts = [bump_variation(center, width, rng.normal(), power=int(rng.integers(3, 6)))]
        for at in free_ends:
            parts.append(endpoint_variation(t0, t1, at, rng.normal()))
        out.append(_sum_variations(parts))
    return out


def _sum_variations(parts: Sequence[ParticleVariation]) -> ParticleVariation:
    return ParticleVariation(
        lambda t: sum(p.delta(t) for p in parts),
        lambda t: sum(p.d_delta(t) for p in parts),
        tuple(sorted({b for p in parts for b in p.breakpoints})),
    )


def _quad(func, a, b, tol, points=()):
    pts = [p for p in points if a < p < b] or None
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, err = integrate.quad(func, a, b, epsabs=tol, epsrel=0.0, limit=400, points=pts)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(str(exc)) from exc
    return value


def particle_action(
    scenario: ParticleScenario, variation: ParticleVariation | None = None, eps: float = 0.0, tol: float = 1e-10
) -> float:
    """S = int (m xdot^2/2 - V(x)) dt along x + eps * delta."""
    tr, m, pot = scenario.trajectory, scenario.mass, scenario.potential

    def lagrangian(t):
        x, v = tr.x(t), tr.v(t)
        if variation is not None and eps:
            x = x + eps * variation.delta(t)
            v = v + eps * variation.d_delta(t)
        return float(0.5 * m * v * v - pot.value(x))

    points = variation.breakpoints if variation is not None else ()
    return _quad(lagrangian, scenario.t0, scenario.t1, tol, points)


@dataclass(frozen=True)
class FirstVariation:
    bulk: float
    boundary: float

    @property
    def total(self) -> float:
        return self.bulk + self.boundary


def particle_first_variation(scenario: ParticleScenario, variation: ParticleVariation, tol: float = 1e-10) -> FirstVariation:
    check_admissible(scenario, variation)
    bulk = _quad(
        lambda t: float(scenario.el_residual(t) * variation.delta(t)),
        scenario.t0,
        scenario.t1,
        tol,
        variation.breakpoints,
    )
    m, tr = scenario.mass, scenario.trajectory
    boundary = float(
        m * tr.v(scenario.t1) * variation.delta(scenario.t1) - m * tr.v(scenario.t0) * variation.delta(scenario.t0)
    )
    return FirstVariation(bulk, boundary)


def particle_action_slope(scenario: ParticleScenario, variation: ParticleVariation, eps: float, tol: float = 1e-13) -> float:
    """Central difference [S(eps) - S(-eps)] / (2 eps); error O(eps^2)."""
    return (particle_action(scenario, variation, eps, tol) - particle_action(scenario, variation, -eps, tol)) / (2 * eps)


# ---------------------------------------------------------------------------
# field


@dataclass(frozen=True)
class FieldVariation:
    value: Callable  # (t, r, theta, z) -> array
    gradient: Callable  # (t, r, theta, z) -> (..., 4): d_t, d_r, (1/r) d_theta, d_z


def constant_variation(value: float = 1.0) -> FieldVariation:
    def grad(t, r, theta, z):
        shape = np.broadcast(t, r, theta, z).shape
        return np.zeros(shape + (4,))

    return FieldVariation(lambda t, r, theta, z: np.full(np.broadcast(t, r, theta, z).shape, float(value)), grad)


def gaussian_variation(center: tuple[float, float, float, float], tau: float, sigma: float, amplitude: float = 1.0) -> FieldVariation:
    """Gaussian bump in (t, x, y, z) around ``center = (t, x, y, z)``."""
    tc, xc, yc, zc = center

    def parts(t, r, theta, z):
        x, y = r * np.cos(theta), r * np.sin(theta)
        dx, dy, dz, dt = x - xc, y - yc, np.asarray(z) - zc, np.asarray(t) - tc
        g = amplitude * np.exp(-0.5 * (dx * dx + dy * dy + dz * dz) / sigma**2 - 0.5 * dt * dt / tau**2)
        return g, dx, dy, dz, dt, theta

    def value(t, r, theta, z):
        return parts(t, r, theta, z)[0]

    def gradient(t, r, theta, z):
        g, dx, dy, dz, dt, th = parts(t, r, theta, z)
        gx, gy = -g * dx / sigma**2, -g * dy / sigma**2
        c, s = np.cos(th), np.sin(th)
        return np.stack([-g * dt / tau**2, c * gx + s * gy, -s * gx + c * gy, -g * dz / sigma**2], axis=-1)

    return FieldVariation(value, gradient)


@dataclass(frozen=True)
class Region4D:
    """4-volume between spacelike surfaces s0 < s1, inside r <= r_cut, z in z_range."""

    s0: Hypersurface
    s1: Hypersurface
    r_cut: float
    z_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if not self.r_cut > 0 or not self.z_range[1] > self.z_range[0]:
            raise ScenarioError("region needs positive radius and slab thickness")


@dataclass(frozen=True)
class ActionResult:
    value: float
    error_estimate: float
    tail_estimate: float


def _region_nodes(field, region, n_r, n_theta, n_z):
    breaks = [0.0, region.r_cut]
    if field.window is not None:
        breaks += [b for b in (field.window.radius, field.window.support) if 0 < b < region.r_cut]
    r, th, z, w = quadrature.cylinder(sorted(breaks), n_r, n_theta, region.z_range, n_z)
    c = field.constants.c
    t0 = np.asarray(region.s0.time_at(r, th, z), float)
    t1 = np.asarray(region.s1.time_at(r, th, z), float)
    check_spacelike(region.s0.gradient_at(r, th, z), c)
    check_spacelike(region.s1.gradient_at(r, th, z), c)
    if np.any(t1 <= t0):
        raise ScenarioError("final surface must lie strictly after the initial surface")
    return r, th, z, w, t0, t1


def _lagrangian_sum(field, region, n_r, n_theta, n_z, n_t, variation, eps, density=None):
    r, th, z, w, t0, t1 = _region_nodes(field, region, n_r, n_theta, n_z)
    x, wt = np.polynomial.legendre.leggauss(n_t)
    half = 0.5 * (t1 - t0)
    T = t0[:, None] + half[:, None] * (x[None, :] + 1.0)
    W = (w * half)[:, None] * wt[None, :]
    R, TH, Z = (np.broadcast_to(a[:, None], T.shape) for a in (r, th, z))
    if density is not None:
        return float(np.sum(W * density(T, R, TH, Z)))
    k = field.constants
    s = evaluate(field, T, R, TH, Z)
    phi, phi_t, grad = s.phi, s.d_t, s.grad
    if variation is not None and eps:
        d = variation.gradient(T, R, TH, Z)
        phi = phi + eps * variation.value(T, R, TH, Z)
        phi_t = phi_t + eps * d[..., 0]
        grad = grad + eps * d[..., 1:]
    lag = 0.5 * (phi_t**2 / k.c**2 - np.sum(grad**2, axis=-1) - k.mu**2 * phi**2)
    return float(np.sum(W * lag))


def _tail_estimate(field, region, n_theta):
    if field.window is None:
        return math.inf
    support = field.window.support
    if support <= region.r_cut:
        return 0.0
    outer = Region4D(region.s0, region.s1, support, region.z_range)
    k = field.constants

    def abs_lag(T, R, TH, Z):
        s = evaluate(field, T, R, TH, Z)
        val = 0.5 * np.abs(s.d_t**2 / k.c**2 - np.sum(s.grad**2, axis=-1) - k.mu**2 * s.phi**2)
        return np.where(R > region.r_cut, val, 0.0)

    return _lagrangian_sum(field, outer, 24, n_theta, 1, 8, None, 0.0, density=abs_lag)


def field_action(
    field: FieldState,
    region: Region4D,
    variation: FieldVariation | None = None,
    eps: float = 0.0,
    *,
    n_r: int = 32,
    n_theta: int = 32,
    n_z: int = 1,
    n_t: int = 24,
    tol: float | None = None,
    tail_tol: float | None = None,
) -> ActionResult:
    """S = int L dt d^3x over ``region`` for phi + eps * variation.

    The error estimate compares against a run with half the radial and time
    nodes.  The tail estimate is the integral of |L| beyond r_cut (zero for
    compactly windowed fields inside r_cut, infinite for unwindowed fields).
    """
    value = _lagrangian_sum(field, region, n_r, n_theta, n_z, n_t, variation, eps)
    coarse = _lagrangian_sum(field, region, max(n_r // 2, 2), n_theta, n_z, max(n_t // 2, 2), variation, eps)
    err = abs(value - coarse)
    if tol is not None and err > tol:
        raise QuadratureError(f"action quadrature not converged: estimate {err:.3g} > {tol:.3g}")
    tail = _tail_estimate(field, region, n_theta)
    if tail_tol is not None and tail > tail_tol:
        raise QuadratureError(f"tail estimate {tail:.3g} exceeds tolerance {tail_tol:.3g}")
    return ActionResult(value, err, tail)


@dataclass(frozen=True)
class BoundaryTerm:
    value: float
    max_abs_normal: float
    max_normalized: float  # max |d phi/d eta| / peak |phi_t|


def _peak_phi_t(field, t, r, theta, z) -> float:
    return max(float(np.max(np.abs(complex_amplitudes(field, t, r, theta, z).d_t))), 1e-300)


def field_boundary_term(field: FieldState, surface: Hypersurface, variation: FieldVariation, orientation: int = 1) -> BoundaryTerm:
    """(1/c^2) int (phi_t + c^2 grad T . grad phi) dphi d^3x over ``surface``.

    ``orientation=+1`` is the future-pointing normal (a final surface);
    pass -1 for an initial surface.
    """
    n = surface.nodes()
    c = field.constants.c
    check_spacelike(n.grad, c)
    flux = normal_flux(field, n.t, n.r, n.theta, n.z, n.grad)
    dphi = variation.value(n.t, n.r, n.theta, n.z)
    value = orientation * float(np.sum(n.weights * flux * dphi)) / c**2
    dn = normal_derivative(field, n.t, n.r, n.theta, n.z, n.grad)
    peak = _peak_phi_t(field, n.t, n.r, n.theta, n.z)
    max_abs = float(np.max(np.abs(dn)))
    return BoundaryTerm(value, max_abs, max_abs / peak)


def field_first_variation(
    field: FieldState,
    region: Region4D,
    variation: FieldVariation,
    *,
    n_r: int = 32,
    n_theta: int = 32,
    n_z: int = 1,
    n_t: int = 24,
    lateral_tol: float = 1e-9,
) -> FirstVariation:
    """Bulk (Euler-Lagrange) and boundary parts of dS for ``variation``.

    The variation must vanish on the lateral boundary (r = r_cut, z faces).
    """
    r, th, z, w, t0, t1 = _region_nodes(field, region, n_r, n_theta, n_z)
    _check_lateral(region, variation, r, th, z, t0, t1, lateral_tol)
    k = field.constants

    def residual_density(T, R, TH, Z):
        s = evaluate(field, T, R, TH, Z, second=True)
        kge = s.d_tt / k.c**2 - s.laplacian + k.mu**2 * s.phi
        return -kge * variation.value(T, R, TH, Z)

    bulk = _lagrangian_sum(field, region, n_r, n_theta, n_z, n_t, None, 0.0, density=residual_density)
    boundary = 0.0
    for surf, sign in ((region.s1, 1.0), (region.s0, -1.0)):
        ts = np.asarray(surf.time_at(r, th, z), float)
        grad = surf.gradient_at(r, th, z)
        flux = normal_flux(field, ts, r, th, z, grad)
        boundary += sign * float(np.sum(w * flux * variation.value(ts, r, th, z))) / k.c**2
    return FirstVariation(bulk, boundary)


def _check_lateral(region, variation, r, th, z, t0, t1, tol):
    ts = np.linspace(0, 1, 7)
    scale = max(float(np.max(np.abs(variation.value(t0, r, th, z)))), float(np.max(np.abs(variation.value(t1, r, th, z)))), 1.0)
    thetas = np.linspace(0, 2 * math.pi, 16, endpoint=False)
    zs = np.linspace(*region.z_range, 5)
    tmin, tmax = float(np.min(t0)), float(np.max(t1))
    T = tmin + (tmax - tmin) * ts
    TT, TH, ZZ = np.meshgrid(T, thetas, zs, indexing="ij")
    side = np.max(np.abs(variation.value(TT, region.r_cut, TH, ZZ)))
    rr = np.linspace(0, region.r_cut, 9)
    TT, RR, TH = np.meshgrid(T, rr, thetas, indexing="ij")
    faces = max(np.max(np.abs(variation.value(TT, RR, TH, zf))) for zf in region.z_range)
    if max(side, faces) > tol * scale:
        raise InadmissibleVariationError("field variation does not vanish on the lateral boundary")


@dataclass(frozen=True)
class BoundaryClassification:
    kind: str  # coordinate_bc | natural_ncbc | non_extremizing_ncbc
    max_normalized: float
    witness_delta_s: float  # dS for dphi proportional to d phi/d eta on the surface


COORDINATE_BC = "coordinate_bc"
NATURAL_NCBC = "natural_ncbc"
NON_EXTREMIZING_NCBC = "non_extremizing_ncbc"


def classify_boundary(field: FieldState, surface: Hypersurface, bc_spec: str, tol_natural: float = 1e-6) -> BoundaryClassification:
    """Classify a boundary condition on ``surface``.

    ``bc_spec`` is "phi_fixed" (coordinate constraint) or "derivative"
    (a constraint on phi_t, possibly combined with phi).  ``tol_natural`` is
    relative to the peak |phi_t| on the surface.
    """
    if bc_spec not in ("phi_fixed", "derivative"):
        raise ScenarioError(f"unknown boundary constraint {bc_spec!r}")
    n = surface.nodes()
    c = field.constants.c
    check_spacelike(n.grad, c)
    peak = _peak_phi_t(field, n.t, n.r, n.theta, n.z)
    dn = normal_derivative(field, n.t, n.r, n.theta, n.z, n.grad)
    flux = normal_flux(field, n.t, n.r, n.theta, n.z, n.grad)
    worst = float(np.max(np.abs(dn))) / peak
    witness = float(np.sum(n.weights * flux * flux)) / (peak * c**2)
    if bc_spec == "phi_fixed":
        return BoundaryClassification(COORDINATE_BC, worst, 0.0)
    kind = NATURAL_NCBC if worst < tol_natural else NON_EXTREMIZING_NCBC
    return BoundaryClassification(kind, worst, witness)
