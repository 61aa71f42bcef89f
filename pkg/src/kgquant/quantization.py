"""Seam quantization, the Bohr-Sommerfeld-like loop rule and the L_z chain.

The seam duration Delta t of a natural surface is compared with multiples of
pi/omega0; m * loop integral of v . dl is the same number in units of h/2;
and for a field carrying total energy E_tot the angular momentum should sit
near (n/2) hbar E_tot/(m c^2).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field as dc_field
from typing import Any

import numpy as np

from . import quadrature
from .errors import QuadratureError, ScenarioError
from .field import FieldState, PhysicalConstants, evaluate
from .hypersurface import (
    NaturalSurfaceMesh,
    default_loop_radius,
    seam_uniformity,
    trace_loop,
    trace_surface,
)
from .stress_energy import stress_energy_at
from .surfaces import FlatSurface


def quantize_seam(delta_t: float, constants: PhysicalConstants) -> tuple[int, float]:
    """Nearest multiple of pi/omega0 (ties to even) and the distance from it."""
    if not math.isfinite(delta_t):
        raise ValueError("seam duration must be finite")
    x = delta_t * constants.omega0 / math.pi
    n = int(round(x))
    return n, abs(x - n)


def quantized_tolerance(alpha: float) -> float:
    return max(5 * alpha**2, 0.01)


@dataclass(frozen=True)
class LoopRule:
    delta_t: float
    bs_lhs: float  # m * loop integral of v . dl
    bs_ratio: float  # bs_lhs / (h/2)


def bohr_sommerfeld_check(field: FieldState, loop: float | None = None, constants: PhysicalConstants | None = None, **loop_kw) -> LoopRule:
    """m * loop integral of v . dl on the circle of radius ``loop``, in units of h/2.

    Uses the seam quadrature, so bs_ratio equals delta_t*omega0/pi up to
    rounding; the identity is asserted.
    """
    k = constants or field.constants
    if loop is None:
        loop = default_loop_radius(field)
    delta_t = trace_loop(field, loop, **loop_kw) + 0.0
    bs_lhs = k.m * k.c**2 * delta_t
    bs_ratio = bs_lhs / (k.h / 2)
    direct = delta_t * k.omega0 / math.pi
    assert abs(bs_ratio - direct) <= 1e-12 * max(abs(direct), 1.0), (bs_ratio, direct)
    return LoopRule(delta_t, bs_lhs, bs_ratio)


# ---------------------------------------------------------------------------
# surface integrals


@dataclass(frozen=True)
class SurfaceIntegral:
    value: float
    error_estimate: float  # difference against a half-resolution radial rule
    tail_estimate: float  # inf when the field has no window and a cutoff was imposed
    tilt_correction: float = 0.0  # flux correction on tilted surfaces, included in value


def _radial_breaks(field: FieldState, r_max: float | None):
    if field.window is not None:
        w = field.window
        outer = w.support if r_max is None else min(r_max, w.support)
        breaks = [0.0] + [b for b in (w.radius,) if b < outer] + [outer]
        tail = 0.0 if r_max is None or r_max >= w.support else math.inf
        return breaks, tail
    if r_max is None:
        raise QuadratureError("field has no radial window; give r_max (the tail is not bounded)")
    rotating = any(m.k_r > 0 for m in field.modes)
    return [0.0, float(r_max)], (math.inf if rotating else 0.0)


def _integrate(field, density, *, t, r_max, n_r, n_theta, z_range, n_z, tail_tol):
    breaks, tail = _radial_breaks(field, r_max)
    if tail_tol is not None and tail > tail_tol:
        raise QuadratureError(f"tail bound {tail} exceeds tolerance {tail_tol}")
    # split each panel at the first few Bessel oscillations for accuracy
    kmax = max((m.k_r for m in field.modes), default=0.0)
    if kmax > 0:
        extra = np.arange(1, int(breaks[-1] * kmax / math.pi) + 1) * math.pi / kmax
        breaks = sorted(set(breaks) | {float(b) for b in extra if 0 < b < breaks[-1]})
    n_theta = max(n_theta, 4 * field.max_abs_l + 8)

    def rule(n):
        R, TH, Z, W = quadrature.cylinder(breaks, n, n_theta, z_range, n_z)
        return float(np.sum(W * density(t, R, TH, Z)))

    fine = rule(n_r)
    coarse = rule(max(n_r // 2, 2))
    return fine, abs(fine - coarse), tail


def _energy_density(field, averaging):
    def density(t, R, TH, Z):
        return stress_energy_at(field, t, R, TH, Z, averaging).t00

    return density


def _lz_density(field, averaging):
    def density(t, R, TH, Z):
        return R * stress_energy_at(field, t, R, TH, Z, averaging).p_theta

    return density


def _on_mesh(field, mesh: NaturalSurfaceMesh, which):
    """Charge through the mesh patch t = T(x): integral of (rho - J . grad T).

    Uses the instantaneous conserved currents at the surface times:
    energy rho = T00, J = -c^2 phi_t grad phi; angular momentum
    rho = -phi_t d_theta phi, J = c^2 grad(phi) d_theta(phi) - r e_theta L'
    with L' = (omega0^2 phi^2 - phi_t^2 + c^2 |grad phi|^2)/2.
    """
    n = mesh.nodes()
    s = evaluate(field, n.t, n.r, n.theta, n.z)
    k = field.constants
    c2 = k.c**2
    grad = s.grad
    d_theta = n.r * grad[..., 1]
    if which == "energy":
        rho = 0.5 * (s.d_t**2 + c2 * np.sum(grad**2, axis=-1) + k.omega0**2 * s.phi**2)
        flux = -c2 * s.d_t[..., None] * grad
    else:
        rho = -s.d_t * d_theta
        lag = 0.5 * (k.omega0**2 * s.phi**2 - s.d_t**2 + c2 * np.sum(grad**2, axis=-1))
        flux = c2 * grad * d_theta[..., None]
        flux[..., 1] -= n.r * lag
    tilt = -np.sum(flux * n.grad, axis=-1)
    value = float(np.sum(n.weights * rho))
    correction = float(np.sum(n.weights * tilt))
    return SurfaceIntegral(value + correction, 0.0, math.nan, correction)


def total_energy(
    field: FieldState,
    surface=None,
    averaging: str = "cycle_averaged",
    *,
    r_max: float | None = None,
    n_r: int = 24,
    n_theta: int = 32,
    z_range=(0.0, 1.0),
    n_z: int = 1,
    tail_tol: float | None = None,
) -> SurfaceIntegral:
    """Field energy on a flat slice (default t = 0) or over a mesh patch.

    Per unit length along z with the default slab.
    """
    if isinstance(surface, NaturalSurfaceMesh):
        return _on_mesh(field, surface, "energy")
    t = surface.t if isinstance(surface, FlatSurface) else 0.0 if surface is None else float(surface)
    value, err, tail = _integrate(
        field, _energy_density(field, averaging), t=t, r_max=r_max, n_r=n_r, n_theta=n_theta, z_range=z_range, n_z=n_z, tail_tol=tail_tol
    )
    return SurfaceIntegral(value, err, tail)


def angular_momentum(
    field: FieldState,
    surface=None,
    averaging: str = "cycle_averaged",
    *,
    r_max: float | None = None,
    n_r: int = 24,
    n_theta: int = 32,
    z_range=(0.0, 1.0),
    n_z: int = 1,
    tail_tol: float | None = None,
) -> SurfaceIntegral:
    """L_z = integral of r p_theta; same quadrature as ``total_energy``."""
    if isinstance(surface, NaturalSurfaceMesh):
        return _on_mesh(field, surface, "lz")
    t = surface.t if isinstance(surface, FlatSurface) else 0.0 if surface is None else float(surface)
    value, err, tail = _integrate(
        field, _lz_density(field, averaging), t=t, r_max=r_max, n_r=n_r, n_theta=n_theta, z_range=z_range, n_z=n_z, tail_tol=tail_tol
    )
    return SurfaceIntegral(value, err, tail)


def normalize_energy(field: FieldState, target: float | None = None, **kw) -> FieldState:
    """Rescale amplitudes so that the total energy equals ``target`` (default m c^2)."""
    k = field.constants
    target = k.m * k.c**2 if target is None else float(target)
    e = total_energy(field, **kw).value
    if not e > 0:
        raise ScenarioError("cannot normalize a field with zero energy")
    return field.scaled(math.sqrt(target / e))


# ---------------------------------------------------------------------------
# report

REPORT_KEYS = (
    "delta_t",
    "n_est",
    "n_residual",
    "bs_lhs",
    "bs_ratio",
    "L_z",
    "E_tot",
    "L_z_predicted",
    "spread_bound",
    "flags",
)


@dataclass
class QuantizationReport:
    delta_t: float | None
    n_est: int | None
    n_residual: float | None
    bs_lhs: float | None
    bs_ratio: float | None
    L_z: float
    E_tot: float
    L_z_predicted: float | None
    spread_bound: float | None
    flags: dict[str, bool]
    extras: dict[str, Any] = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        out = {k: d[k] for k in REPORT_KEYS}
        out["flags"] = {k: bool(self.flags[k]) for k in ("quantized", "no_natural_surface", "relativistic")}
        out["extras"] = {k: _plain(v) for k, v in sorted(self.extras.items())}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False, allow_nan=True)


def _plain(v):
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.generic):
        return v.item()
    return v


def lz_chain_check(
    field: FieldState,
    mesh: NaturalSurfaceMesh | None = None,
    constants: PhysicalConstants | None = None,
    *,
    averaging: str = "cycle_averaged",
    tol_seam: float | None = None,
    r_max: float | None = None,
    n_r: int = 24,
    n_theta: int = 32,
) -> QuantizationReport:
    """Assemble the full report: seam -> n -> loop rule -> L_z against (n/2) hbar E/(m c^2).

    Failures are flags, never exceptions: a non-uniform seam or a flow that
    is not integrable sets no_natural_surface and no n is reported.
    """
    k = constants or field.constants
    if mesh is None:
        mesh = trace_surface(field, averaging=averaging)
    alpha = field.alpha
    seam = seam_uniformity(mesh, tol_seam)
    integrable = bool(mesh.diagnostics.get("integrable", True))
    natural = seam.is_uniform and integrable

    energy = total_energy(field, None, averaging, r_max=r_max, n_r=n_r, n_theta=n_theta)
    lz = angular_momentum(field, None, averaging, r_max=r_max, n_r=n_r, n_theta=n_theta)
    quad_err = max(energy.error_estimate, lz.error_estimate)
    extras: dict[str, Any] = {
        "alpha": alpha,
        "seam_spread": seam.spread,
        "seam_relative_spread": seam.relative_spread,
        "seam_mean": seam.mean_jump,
        "path_residual": mesh.diagnostics.get("path_residual"),
        "quadrature_error": quad_err,
        "tail_estimate": max(energy.tail_estimate, lz.tail_estimate),
    }
    flags = {"quantized": False, "no_natural_surface": not natural, "relativistic": field.relativistic}
    if not natural:
        return QuantizationReport(None, None, None, None, None, lz.value, energy.value, None, None, flags, extras)

    z0 = float(mesh.seed[3])
    rule = bohr_sommerfeld_check(field, default_loop_radius(field), k, z=z0, averaging=averaging)
    n_est, n_residual = quantize_seam(rule.delta_t, k)
    predicted = 0.5 * n_est * k.hbar * energy.value / (k.m * k.c**2)
    spread_bound = alpha**2 * n_est**2 * k.hbar
    closure_tol = max(spread_bound, quad_err)
    flags["quantized"] = bool(n_residual < quantized_tolerance(alpha))
    extras.update(
        lz_error=abs(lz.value - predicted),
        closure_tolerance=closure_tol,
        closure_ok=bool(abs(lz.value - predicted) <= closure_tol),
        lz_ratio=lz.value * k.m * k.c**2 / (energy.value * k.hbar) if energy.value else 0.0,
    )
    return QuantizationReport(
        rule.delta_t, n_est, n_residual, rule.bs_lhs, rule.bs_ratio, lz.value, energy.value, predicted, spread_bound, flags, extras
    )
