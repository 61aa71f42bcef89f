"""Energy density, momentum density and local group velocity of a field.

Conventions (natural units make all of them coincide):

* ``t00 = 0.5 * (phi_t**2 + c**2 |grad phi|**2 + omega0**2 phi**2)``
* ``t0i = -phi_t * d_i phi``, the contravariant momentum density.  The
  covariant component ``phi_t * d_i phi`` has the opposite sign; using it would
  make the flow run against the wave crests.
* ``p_theta = t0i[theta]`` and ``v = c * t0i / t00`` ("printed") or
  ``v = c**2 * t0i / t00`` ("flux", a velocity in length/time for any c).

With these signs a mode ``cos(l*theta - omega*t)`` with l > 0 carries positive
angular momentum, positive ``v_theta`` and a positive seam duration.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import VacuumRegionError
from .field import FieldState, complex_amplitudes, evaluate

AVERAGING = ("instantaneous", "cycle_averaged")
CONVENTIONS = ("printed", "flux")

_warned_units = set()


@dataclass(frozen=True)
class StressEnergySample:
    t00: np.ndarray
    t0i: np.ndarray  # (..., 3): r, theta, z components
    p_theta: np.ndarray
    v: np.ndarray  # (..., 3); nan where t00 is below the vacuum floor
    averaging: str
    floor: float
    convention: str = "printed"
    c: float = 1.0

    @property
    def superluminal(self) -> np.ndarray:
        """Energy-flow speed above c (flagged, never clipped)."""
        speed = self.c * np.linalg.norm(self.t0i, axis=-1) / np.maximum(self.t00, 1e-300)
        return speed > 1.0 + 1e-9


def t00_scale(field: FieldState) -> float:
    """Upper bound on the peak energy density of ``field``."""
    k = field.constants
    amp = field.amplitude_scale
    w_max = float(np.max(field.omegas))
    k_max = max(m.wavenumber for m in field.modes)
    extra = 0.0
    if field.window is not None:
        extra = (math.pi / (2 * field.window.width)) ** 2
    return 0.5 * amp**2 * (w_max**2 + k.c**2 * (2 * k_max**2 + extra) + k.omega0**2)


def _check_convention(field: FieldState, convention: str):
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown velocity convention {convention!r}")
    if convention == "printed" and field.constants.c != 1.0 and field.constants not in _warned_units:
        _warned_units.add(field.constants)
        warnings.warn(
            "velocity convention 'printed' (v = c*T0i/T00) is not a velocity when c != 1; "
            "use convention='flux' for dimensionally consistent time advances",
            stacklevel=3,
        )


def _quadratic_terms(field, t, r, theta, z, averaging, method="analytic", n_quad=64):
    """Return phi_t^2, |grad|^2, phi^2 and phi_t * grad (3 comps), possibly cycle-averaged."""
    if averaging == "instantaneous":
        s = evaluate(field, t, r, theta, z)
        g = s.grad
        return s.d_t**2, np.sum(g**2, axis=-1), s.phi**2, s.d_t[..., None] * g
    if averaging != "cycle_averaged":
        raise ValueError(f"unknown averaging {averaging!r}")
    if method == "quadrature":
        # periodic trapezoid over one period 2 pi / omega0 at fixed position
        period = 2 * math.pi / field.constants.omega0
        acc = None
        for j in range(n_quad):
            terms = _quadratic_terms(field, np.asarray(t) + period * j / n_quad, r, theta, z, "instantaneous")
            acc = terms if acc is None else tuple(a + b for a, b in zip(acc, terms))
        return tuple(a / n_quad for a in acc)
    if method != "analytic":
        raise ValueError(f"unknown averaging method {method!r}")
    a = complex_amplitudes(field, t, r, theta, z)
    g = np.stack([a.d_r, a.d_theta, a.d_z], axis=-1)
    return (
        0.5 * np.abs(a.d_t) ** 2,
        0.5 * np.sum(np.abs(g) ** 2, axis=-1),
        0.5 * np.abs(a.phi) ** 2,
        0.5 * np.real(a.d_t[..., None] * np.conj(g)),
    )


def stress_energy_at(
    field: FieldState,
    t,
    r,
    theta,
    z=0.0,
    averaging: str = "cycle_averaged",
    *,
    convention: str = "printed",
    method: str = "analytic",
    floor: float | None = None,
) -> StressEnergySample:
    """Energy and momentum densities at one or many points.

    ``method='quadrature'`` replaces the analytic cycle average by a
    64-node average over one period 2 pi/omega0.
    """
    _check_convention(field, convention)
    k = field.constants
    dt2, grad2, phi2, dt_grad = _quadratic_terms(field, t, r, theta, z, averaging, method)
    t00 = 0.5 * (dt2 + k.c**2 * grad2 + k.omega0**2 * phi2)
    t0i = -dt_grad
    if floor is None:
        floor = 1e-12 * t00_scale(field)
    factor = k.c if convention == "printed" else k.c**2
    ok = t00 > floor
    safe = np.where(ok, t00, 1.0)
    v = np.where(ok[..., None], factor * t0i / safe[..., None], np.nan)
    return StressEnergySample(
        t00=t00,
        t0i=t0i,
        p_theta=t0i[..., 1],
        v=v,
        averaging=averaging,
        floor=floor,
        convention=convention,
        c=k.c,
    )


def local_group_velocity(sample: StressEnergySample) -> np.ndarray:
    """``v`` of the sample; raises VacuumRegionError if any point lies below the floor."""
    if np.any(sample.t00 <= sample.floor):
        raise VacuumRegionError(
            f"energy density below vacuum floor {sample.floor:.3g}; local group velocity undefined"
        )
    return sample.v


def momentum_density_theta(field: FieldState, t, r, theta, z=0.0, averaging: str = "cycle_averaged"):
    return stress_energy_at(field, t, r, theta, z, averaging).p_theta
