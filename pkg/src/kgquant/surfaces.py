"""Spacelike hypersurfaces t = T(r, theta, z) and their normal derivatives.

A surface exposes ``time_at``/``gradient_at`` and a quadrature node set.
The gradient is cylindrical: (dT/dr, (1/r) dT/dtheta, dT/dz).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import quadrature
from .errors import NonSpacelikeError
from .field import FieldState, evaluate


@dataclass(frozen=True)
class SurfaceNodes:
    t: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    z: np.ndarray
    grad: np.ndarray  # (N, 3)
    weights: np.ndarray  # coordinate volume r dr dtheta dz


class Hypersurface:
    r_range: tuple[float, float]
    z_range: tuple[float, float]

    def time_at(self, r, theta, z):
        raise NotImplementedError

    def gradient_at(self, r, theta, z):
        raise NotImplementedError

    def nodes(self) -> SurfaceNodes:
        raise NotImplementedError

    @property
    def volume(self) -> float:
        (r0, r1), (z0, z1) = self.r_range, self.z_range
        return math.pi * (r1**2 - r0**2) * (z1 - z0)


@dataclass(frozen=True)
class FlatSurface(Hypersurface):
    t: float
    r_range: tuple[float, float] = (0.0, 1.0)
    z_range: tuple[float, float] = (0.0, 1.0)
    n_r: int = 32
    n_theta: int = 64
    n_z: int = 1

    def time_at(self, r, theta, z):
        return np.full(np.broadcast(r, theta, z).shape, float(self.t))

    def gradient_at(self, r, theta, z):
        return np.zeros(np.broadcast(r, theta, z).shape + (3,))

    def nodes(self) -> SurfaceNodes:
        r, th, z, w = quadrature.cylinder(self.r_range, self.n_r, self.n_theta, self.z_range, self.n_z)
        return SurfaceNodes(self.time_at(r, th, z), r, th, z, self.gradient_at(r, th, z), w)


@dataclass(frozen=True)
class FunctionSurface(Hypersurface):
    """Surface from analytic callables ``time_fn(r, th, z)`` and ``grad_fn(r, th, z)``.

    Angular nodes cover [theta0, theta0 + 2 pi) with the midpoint rule, so a
    seam at theta0 never sits on a node.
    """

    time_fn: Callable
    grad_fn: Callable
    r_range: tuple[float, float] = (0.0, 1.0)
    z_range: tuple[float, float] = (0.0, 1.0)
    theta0: float = 0.0
    n_r: int = 32
    n_theta: int = 64
    n_z: int = 1

    def time_at(self, r, theta, z):
        return np.asarray(self.time_fn(r, theta, z), dtype=float)

    def gradient_at(self, r, theta, z):
        return np.asarray(self.grad_fn(r, theta, z), dtype=float)

    def nodes(self) -> SurfaceNodes:
        r, th, z, w = quadrature.cylinder(
            self.r_range, self.n_r, self.n_theta, self.z_range, self.n_z, theta0=self.theta0
        )
        return SurfaceNodes(self.time_at(r, th, z), r, th, z, self.gradient_at(r, th, z), w)


def check_spacelike(grad: np.ndarray, c: float) -> float:
    """Return the largest c*|grad T|; raise if it reaches 1."""
    tilt = float(np.max(c * np.linalg.norm(grad, axis=-1))) if np.size(grad) else 0.0
    if tilt >= 1.0:
        raise NonSpacelikeError(f"surface is not spacelike: max c|grad T| = {tilt:.3g}")
    return tilt


def normal_flux(field: FieldState, t, r, theta, z, grad) -> np.ndarray:
    """phi_t + c^2 grad(T).grad(phi): the normal derivative times the volume factor."""
    s = evaluate(field, t, r, theta, z)
    c2 = field.constants.c**2
    return s.d_t + c2 * np.sum(np.asarray(grad) * s.grad, axis=-1)


def normal_derivative(field: FieldState, t, r, theta, z, grad) -> np.ndarray:
    """Derivative along the future unit normal, in time-derivative units.

    On a flat surface this is exactly d(phi)/dt.
    """
    c = field.constants.c
    check_spacelike(np.asarray(grad), c)
    lapse = np.sqrt(1.0 - c**2 * np.sum(np.asarray(grad) ** 2, axis=-1))
    return normal_flux(field, t, r, theta, z, grad) / lapse
