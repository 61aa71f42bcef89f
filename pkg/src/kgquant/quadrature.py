"""Tensor-product quadrature rules on cylinders."""
from __future__ import annotations

import math

import numpy as np


def gauss_legendre(a: float, b: float, n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def panels(breaks, n: int):
    """Gauss-Legendre with ``n`` nodes on each interval between sorted ``breaks``."""
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b > a:
            x, w = gauss_legendre(a, b, n)
            xs.append(x)
            ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def angular(n: int, start: float = 0.0):
    """Midpoint rule on [start, start + 2 pi); spectrally accurate for periodic integrands."""
    step = 2 * math.pi / n
    return start + step * (np.arange(n) + 0.5), np.full(n, step)


def slab(z_range, n: int):
    z0, z1 = z_range
    if n == 1:
        return np.array([0.5 * (z0 + z1)]), np.array([z1 - z0])
    return gauss_legendre(z0, z1, n)


def cylinder(r_breaks, n_r: int, n_theta: int, z_range=(0.0, 1.0), n_z: int = 1, theta0: float = 0.0):
    """Flattened nodes (r, theta, z) and volume weights r dr dtheta dz."""
    r, wr = panels(list(r_breaks), n_r)
    th, wt = angular(n_theta, theta0)
    z, wz = slab(z_range, n_z)
    R, T, Z = (a.ravel() for a in np.meshgrid(r, th, z, indexing="ij"))
    W = (np.einsum("i,j,k->ijk", wr * r, wt, wz)).ravel()
    return R, T, Z, W
