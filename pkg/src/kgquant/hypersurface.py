"""Natural hypersurfaces traced from the local energy flow.

A natural surface advances in time by dt = v . dl / c**2 along any path lying
in it.  Around a rotating field the surface winds like a corkscrew and fails to
close: after one turn it has advanced by the seam duration

    Delta t = (1/c**2) * loop integral of v . dl.

Failures (non-uniform seams, flows that are not integrable) are returned as
diagnostics rather than raised.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Any, Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import RegularGridInterpolator

from .errors import QuadratureError, ScenarioError
from .field import FieldState, bessel_peak_radii, bessel_peak_radius, complex_amplitudes, evaluate, find_crest, fingerprint
from .stress_energy import local_group_velocity, stress_energy_at
from .surfaces import Hypersurface, SurfaceNodes, check_spacelike, normal_derivative

# ---------------------------------------------------------------------------
# velocity sources


class FieldFlow:
    """Local group velocity of a field as a callable (t, r, theta, z) -> (..., 3)."""

    def __init__(self, field: FieldState, averaging: str = "cycle_averaged", convention: str = "printed"):
        self.field = field
        self.averaging = averaging
        self.convention = convention
        self.c = field.constants.c

    def __call__(self, t, r, theta, z):
        sample = stress_energy_at(self.field, t, r, theta, z, self.averaging, convention=self.convention)
        return local_group_velocity(sample)


@dataclass(frozen=True)
class VortexFlow:
    """Synthetic curl-free flow v_theta = kappa / r."""

    kappa: float
    c: float = 1.0

    def __call__(self, t, r, theta, z):
        r = np.asarray(r, float)
        shape = np.broadcast(t, r, theta, z).shape
        out = np.zeros(shape + (3,))
        out[..., 1] = self.kappa / np.broadcast_to(r, shape)
        return out


def as_flow(source, averaging: str = "cycle_averaged", convention: str = "printed"):
    if isinstance(source, FieldState):
        return FieldFlow(source, averaging, convention)
    if callable(source) and hasattr(source, "c"):
        return source
    raise TypeError("velocity source must be a FieldState or a flow with a 'c' attribute")


def _quad(func, a, b, tol):
    value, err, *rest = integrate.quad(func, a, b, epsabs=tol, epsrel=tol, limit=400, full_output=1)
    if rest and len(rest) > 1:
        raise QuadratureError(f"line integral did not converge: {rest[1]}")
    return value


# ---------------------------------------------------------------------------
# loops and open paths


def trace_loop(
    source,
    r: float,
    z: float = 0.0,
    t_start: float = 0.0,
    *,
    averaging: str = "cycle_averaged",
    convention: str = "printed",
    theta_start: float = 0.0,
    turns: int = 1,
    orientation: int = 1,
    follow_surface: bool = False,
    tol: float = 1e-12,
) -> float:
    """Seam duration (1/c^2) * loop integral of v . dl on the circle of radius ``r``.

    Counterclockwise for ``orientation=+1``.  By default v is taken on the
    slice t = t_start; ``follow_surface`` instead lets the time advance along
    the loop (relevant only for time-dependent flows).
    """
    flow = as_flow(source, averaging, convention)
    c2 = flow.c**2
    if orientation not in (1, -1):
        raise ValueError("orientation must be +1 or -1")
    span = orientation * 2 * math.pi * turns

    def rate(t, s):
        theta = theta_start + s
        return orientation * r * float(flow(t, r, theta, z)[..., 1]) / c2

    if follow_surface:
        sol = integrate.solve_ivp(
            lambda s, y: [rate(t_start + y[0], orientation * s)],
            (0.0, abs(span)),
            [0.0],
            rtol=tol,
            atol=tol,
            method="DOP853",
        )
        if not sol.success:
            raise QuadratureError(sol.message)
        return float(sol.y[0, -1])
    return _quad(lambda s: rate(t_start, orientation * s), 0.0, abs(span), tol)


def time_advance(
    source,
    path: Callable,
    dpath: Callable,
    t: float = 0.0,
    *,
    averaging: str = "cycle_averaged",
    convention: str = "printed",
    tol: float = 1e-12,
) -> float:
    """(1/c^2) * integral of v . dx along a Cartesian path x(s), s in [0, 1]."""
    flow = as_flow(source, averaging, convention)

    def integrand(s):
        x, y, z = path(s)
        dx, dy, dz = dpath(s)
        r, th = math.hypot(x, y), math.atan2(y, x)
        vr, vth, vz = flow(t, r, th, z)
        vx = vr * math.cos(th) - vth * math.sin(th)
        vy = vr * math.sin(th) + vth * math.cos(th)
        return float(vx * dx + vy * dy + vz * dz)

    return _quad(integrand, 0.0, 1.0, tol) / flow.c**2


# ---------------------------------------------------------------------------
# surfaces


@dataclass(frozen=True)
class SurfaceDomain:
    r: tuple[float, ...]
    z: tuple[float, ...] = (0.0,)
    n_theta: int = 64

    def __post_init__(self):
        if len(self.r) < 3:
            raise ScenarioError("surface domain needs at least 3 radii")
        if min(self.r) <= 0:
            raise ScenarioError("surface domain must avoid the axis")
        if self.n_theta < 4 or self.n_theta % 2:
            raise ScenarioError("n_theta must be an even number >= 4")


def default_domain(field: FieldState, n_r: int = 9, n_theta: int = 64, z=(0.0,), span=(0.75, 1.25)) -> SurfaceDomain:
    """Radii around the first Bessel maxima of the rotating modes.

    A single mode gets a band around its peak; a superposition gets a band
    reaching from the innermost to the outermost peak, so that the radius
    where the dominant mode changes is covered.
    """
    peaks = bessel_peak_radii(field)
    if not peaks:
        radii = np.linspace(1.0, 10.0, n_r) / field.constants.mu
    else:
        lo, hi = span[0] * peaks[0], span[1] * peaks[-1]
        n = n_r if hi / lo < 2 else max(n_r, 2 * n_r - 1)
        radii = np.linspace(lo, hi, n)
    return SurfaceDomain(tuple(float(r) for r in radii), tuple(float(v) for v in z), n_theta)


def default_loop_radius(field: FieldState) -> float:
    peak = bessel_peak_radius(field)
    return peak if peak is not None else 5.0 / field.constants.mu


def default_seed(field: FieldState, domain: SurfaceDomain, t_guess: float = 0.0, theta: float = 0.0):
    r = float(np.median(domain.r))
    z = float(domain.z[0])
    return (find_crest(field, r, theta, z, t_guess), r, theta, z)


@dataclass(frozen=True, eq=False)
class NaturalSurfaceMesh(Hypersurface):
    r: np.ndarray  # (n_r,)
    theta: np.ndarray  # (n_theta + 1,), seed angle to seed angle + 2 pi
    z: np.ndarray  # (n_z,)
    t_of_x: np.ndarray  # (n_r, n_theta + 1, n_z)
    seam_theta: float
    seam_jump: np.ndarray  # (n_r, n_z)
    slope_field: np.ndarray | None  # (n_r, n_theta + 1, n_z, 3): v / c^2 at nodes
    seed: tuple[float, float, float, float]
    c: float = 1.0
    diagnostics: dict = dc_field(default_factory=dict)
    metadata: dict = dc_field(default_factory=dict)

    @property
    def r_range(self):
        return (float(self.r[0]), float(self.r[-1]))

    @property
    def z_range(self):
        if len(self.z) == 1:
            return (float(self.z[0]) - 0.5, float(self.z[0]) + 0.5)
        return (float(self.z[0]), float(self.z[-1]))

    @property
    def shape(self):
        return self.t_of_x.shape

    def gradient(self) -> np.ndarray:
        """Cylindrical gradient of t_of_x from second-order mesh differences."""
        n_r, n_th, n_z = self.t_of_x.shape
        if n_r < 3 or n_th < 3:
            raise ScenarioError("degenerate mesh: need at least 3 nodes in r and theta")
        d_r = np.gradient(self.t_of_x, self.r, axis=0, edge_order=2)
        d_th = np.gradient(self.t_of_x, self.theta, axis=1, edge_order=2) / self.r[:, None, None]
        if n_z >= 3:
            d_z = np.gradient(self.t_of_x, self.z, axis=2, edge_order=2)
        elif self.slope_field is not None:
            d_z = self.slope_field[..., 2]
        else:
            d_z = np.zeros_like(self.t_of_x)
        return np.stack([d_r, d_th, d_z], axis=-1)

    def _wrap(self, theta):
        return self.seam_theta + np.mod(np.asarray(theta, float) - self.seam_theta, 2 * math.pi)

    def _interp(self, values, r, theta, z):
        th = self._wrap(theta)
        if len(self.z) == 1:
            grid = (self.r, self.theta)
            pts = np.stack(np.broadcast_arrays(r, th), axis=-1)
            vals = values[:, :, 0]
        else:
            grid = (self.r, self.theta, self.z)
            pts = np.stack(np.broadcast_arrays(r, th, z), axis=-1)
            vals = values
        out = RegularGridInterpolator(grid, vals, bounds_error=False, fill_value=None)(pts.reshape(-1, pts.shape[-1]))
        return out.reshape(pts.shape[:-1])

    def time_at(self, r, theta, z):
        return self._interp(self.t_of_x, r, theta, z)

    def gradient_at(self, r, theta, z):
        g = self.gradient()
        return np.stack([self._interp(g[..., i], r, theta, z) for i in range(3)], axis=-1)

    def nodes(self) -> SurfaceNodes:
        """Mesh nodes with trapezoid weights (r dr dtheta dz)."""
        wr = _trapezoid_weights(self.r) * self.r
        wt = _trapezoid_weights(self.theta)
        wz = np.ones(1) if len(self.z) == 1 else _trapezoid_weights(self.z)
        R, TH, Z = np.meshgrid(self.r, self.theta, self.z, indexing="ij")
        W = np.einsum("i,j,k->ijk", wr, wt, wz)
        return SurfaceNodes(
            self.t_of_x.ravel(), R.ravel(), TH.ravel(), Z.ravel(), self.gradient().reshape(-1, 3), W.ravel()
        )


def _trapezoid_weights(x):
    x = np.asarray(x, float)
    w = np.zeros_like(x)
    dx = np.diff(x)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


def _march(rate, t0, nodes, substeps):
    """Midpoint (RK2) integration of dt/ds = rate(t, s) through ``nodes``."""
    t = np.asarray(t0, float)
    out = [t]
    for a, b in zip(nodes[:-1], nodes[1:]):
        h = (b - a) / substeps
        s = a
        for _ in range(substeps):
            k1 = rate(t, s)
            t = t + h * rate(t + 0.5 * h * k1, s + 0.5 * h)
            s = s + h
        out.append(t)
    return np.stack(out)


def _march_both_ways(rate, t0, start, grid, substeps):
    """Integrate from ``start`` to every value of sorted ``grid``; returns (len(grid), ...)."""
    grid = np.asarray(grid, float)
    result = np.empty((len(grid),) + np.shape(t0))
    up = np.nonzero(grid >= start)[0]
    down = np.nonzero(grid < start)[0][::-1]
    for idx in (up, down):
        if len(idx):
            nodes = np.concatenate([[start], grid[idx]])
            result[idx] = _march(rate, t0, nodes, substeps)[1:]
    return result


def _trace_paths(flow, seed, r, theta, z, substeps):
    """Surface times on the (r, theta, z) grid by two different path orders."""
    c2 = flow.c**2
    t_s, r_s, th_s, z_s = seed
    n_r, n_th, n_z = len(r), len(theta), len(z)

    # order A: radial on the seed ray, then axial, then around
    t_ray = _march_both_ways(lambda t, s: flow(t, s, th_s, z_s)[..., 0] / c2, np.array(t_s), r_s, r, substeps)
    t_rz = _march_both_ways(lambda t, s: flow(t, r, th_s, s)[..., 2] / c2, t_ray, z_s, z, substeps).T  # (n_r, n_z)
    R = np.repeat(r[:, None], n_z, axis=1)
    Z = np.repeat(z[None, :], n_r, axis=0)
    around = _march(lambda t, s: R * flow(t, R, s, Z)[..., 1] / c2, t_rz, theta, substeps)  # (n_th, n_r, n_z)
    path_a = np.transpose(around, (1, 0, 2))

    # order B: axial at the seed radius, around, then radial
    t_z = _march_both_ways(lambda t, s: flow(t, r_s, th_s, s)[..., 2] / c2, np.array(t_s), z_s, z, substeps)
    around_b = _march(lambda t, s: r_s * flow(t, r_s, s, z)[..., 1] / c2, t_z, theta, substeps)  # (n_th, n_z)
    TH = np.repeat(theta[:, None], n_z, axis=1)
    ZB = np.repeat(z[None, :], n_th, axis=0)
    radial = _march_both_ways(lambda t, s: flow(t, s, TH, ZB)[..., 0] / c2, around_b, r_s, r, substeps)
    return path_a, radial  # both (n_r, n_th, n_z)


def trace_surface(
    source,
    seed=None,
    domain: SurfaceDomain | None = None,
    averaging: str = "cycle_averaged",
    *,
    convention: str = "printed",
    substeps: int = 4,
    crest_tol: float = 1e-8,
    path_tol: float | None = None,
) -> NaturalSurfaceMesh:
    """Integrate the surface slope v/c^2 outward from ``seed = (t, r, theta, z)``.

    The seam sits at theta_seed + 2 pi.  Diagnostics carry the path-order
    residual (flows with vorticity are not exactly integrable), a Richardson
    error estimate for the midpoint integrator and, for fields, the largest
    normalized normal derivative on the mesh.
    """
    flow = as_flow(source, averaging, convention)
    field = source if isinstance(source, FieldState) else None
    if domain is None:
        if field is None:
            raise ScenarioError("a domain is required for synthetic flows")
        domain = default_domain(field)
    if seed is None:
        if field is None:
            raise ScenarioError("a seed is required for synthetic flows")
        seed = default_seed(field, domain)
    seed = tuple(float(v) for v in seed)
    t_s, r_s, th_s, z_s = seed
    if field is not None:
        amps = complex_amplitudes(field, t_s, r_s, th_s, z_s)
        if abs(float(amps.d_t.real)) > crest_tol * max(abs(complex(amps.d_t)), 1e-300):
            raise ScenarioError("seed point is not on a crest (d phi/dt != 0)")

    r = np.asarray(domain.r, float)
    z = np.asarray(domain.z, float)
    theta = th_s + np.linspace(0.0, 2 * math.pi, domain.n_theta + 1)

    t_a, t_b = _trace_paths(flow, seed, r, theta, z, substeps)
    t_fine, _ = _trace_paths(flow, seed, r, theta, z, 2 * substeps)
    richardson = float(np.max(np.abs(t_fine - t_a))) / 3.0
    t_grid = t_fine

    R, TH, Z = np.meshgrid(r, theta, z, indexing="ij")
    slope = flow(t_grid, R, TH, Z) / flow.c**2
    max_tilt = check_spacelike(slope, flow.c)

    seam_jump = t_grid[:, -1, :] - t_grid[:, 0, :]
    mean_jump = float(np.mean(seam_jump))
    w0 = field.constants.omega0 if field is not None else None
    unit = abs(mean_jump) if w0 is None else max(abs(mean_jump), math.pi / w0)
    unit = unit or 1.0
    path_residual = float(np.max(np.abs(t_a - t_b))) / unit
    alpha = field.alpha if field is not None else 0.0
    if path_tol is None:
        path_tol = max(5 * alpha**2, 1e-9)

    # adjacent jumps away from the seam, against the slope-implied bound
    dl = np.abs(np.diff(theta))[None, :, None] * r[:, None, None]
    step = np.abs(np.diff(t_grid, axis=1))
    bound = 1.5 * np.maximum(np.abs(slope[:, :-1, :, 1]), np.abs(slope[:, 1:, :, 1])) * dl + 1e-12 * unit
    diagnostics: dict[str, Any] = {
        "path_residual": path_residual,
        "path_tol": path_tol,
        "integrable": path_residual <= path_tol,
        "richardson_error": richardson,
        "max_tilt": max_tilt,
        "continuous": bool(np.all(step <= bound)),
    }
    metadata = {"averaging": averaging, "convention": convention, "alpha": alpha}
    if field is not None:
        metadata.update(
            scenario_hash=fingerprint(field),
            units={"c": field.constants.c, "hbar": field.constants.hbar, "m": field.constants.m},
        )
    mesh = NaturalSurfaceMesh(
        r=r,
        theta=theta,
        z=z,
        t_of_x=t_grid,
        seam_theta=float(th_s),
        seam_jump=seam_jump,
        slope_field=slope,
        seed=seed,
        c=flow.c,
        diagnostics=diagnostics,
        metadata=metadata,
    )
    if field is not None:
        diagnostics["max_normal_derivative"] = normal_derivative_profile(field, mesh).max_normalized
    return mesh


@dataclass(frozen=True)
class SeamReport:
    is_uniform: bool
    spread: float
    mean_jump: float
    relative_spread: float
    tolerance: float


def seam_uniformity(mesh: NaturalSurfaceMesh, tol_seam: float | None = None) -> SeamReport:
    """Is the seam duration the same at every radius?  Default tolerance 5 alpha^2."""
    if tol_seam is None:
        tol_seam = 5 * mesh.metadata.get("alpha", 0.0) ** 2
    jumps = np.asarray(mesh.seam_jump)
    spread = float(np.max(jumps) - np.min(jumps))
    mean = float(np.mean(jumps))
    floor = 1e-12 * float(np.max(np.abs(mesh.t_of_x - mesh.seed[0]))) if mesh.t_of_x.size else 0.0
    rel = spread / abs(mean) if mean else (0.0 if spread == 0 else math.inf)
    return SeamReport(spread <= tol_seam * abs(mean) + floor, spread, mean, rel, tol_seam)


@dataclass(frozen=True)
class NormalProfile:
    values: np.ndarray  # d phi / d eta at the surface nodes
    normalized: np.ndarray
    max_normalized: float
    scale: float  # peak |d phi/dt| over the nodes


def normal_derivative_profile(field: FieldState, surface: Hypersurface) -> NormalProfile:
    """Normal derivative of the instantaneous field at every node of ``surface``.

    Normalized by the peak of |d phi/dt| over a cycle at the same nodes.
    """
    n = surface.nodes()
    dn = normal_derivative(field, n.t, n.r, n.theta, n.z, n.grad)
    scale = max(float(np.max(np.abs(complex_amplitudes(field, n.t, n.r, n.theta, n.z).d_t))), 1e-300)
    shape = surface.t_of_x.shape if isinstance(surface, NaturalSurfaceMesh) else dn.shape
    values = dn.reshape(shape)
    normalized = np.abs(values) / scale
    return NormalProfile(values, normalized, float(np.max(normalized)), scale)


# ---------------------------------------------------------------------------
# export / import

CSV_COLUMNS = ("r", "theta", "z", "t_surface", "seam_flag")


def export_mesh(mesh: NaturalSurfaceMesh, path, fmt: str = "csv") -> Path:
    """Write ``mesh`` as CSV (grid rows) or JSON (full mesh with metadata header)."""
    path = Path(path)
    if fmt == "csv":
        n_th = len(mesh.theta)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for i, rv in enumerate(mesh.r):
                for j, tv in enumerate(mesh.theta):
                    for k, zv in enumerate(mesh.z):
                        writer.writerow(
                            [repr(float(rv)), repr(float(tv)), repr(float(zv)), repr(float(mesh.t_of_x[i, j, k])), int(j == n_th - 1)]
                        )
    elif fmt == "json":
        doc = {
            "metadata": dict(mesh.metadata, c=mesh.c, seam_theta=mesh.seam_theta, seed=list(mesh.seed)),
            "diagnostics": mesh.diagnostics,
            "r": mesh.r.tolist(),
            "theta": mesh.theta.tolist(),
            "z": mesh.z.tolist(),
            "t_of_x": mesh.t_of_x.tolist(),
            "seam_jump": mesh.seam_jump.tolist(),
            "slope_field": None if mesh.slope_field is None else mesh.slope_field.tolist(),
        }
        path.write_text(json.dumps(doc, indent=1, default=_jsonable) + "\n")
    else:
        raise ValueError(f"unknown mesh format {fmt!r}")
    return path


def _jsonable(value):
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"not serializable: {type(value)}")


def import_mesh(path) -> NaturalSurfaceMesh:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        meta = dict(doc["metadata"])
        c = meta.pop("c")
        seam_theta = meta.pop("seam_theta")
        seed = tuple(meta.pop("seed"))
        slope = doc.get("slope_field")
        return NaturalSurfaceMesh(
            r=np.array(doc["r"]),
            theta=np.array(doc["theta"]),
            z=np.array(doc["z"]),
            t_of_x=np.array(doc["t_of_x"]),
            seam_theta=seam_theta,
            seam_jump=np.array(doc["seam_jump"]),
            slope_field=None if slope is None else np.array(slope),
            seed=seed,
            c=c,
            diagnostics=doc.get("diagnostics", {}),
            metadata=meta,
        )
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    r = np.array(sorted({float(row["r"]) for row in rows}))
    th = np.array(sorted({float(row["theta"]) for row in rows}))
    z = np.array(sorted({float(row["z"]) for row in rows}))
    t = np.array([float(row["t_surface"]) for row in rows]).reshape(len(r), len(th), len(z))
    return NaturalSurfaceMesh(
        r=r,
        theta=th,
        z=z,
        t_of_x=t,
        seam_theta=float(th[0]),
        seam_jump=t[:, -1, :] - t[:, 0, :],
        slope_field=None,
        seed=(float(t[0, 0, 0]), float(r[0]), float(th[0]), float(z[0])),
    )
