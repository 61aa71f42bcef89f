"""Exact cylindrical Klein-Gordon modes, their superpositions and envelopes.

A field is a finite sum of modes

    phi = A * J_|l|(k_r r) * cos(l*theta + k_z*z + axial_phase - omega*t + phase)

with omega**2 = c**2 (k_r**2 + k_z**2) + omega0**2, so every mode solves the
Klein-Gordon equation identically.  An optional smooth radial window localizes
the field for energy integrals; the windowed field is no longer an exact
solution and its residual is reported, not hidden.

All point arguments broadcast like numpy arrays: ``(t, r, theta, z)``.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import optimize, special

from .errors import ScenarioError

PRESETS = ("uniform_oscillator", "rotor_l", "mixed_l")

# below this argument the radial Laplacian uses the Bessel equation directly
_SMALL_X = 1e-3


@dataclass(frozen=True)
class PhysicalConstants:
    c: float = 1.0
    hbar: float = 1.0
    m: float = 1.0

    def __post_init__(self):
        for key in ("c", "hbar", "m"):
            value = getattr(self, key)
            if not math.isfinite(value) or value <= 0:
                raise ScenarioError(f"constant {key} must be finite and positive, got {value!r}")

    @property
    def omega0(self) -> float:
        return self.m * self.c**2 / self.hbar

    @property
    def mu(self) -> float:
        """Inverse reduced Compton length m*c/hbar."""
        return self.m * self.c / self.hbar

    @property
    def h(self) -> float:
        return 2.0 * math.pi * self.hbar

    @property
    def is_natural(self) -> bool:
        return self.c == 1.0 and self.hbar == 1.0 and self.m == 1.0


NATURAL = PhysicalConstants()


@dataclass(frozen=True)
class CylindricalMode:
    amplitude: float
    l: int = 0
    k_r: float = 0.0
    k_z: float = 0.0
    phase: float = 0.0
    axial_phase: float = 0.0
    # None means "take omega from the dispersion relation"
    omega: float | None = None

    def __post_init__(self):
        if int(self.l) != self.l:
            raise ScenarioError(f"angular index must be an integer, got {self.l!r}")
        object.__setattr__(self, "l", int(self.l))
        for key in ("amplitude", "k_r", "k_z", "phase", "axial_phase"):
            if not math.isfinite(getattr(self, key)):
                raise ScenarioError(f"mode parameter {key} is not finite")
        if self.k_r < 0:
            raise ScenarioError("radial wavenumber k_r must be >= 0")
        if self.omega is not None and (not math.isfinite(self.omega) or self.omega <= 0):
            raise ScenarioError("explicit mode frequency must be finite and positive")

    @property
    def wavenumber(self) -> float:
        return math.hypot(self.k_r, self.k_z)

    def dispersion(self, constants: PhysicalConstants) -> float:
        return math.sqrt(constants.c**2 * self.wavenumber**2 + constants.omega0**2)


@dataclass(frozen=True)
class RadialWindow:
    """Raised-cosine taper: 1 inside ``radius``, 0 beyond ``radius + width``."""

    radius: float
    width: float

    def __post_init__(self):
        if not (self.radius > 0 and self.width > 0):
            raise ScenarioError("window radius and width must be positive")

    @property
    def support(self) -> float:
        return self.radius + self.width

    def profile(self, r):
        """Return W, dW/dr, d2W/dr2 at ``r``."""
        r = np.asarray(r, dtype=float)
        s = np.clip((r - self.radius) / self.width, 0.0, 1.0)
        inside = (r > self.radius) & (r < self.support)
        k = math.pi / self.width
        w = np.where(r <= self.radius, 1.0, np.where(r >= self.support, 0.0, 0.5 * (1 + np.cos(math.pi * s))))
        dw = np.where(inside, -0.5 * k * np.sin(math.pi * s), 0.0)
        d2w = np.where(inside, -0.5 * k * k * np.cos(math.pi * s), 0.0)
        return w, dw, d2w


@dataclass(frozen=True)
class FieldState:
    """Immutable superposition of cylindrical modes."""

    constants: PhysicalConstants
    modes: tuple[CylindricalMode, ...]
    window: RadialWindow | None = None
    name: str = "custom"

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise ScenarioError("empty mode list")
        resolved = tuple(
            m if m.omega is not None else replace(m, omega=m.dispersion(self.constants)) for m in modes
        )
        object.__setattr__(self, "modes", resolved)

    @property
    def omegas(self) -> np.ndarray:
        return np.array([m.omega for m in self.modes])

    @property
    def alpha(self) -> float:
        return alpha_parameter(self)

    @property
    def relativistic(self) -> bool:
        return self.alpha >= 1.0

    @property
    def amplitude_scale(self) -> float:
        return float(sum(abs(m.amplitude) for m in self.modes))

    @property
    def max_abs_l(self) -> int:
        return max(abs(m.l) for m in self.modes)

    def scaled(self, factor: float) -> "FieldState":
        return replace(self, modes=tuple(replace(m, amplitude=m.amplitude * factor) for m in self.modes))

    def rotated(self, angle: float) -> "FieldState":
        """Field rigidly rotated by ``angle`` about the z axis."""
        return replace(self, modes=tuple(replace(m, phase=m.phase - m.l * angle) for m in self.modes))

    def time_shifted(self, tau: float) -> "FieldState":
        """Field delayed by ``tau``: new(t) = old(t - tau)."""
        return replace(self, modes=tuple(replace(m, phase=m.phase + m.omega * tau) for m in self.modes))

    def with_window(self, window: RadialWindow | None) -> "FieldState":
        return replace(self, window=window)

    def without_window(self) -> "FieldState":
        return replace(self, window=None)

    def __add__(self, other: "FieldState") -> "FieldState":
        if other.constants != self.constants or other.window != self.window:
            raise ScenarioError("can only add fields sharing constants and window")
        return replace(self, modes=self.modes + other.modes, name=f"{self.name}+{other.name}")


def alpha_parameter(field: FieldState) -> float:
    """Largest mode wavenumber in units of m*c/hbar."""
    k_max = max(m.wavenumber for m in field.modes)
    return k_max / field.constants.mu


# ---------------------------------------------------------------------------
# construction


def _first_bessel_zero(n: int) -> float:
    return float(special.jn_zeros(n, 1)[0])


def _first_bessel_max(n: int) -> float:
    if n == 0:
        return 0.0
    return float(special.jnp_zeros(n, 1)[0])


def auto_window(modes: Sequence[CylindricalMode], constants: PhysicalConstants) -> RadialWindow:
    """Window ending the flat region at the first radial node of the lowest mode."""
    radial = [m for m in modes if m.k_r > 0]
    if not radial:
        radius = 10.0 / constants.mu
    else:
        radius = min(_first_bessel_zero(abs(m.l)) / m.k_r for m in radial)
    return RadialWindow(radius=radius, width=0.5 * radius)


def preset(name: str, constants: PhysicalConstants | None = None, *, window: Any = None, **params) -> FieldState:
    """Build one of the named scenario fields.

    ``uniform_oscillator``: amplitude.
    ``rotor_l``: l, alpha, amplitude, k_z, phase.
    ``mixed_l``: ls, alpha, amplitudes.
    ``window`` may be None, "auto", a RadialWindow or a mapping with radius/width.
    """
    constants = constants or NATURAL
    mu = constants.mu

    def take(key, default):
        return params.pop(key, default)

    if name == "uniform_oscillator":
        modes = [CylindricalMode(amplitude=float(take("amplitude", 1.0)))]
    elif name == "rotor_l":
        alpha = float(take("alpha", 0.05))
        modes = [
            CylindricalMode(
                amplitude=float(take("amplitude", 1.0)),
                l=int(take("l", 1)),
                k_r=alpha * mu,
                k_z=float(take("k_z", 0.0)),
                phase=float(take("phase", 0.0)),
            )
        ]
    elif name == "mixed_l":
        alpha = float(take("alpha", 0.05))
        ls = list(take("ls", (1, 2)))
        amps = list(take("amplitudes", [1.0] * len(ls)))
        if len(amps) != len(ls):
            raise ScenarioError("mixed_l needs one amplitude per angular index")
        modes = [CylindricalMode(amplitude=float(a), l=int(l), k_r=alpha * mu) for l, a in zip(ls, amps)]
    else:
        raise ScenarioError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    if params:
        raise ScenarioError(f"unknown parameters for preset {name}: {sorted(params)}")
    return FieldState(constants, tuple(modes), _resolve_window(window, modes, constants), name=name)


def _resolve_window(spec, modes, constants):
    if spec is None or isinstance(spec, RadialWindow):
        return spec
    if spec == "auto":
        return auto_window(modes, constants)
    if isinstance(spec, Mapping):
        unknown = set(spec) - {"radius", "width"}
        if unknown:
            raise ScenarioError(f"unknown window keys {sorted(unknown)}")
        auto = auto_window(modes, constants)
        radius = float(spec.get("radius", auto.radius))
        return RadialWindow(radius=radius, width=float(spec.get("width", 0.5 * radius)))
    raise ScenarioError(f"cannot interpret window {spec!r}")


_MODE_KEYS = {"amplitude", "l", "k_r", "k_z", "phase", "axial_phase", "omega"}
_FIELD_KEYS = {"name", "constants", "modes", "preset", "params", "window"}


def build_field(config: Mapping[str, Any]) -> FieldState:
    """Validated field from a mapping: either ``modes`` or ``preset`` (+ ``params``)."""
    unknown = set(config) - _FIELD_KEYS
    if unknown:
        raise ScenarioError(f"unknown field keys {sorted(unknown)}")
    cdict = dict(config.get("constants") or {})
    bad = set(cdict) - {"c", "hbar", "m"}
    if bad:
        raise ScenarioError(f"unknown constants {sorted(bad)}")
    constants = PhysicalConstants(**{k: float(v) for k, v in cdict.items()})
    window = config.get("window")
    if "preset" in config:
        if "modes" in config:
            raise ScenarioError("give either a preset or a mode list, not both")
        field = preset(config["preset"], constants, window=window, **dict(config.get("params") or {}))
    else:
        raw = config.get("modes")
        if raw is None:
            raise ScenarioError("field needs a preset or a mode list")
        modes = []
        for entry in raw:
            extra = set(entry) - _MODE_KEYS
            if extra:
                raise ScenarioError(f"unknown mode keys {sorted(extra)}")
            try:
                modes.append(CylindricalMode(**{k: (int(v) if k == "l" else float(v)) for k, v in entry.items()}))
            except (TypeError, ValueError) as exc:
                raise ScenarioError(str(exc)) from exc
        if not modes:
            raise ScenarioError("empty mode list")
        field = FieldState(constants, tuple(modes), _resolve_window(window, modes, constants))
    if "name" in config:
        field = replace(field, name=str(config["name"]))
    return field


# ---------------------------------------------------------------------------
# evaluation


def _bessel_over_x(n: int, x):
    """J_n(x)/x for n >= 1, regular at x = 0."""
    return (special.jv(n - 1, x) + special.jv(n + 1, x)) / (2.0 * n)


def _points(t, r, theta, z):
    t, r, theta, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, r, theta, z)))
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(r)) and np.all(np.isfinite(theta)) and np.all(np.isfinite(z))):
        raise ScenarioError("spacetime point has non-finite coordinates")
    if np.any(r < 0):
        raise ScenarioError("radial coordinate must be >= 0")
    return t, r, theta, z


@dataclass(frozen=True)
class ComplexAmplitudes:
    """Positive-frequency amplitudes: each real quantity is ``Re(Z)``.

    Products of two real quantities averaged over the fast oscillation are
    ``0.5 * Re(Z_a * conj(Z_b))``; beat terms between modes are kept.
    """

    phi: np.ndarray
    d_t: np.ndarray
    d_r: np.ndarray
    d_theta: np.ndarray  # (1/r) d/dtheta
    d_z: np.ndarray


def complex_amplitudes(field: FieldState, t, r, theta, z) -> ComplexAmplitudes:
    t, r, theta, z = _points(t, r, theta, z)
    zphi = np.zeros(t.shape, complex)
    zt = np.zeros_like(zphi)
    zr = np.zeros_like(zphi)
    zth = np.zeros_like(zphi)
    zz = np.zeros_like(zphi)
    for mode in field.modes:
        n = abs(mode.l)
        x = mode.k_r * r
        jn = special.jv(n, x)
        djn = special.jvp(n, x, 1)
        e = mode.amplitude * np.exp(
            1j * (mode.l * theta + mode.k_z * z + mode.axial_phase - mode.omega * t + mode.phase)
        )
        zphi += jn * e
        zt += -1j * mode.omega * jn * e
        zr += mode.k_r * djn * e
        if n:
            zth += 1j * mode.l * mode.k_r * _bessel_over_x(n, x) * e
        zz += 1j * mode.k_z * jn * e
    if field.window is not None:
        w, dw, _ = field.window.profile(r)
        zr = dw * zphi + w * zr
        zphi, zt, zth, zz = w * zphi, w * zt, w * zth, w * zz
    return ComplexAmplitudes(zphi, zt, zr, zth, zz)


@dataclass(frozen=True)
class FieldSample:
    phi: np.ndarray
    d_t: np.ndarray
    d_r: np.ndarray
    d_theta: np.ndarray  # (1/r) dphi/dtheta
    d_z: np.ndarray
    theta: np.ndarray
    d_tt: np.ndarray | None = None
    laplacian: np.ndarray | None = None

    @property
    def grad(self) -> np.ndarray:
        """Cylindrical gradient (d_r, d_theta/r, d_z) stacked on the last axis."""
        return np.stack([self.d_r, self.d_theta, self.d_z], axis=-1)

    @property
    def grad_cartesian(self) -> np.ndarray:
        c, s = np.cos(self.theta), np.sin(self.theta)
        return np.stack([c * self.d_r - s * self.d_theta, s * self.d_r + c * self.d_theta, self.d_z], axis=-1)


def evaluate(field: FieldState, t, r, theta, z=0.0, *, second: bool = False) -> FieldSample:
    """Closed-form value and 4-gradient of the field; optionally d_tt and Laplacian."""
    amps = complex_amplitudes(field, t, r, theta, z)
    t, r, theta, z = _points(t, r, theta, z)
    d_tt = lap = None
    if second:
        d_tt, lap = _second_derivatives(field, t, r, theta, z)
    return FieldSample(
        phi=amps.phi.real,
        d_t=amps.d_t.real,
        d_r=amps.d_r.real,
        d_theta=amps.d_theta.real,
        d_z=amps.d_z.real,
        theta=theta,
        d_tt=d_tt,
        laplacian=lap,
    )


def _second_derivatives(field, t, r, theta, z):
    phi = np.zeros(t.shape)
    d_r = np.zeros_like(phi)
    d_tt = np.zeros_like(phi)
    lap = np.zeros_like(phi)
    for mode in field.modes:
        n = abs(mode.l)
        x = mode.k_r * r
        cos_psi = mode.amplitude * np.cos(
            mode.l * theta + mode.k_z * z + mode.axial_phase - mode.omega * t + mode.phase
        )
        jn = special.jv(n, x)
        value = jn * cos_psi
        phi += value
        d_r += mode.k_r * special.jvp(n, x, 1) * cos_psi
        d_tt += -mode.omega**2 * value
        # d_rr + (1/r) d_r + (1/r^2) d_theta^2 acting on J_n(k_r r) e^{i l theta}
        big = x > _SMALL_X
        xs = np.where(big, x, 1.0)
        radial = np.where(
            big,
            special.jvp(n, xs, 2) + special.jvp(n, xs, 1) / xs - (mode.l / xs) ** 2 * special.jv(n, xs),
            -jn,
        )
        lap += (mode.k_r**2 * radial - mode.k_z**2 * jn) * cos_psi
    if field.window is not None:
        w, dw, d2w = field.window.profile(r)
        dw_over_r = np.divide(dw, r, out=np.zeros_like(dw), where=r > 0)
        lap = w * lap + 2 * dw * d_r + (d2w + dw_over_r) * phi
        d_tt = w * d_tt
    return d_tt, lap


def kge_residual(field: FieldState, t, r, theta, z=0.0):
    """(box phi + mu^2 phi) / (mu^2 * sum|A|): zero for exact modes."""
    c = field.constants.c
    mu2 = field.constants.mu**2
    s = evaluate(field, t, r, theta, z, second=True)
    residual = s.d_tt / c**2 - s.laplacian + mu2 * s.phi
    return residual / (mu2 * field.amplitude_scale)


def find_crest(field: FieldState, r: float, theta: float, z: float = 0.0, t_guess: float = 0.0) -> float:
    """Time nearest ``t_guess`` at which d(phi)/dt vanishes at the given point."""
    w0 = field.constants.omega0
    half = math.pi / w0

    def dphi(t):
        return float(evaluate(field, t, r, theta, z).d_t)

    if dphi(t_guess) == 0.0:
        return float(t_guess)
    ts = t_guess + np.linspace(-half, half, 129)
    vals = np.array([dphi(t) for t in ts])
    flips = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
    if len(flips) == 0:
        raise ScenarioError("no crest found within half a period of the guess")
    best = min(flips, key=lambda i: abs(0.5 * (ts[i] + ts[i + 1]) - t_guess))
    return float(optimize.brentq(dphi, ts[best], ts[best + 1], xtol=1e-15, rtol=1e-15))


# ---------------------------------------------------------------------------
# frames and envelopes


@dataclass(frozen=True)
class Frame:
    """Evaluation frame: t' = t - t_offset - surface(r, theta - rotation, z).

    ``surface`` is any object with a ``time_at(r, theta, z)`` method, e.g. a
    traced natural surface.  Spatial coordinates are not boosted.
    """

    t_offset: float = 0.0
    rotation: float = 0.0
    surface: Any = None

    def time_origin(self, r, theta, z):
        base = np.full(np.broadcast(r, theta, z).shape, self.t_offset, dtype=float)
        if self.surface is not None:
            base = base + self.surface.time_at(r, np.asarray(theta) - self.rotation, z)
        return base


LAB = Frame()


@dataclass(frozen=True)
class EnvelopeWindow:
    center: tuple[float, float, float]  # (r, theta, z)
    duration: float
    radius: float | None = None  # defaults to c * duration
    n_t: int = 17
    n_space: int = 5


@dataclass(frozen=True)
class EnvelopePair:
    phi_c: np.ndarray  # (n_t, n_points)
    phi_s: np.ndarray
    t_prime: np.ndarray
    points: np.ndarray  # (n_points, 3) cylindrical
    window: EnvelopeWindow
    ratio: float  # max|phi_s| / max|phi_c| over the window
    surface_ratio: float  # same, on t' = 0 only
    alpha_omega_dt: float
    reconstruction_error: float  # exact identity, rounding only
    frozen_error: float  # error of holding t'=0 envelopes fixed across the window


def envelope_decompose(field: FieldState, window: EnvelopeWindow, frame: Frame = LAB) -> EnvelopePair:
    """Split phi = phi_c cos(w0 t') + phi_s sin(w0 t') on a grid inside ``window``.

    The envelopes satisfy the variation-of-parameters condition, so at t' = 0
    phi_c = phi and phi_s = (d phi/dt)/w0.
    """
    k = field.constants
    radius = k.c * window.duration if window.radius is None else window.radius
    if not (window.duration > 0) or radius < 0:
        raise ScenarioError("envelope window has zero volume")
    r0, th0, z0 = window.center
    x0, y0 = r0 * math.cos(th0), r0 * math.sin(th0)
    axis = np.linspace(-radius, radius, window.n_space) if radius > 0 else np.zeros(1)
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    keep = gx**2 + gy**2 + gz**2 <= radius**2 * (1 + 1e-12)
    px, py, pz = x0 + gx[keep], y0 + gy[keep], z0 + gz[keep]
    pr = np.hypot(px, py)
    pth = np.arctan2(py, px)
    tp = np.linspace(0.0, window.duration, window.n_t)
    origin = frame.time_origin(pr, pth, pz)
    t = origin[None, :] + tp[:, None]
    s = evaluate(field, t, pr[None, :], pth[None, :], pz[None, :])
    w0 = k.omega0
    cos_t = np.cos(w0 * tp)[:, None]
    sin_t = np.sin(w0 * tp)[:, None]
    phi_c = s.phi * cos_t - (s.d_t / w0) * sin_t
    phi_s = s.phi * sin_t + (s.d_t / w0) * cos_t
    scale = max(float(np.max(np.abs(s.phi))), 1e-300)
    recon = phi_c * cos_t + phi_s * sin_t
    frozen = phi_c[0][None, :] * cos_t + phi_s[0][None, :] * sin_t
    cmax = max(float(np.max(np.abs(phi_c))), 1e-300)
    return EnvelopePair(
        phi_c=phi_c,
        phi_s=phi_s,
        t_prime=tp,
        points=np.stack([pr, pth, pz], axis=-1),
        window=window,
        ratio=float(np.max(np.abs(phi_s))) / cmax,
        surface_ratio=float(np.max(np.abs(phi_s[0]))) / max(float(np.max(np.abs(phi_c[0]))), 1e-300),
        alpha_omega_dt=field.alpha * w0 * window.duration,
        reconstruction_error=float(np.max(np.abs(recon - s.phi))) / scale,
        frozen_error=float(np.max(np.abs(frozen - s.phi))) / scale,
    )


def describe(field: FieldState) -> dict:
    """Plain-data description of ``field`` (stable key order)."""
    k = field.constants
    return {
        "name": field.name,
        "constants": {"c": k.c, "hbar": k.hbar, "m": k.m},
        "modes": [
            {
                "amplitude": m.amplitude,
                "l": m.l,
                "k_r": m.k_r,
                "k_z": m.k_z,
                "phase": m.phase,
                "axial_phase": m.axial_phase,
                "omega": m.omega,
            }
            for m in field.modes
        ],
        "window": None if field.window is None else {"radius": field.window.radius, "width": field.window.width},
    }


def fingerprint(field: FieldState) -> str:
    blob = json.dumps(describe(field), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def bessel_peak_radius(field: FieldState) -> float | None:
    """Radius of the first maximum of J_|l| for the lowest-|l| rotating mode."""
    rotating = [m for m in field.modes if m.k_r > 0 and m.l != 0]
    if not rotating:
        return None
    mode = min(rotating, key=lambda m: (abs(m.l), -abs(m.amplitude)))
    return _first_bessel_max(abs(mode.l)) / mode.k_r


def bessel_peak_radii(field: FieldState) -> list[float]:
    """First-maximum radius of every rotating mode, sorted."""
    return sorted(_first_bessel_max(abs(m.l)) / m.k_r for m in field.modes if m.k_r > 0 and m.l != 0)
