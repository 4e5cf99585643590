"""Closed-form reference fields for the 2D linear acoustic system.

Provides travelling plane waves and Gaussian pulse packets, piecewise
constant states matched across a material interface, and the exact
incident/reflected/transmitted superposition for a plane interface at
x = 0 between two homogeneous media.  These fields supply initial data,
inflow boundary data, and reference values for error and energy
measurement.
"""

from dataclasses import dataclass, field

import numpy as np

from .acoustics import AcousticMedium

__all__ = [
    "WaveSpec",
    "plane_wave_state",
    "constant_state",
    "matched_interface_constants",
    "ScatteringSolution",
]

# Amplitude envelope exp(-s^2/sigma^2) drops to 1e-4 at |s| = 1.
_PULSE_SIGMA_SQ = 1.0 / np.log(1.0e4)
_PULSE_CUTOFF = 1.6


@dataclass(frozen=True)
class WaveSpec:
    """Scalar profile and direction of a travelling wave.

    The wave moves along the unit vector ``direction`` with the sound
    speed of the medium it is evaluated in; the scalar profile is a
    function of the phase s = (direction . x)/c - (t - t0).

    shape:
        ``sine``       psi(s) = sin(omega s), an infinite wave train
        ``gauss``      psi(s) = exp(-s^2/sigma_sq), a carrier-free pulse
        ``wavepacket`` the Gaussian envelope times a sin(omega s) carrier

    cutoff:
        support radius of the pulse envelope; None leaves the Gaussian
        untruncated (smooth data for convergence studies).
    """

    direction: tuple = (1.0, 0.0)
    omega: float = 2.0 * np.pi
    amplitude: float = 1.0
    t0: float = 0.0
    shape: str = "sine"
    sigma_sq: float = _PULSE_SIGMA_SQ
    cutoff: float = None

    def __post_init__(self):
        if self.shape not in ("sine", "gauss", "wavepacket"):
            raise ValueError(f"unknown wave shape {self.shape!r}")
        if self.omega <= 0.0:
            raise ValueError("omega must be positive")
        if self.sigma_sq <= 0.0:
            raise ValueError("sigma_sq must be positive")
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (2,):
            raise ValueError("direction must be a 2-vector")
        norm = np.hypot(d[0], d[1])
        if norm == 0.0:
            raise ValueError("direction must be nonzero")
        object.__setattr__(self, "direction", (d[0] / norm, d[1] / norm))

    def profile(self, s):
        """Evaluate the scalar wave profile at phase ``s``."""
        return self.amplitude * _profile(
            self.shape, self.omega, self.sigma_sq, self.cutoff, s
        )


def _profile(shape, omega, sigma_sq, cutoff, s):
    s = np.asarray(s, dtype=float)
    if shape == "sine":
        return np.sin(omega * s)
    env = np.exp(-s * s / sigma_sq)
    if cutoff is not None:
        env = np.where(np.abs(s) <= cutoff, env, 0.0)
    if shape == "gauss":
        return env
    return env * np.sin(omega * s)


def _wave_state(spec, amplitude, direction, medium, x, y, t):
    """State of one travelling wave: pressure profile times polarization."""
    kx, ky = direction
    s = (kx * np.asarray(x) + ky * np.asarray(y)) / medium.c - (t - spec.t0)
    base = amplitude * _profile(
        spec.shape, spec.omega, spec.sigma_sq, spec.cutoff, s
    )
    zinv = 1.0 / (medium.rho * medium.c)
    return np.stack([base, kx * zinv * base, ky * zinv * base])


def plane_wave_state(spec, medium, x, y, t):
    """Exact plane-wave solution (p, u, v) in a homogeneous medium.

    U = a psi(s) (1, k_x/(rho c), k_y/(rho c)) with
    s = (k . x)/c - (t - t0) and k the unit propagation direction.
    """
    return _wave_state(spec, spec.amplitude, spec.direction, medium, x, y, t)


def constant_state(p, u, v):
    """Field initializer returning the uniform state at every point."""

    def init(x, y):
        x = np.asarray(x, dtype=float)
        shape = (3,) + x.shape
        out = np.empty(shape)
        out[0] = p
        out[1] = u
        out[2] = v
        return out

    return init


def matched_interface_constants(med_left, med_right, left_state, normal=(1.0, 0.0)):
    """Right-side constant state continuing ``left_state`` across an interface.

    Solves the 3x3 linear system expressing continuity of the normal flux
    (rho c^2 u_n and p/rho continuous) together with continuity of the
    tangential velocity.  The returned state makes the piecewise constant
    field a steady solution of the two-media problem.
    """
    p, u, v = (float(c) for c in left_state)
    nx, ny = normal
    nn = np.hypot(nx, ny)
    nx, ny = nx / nn, ny / nn
    # rows: p/rho jump, rho c^2 u_n jump, tangential velocity jump
    lhs = np.array(
        [
            [1.0 / med_right.rho, 0.0, 0.0],
            [0.0, med_right.rho * med_right.c**2 * nx, med_right.rho * med_right.c**2 * ny],
            [0.0, -ny, nx],
        ]
    )
    rhs = np.array(
        [
            p / med_left.rho,
            med_left.rho * med_left.c**2 * (nx * u + ny * v),
            -ny * u + nx * v,
        ]
    )
    return tuple(np.linalg.solve(lhs, rhs))


@dataclass(frozen=True)
class ScatteringSolution:
    """Incident + reflected + transmitted waves at a plane interface x = 0.

    The incident wave travels in medium ``left`` (x < 0) with unit
    direction (k_x, k_y), k_x > 0.  The reflected wave has direction
    (-k_x, k_y); the transmitted direction follows from matching the
    trace phase along the interface (Snell's law).  Amplitudes are fixed
    by continuity of the normal flux, i.e. rho c^2 u and p/rho continuous
    at x = 0:

        a_r/a_i = (Z_L k_x - Z_R q_x) / (Z_L k_x + Z_R q_x)
        a_t/a_i = 2 rho_R c_L k_x   / (Z_L k_x + Z_R q_x)

    with Z = rho c the impedances and q_x the transmitted x-direction.
    """

    left: AcousticMedium
    right: AcousticMedium
    spec: WaveSpec

    def __post_init__(self):
        kx, ky = self.spec.direction
        if kx <= 0.0:
            raise ValueError("incident wave must travel toward positive x")
        sin_t = self.right.c / self.left.c * ky
        if abs(sin_t) >= 1.0:
            raise ValueError(
                "total internal reflection configuration is not supported"
            )

    @property
    def reflected_direction(self):
        kx, ky = self.spec.direction
        return (-kx, ky)

    @property
    def transmitted_direction(self):
        kx, ky = self.spec.direction
        sin_t = self.right.c / self.left.c * ky
        return (np.sqrt(1.0 - sin_t * sin_t), sin_t)

    @property
    def denominator(self):
        kx, _ = self.spec.direction
        qx, _ = self.transmitted_direction
        return self.left.impedance * kx + self.right.impedance * qx

    @property
    def reflection(self):
        kx, _ = self.spec.direction
        qx, _ = self.transmitted_direction
        return (
            (self.left.impedance * kx - self.right.impedance * qx)
            / self.denominator
        )

    @property
    def transmission(self):
        kx, _ = self.spec.direction
        return 2.0 * self.right.rho * self.left.c * kx / self.denominator

    def evaluate(self, x, y, t, side):
        """Exact state on one side of the interface.

        side ``left``: incident plus reflected wave in the left medium;
        side ``right``: transmitted wave in the right medium.
        """
        a = self.spec.amplitude
        if side == "left":
            inc = _wave_state(
                self.spec, a, self.spec.direction, self.left, x, y, t
            )
            ref = _wave_state(
                self.spec, a * self.reflection, self.reflected_direction,
                self.left, x, y, t,
            )
            return inc + ref
        if side == "right":
            return _wave_state(
                self.spec, a * self.transmission, self.transmitted_direction,
                self.right, x, y, t,
            )
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")

    def evaluate_by_position(self, x, y, t):
        """Exact state selected by sign(x); interface points use the left state."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        left = self.evaluate(x, y, t, "left")
        right = self.evaluate(x, y, t, "right")
        return np.where(x <= 0.0, left, right)

    def medium_at(self, x):
        return self.left if x <= 0.0 else self.right
