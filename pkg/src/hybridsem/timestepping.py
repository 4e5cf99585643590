"""Explicit Runge-Kutta time integration with CFL-based step selection."""

import math

import numpy as np

# Carpenter & Kennedy 5-stage 4th-order low-storage coefficients
_LSRK_A = np.array([
    0.0,
    -567301805773.0 / 1357537059087.0,
    -2404267990393.0 / 2016746695238.0,
    -3550918686646.0 / 2091501179385.0,
    -1275806237668.0 / 842570457699.0,
])
_LSRK_B = np.array([
    1432997174477.0 / 9575080441755.0,
    5161836677717.0 / 13612068292357.0,
    1720146321549.0 / 2090206949498.0,
    3134564353537.0 / 4481467310338.0,
    2277821191437.0 / 14882151754819.0,
])
_LSRK_C = np.array([
    0.0,
    1432997174477.0 / 9575080441755.0,
    2526269341429.0 / 6820363962896.0,
    2006345519317.0 / 3224310063776.0,
    2802321613138.0 / 2924317926251.0,
])

SCHEMES = ("LSRK45", "RK4-classic")


def stable_timestep(mesh, cfl=0.4):
    """CFL-limited step for the collocation operator.

    dt = cfl * min over all quadrature points of
         J / ( c * (|Ja1| + |Ja2|) ) / (2N + 1),

    the usual spectral scaling of the grid-aligned wave-crossing time.
    """
    factor = 2 * mesh.N + 1
    dt = math.inf
    for e, elem in enumerate(mesh.elements):
        c = mesh.medium(e).c
        speed = c * (np.hypot(elem.Ja1[..., 0], elem.Ja1[..., 1])
                     + np.hypot(elem.Ja2[..., 0], elem.Ja2[..., 1]))
        dt = min(dt, (elem.J / speed).min())
    return cfl * dt / factor


def advance(fields, t, dt, rhs, scheme="LSRK45", aux=None):
    """One explicit RK step from t to t + dt.

    ``rhs(fields, t)`` must return the semi-discrete time derivative at
    the stage time.  Raises FloatingPointError when the step produces a
    non-finite value.

    ``aux=(state, aux_rhs)`` advances a secondary quantity through the
    identical stage arithmetic; ``aux_rhs(stage_fields, stage_t)`` is
    evaluated on the same stage states as ``rhs``.  Used for diagnostic
    accumulators that must stay consistent with the main update.  When
    given, returns ``(fields, aux_state)``.
    """
    if scheme == "LSRK45":
        g = np.zeros_like(fields)
        u = fields.copy()
        if aux is not None:
            ga = np.zeros_like(np.asarray(aux[0], dtype=float))
            ua = np.asarray(aux[0], dtype=float).copy()
        for a, b, c in zip(_LSRK_A, _LSRK_B, _LSRK_C):
            if aux is not None:
                ga = a * ga + aux[1](u, t + c * dt)
                ua = ua + (b * dt) * ga
            g *= a
            g += rhs(u, t + c * dt)
            u += (b * dt) * g
    elif scheme == "RK4-classic":
        ks, kas = [], []
        stage = fields
        for frac in (0.0, 0.5, 0.5, 1.0):
            if ks:
                stage = fields + (frac * dt) * ks[-1]
            if aux is not None:
                kas.append(aux[1](stage, t + frac * dt))
            ks.append(rhs(stage, t + frac * dt))
        u = fields + (dt / 6.0) * (ks[0] + 2.0 * (ks[1] + ks[2]) + ks[3])
        if aux is not None:
            ua = np.asarray(aux[0], dtype=float) + (dt / 6.0) * (
                kas[0] + 2.0 * (kas[1] + kas[2]) + kas[3])
    else:
        raise ValueError(f"unknown scheme {scheme!r}, pick one of {SCHEMES}")
    if not np.isfinite(u).all():
        raise FloatingPointError(
            f"non-finite state after step t={t:.6g}, dt={dt:.3e}")
    if aux is not None:
        return u, ua
    return u


def run_to(fields, rhs, t, t_end, dt_max, scheme="LSRK45", aux=None):
    """Advance from t to exactly t_end in uniform steps of at most dt_max."""
    span = t_end - t
    if span <= 0.0:
        return fields if aux is None else (fields, np.asarray(aux[0], float))
    nsteps = max(1, math.ceil(span / dt_max - 1e-12))
    dt = span / nsteps
    if aux is None:
        for k in range(nsteps):
            fields = advance(fields, t + k * dt, dt, rhs, scheme)
        return fields
    aux_state = aux[0]
    for k in range(nsteps):
        fields, aux_state = advance(fields, t + k * dt, dt, rhs, scheme,
                                    aux=(aux_state, aux[1]))
    return fields, aux_state
