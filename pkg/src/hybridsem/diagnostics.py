"""Error norms, discrete energy, conservation audit, series recording."""

import csv

import numpy as np

from .basis import operators
from .timestepping import run_to


def _evaluate(exact, e, X, Y, t):
    try:
        return np.asarray(exact(X, Y, t), dtype=float)
    except TypeError:
        return np.asarray(exact(e, X, Y, t), dtype=float)


def max_error(fields, mesh, exact, t):
    """Largest nodal error over all elements and solution components.

    ``exact(x, y, t)`` (or ``exact(e, x, y, t)`` for piecewise-defined
    references) must return the three solution components on the given
    coordinate arrays.
    """
    worst = 0.0
    for e, elem in enumerate(mesh.elements):
        ref = _evaluate(exact, e, elem.X, elem.Y, t)
        worst = max(worst, np.abs(fields[e] - ref).max())
    return worst


def l2_error(fields, mesh, exact, t):
    """Jacobian-weighted quadrature norm of the nodal error."""
    w2 = np.outer(*(operators(mesh.N).weights,) * 2)
    total = 0.0
    for e, elem in enumerate(mesh.elements):
        diff = fields[e] - _evaluate(exact, e, elem.X, elem.Y, t)
        total += float(np.sum(elem.J * w2 * np.sum(diff * diff, axis=0)))
    return np.sqrt(total)


def discrete_energy(fields, mesh, elements=None):
    """Plain quadrature L2 norm sqrt(sum_e <J U, U>_N).

    ``elements`` restricts the sum to a subset (for per-region series);
    default is the whole mesh.
    """
    w2 = np.outer(*(operators(mesh.N).weights,) * 2)
    if elements is None:
        elements = range(len(mesh.elements))
    total = 0.0
    for e in elements:
        U = fields[e]
        total += float(np.sum(mesh.elements[e].J * w2 * np.sum(U * U, axis=0)))
    return np.sqrt(total)


def discrete_energy_sym(fields, mesh, elements=None):
    """Energy norm sqrt(sum_e <J S^-1 U, S^-1 U>_N) with each region's own
    symmetrizer, the quantity whose semi-discrete growth is bounded by the
    coupling fluxes."""
    w2 = np.outer(*(operators(mesh.N).weights,) * 2)
    if elements is None:
        elements = range(len(mesh.elements))
    total = 0.0
    for e in elements:
        Us = np.einsum("ab,bij->aij", mesh.medium(e).Sinv, fields[e])
        total += float(np.sum(mesh.elements[e].J * w2
                              * np.sum(Us * Us, axis=0)))
    return np.sqrt(total)


def elements_by_material(mesh):
    """Element index lists keyed by material id."""
    groups = {}
    for e, elem in enumerate(mesh.elements):
        groups.setdefault(elem.material, []).append(e)
    return groups


def conservation_drift(op, fields, t0, t1, dt, scheme="LSRK45"):
    """Advance the run and audit global conservation.

    Integrates the boundary-flux total through the identical RK stage
    arithmetic as the state itself, so the returned componentwise drift

        | (sum JwU)(t1) - (sum JwU)(t0) + int_t0^t1 sum wF* dt |

    isolates the semi-discrete identity from time-integration error.
    Returns ``(drift, fields_at_t1)``.
    """
    before = op.total_state(fields)
    fields, acc = run_to(fields, op.rhs, t0, t1, dt, scheme,
                         aux=(np.zeros(3), op.boundary_flux_total))
    drift = op.total_state(fields) - before + acc
    return np.abs(drift).max(), fields


def record_energy_series(op, fields, t_end, dt, sample_dt=0.5, t0=0.0,
                         scheme="LSRK45", groups=None):
    """March to t_end sampling group energies every ``sample_dt``.

    ``groups`` maps series labels to element index lists (default one
    series ``"total"`` over the whole mesh).  Returns ``(times, series,
    fields)`` where ``series[label]`` parallels ``times``.
    """
    mesh = op.mesh
    if groups is None:
        groups = {"total": None}
    nsamp = int(round((t_end - t0) / sample_dt))
    times = [t0 + k * sample_dt for k in range(nsamp + 1)]
    series = {label: [] for label in groups}
    t = t0
    for k, t_next in enumerate(times):
        fields = run_to(fields, op.rhs, t, t_next, dt, scheme)
        t = t_next
        for label, elems in groups.items():
            series[label].append(discrete_energy(fields, mesh, elems))
    return times, series, fields


def write_energy_csv(path, times, series, note=""):
    """Energy series as CSV: comment header, then ``t,<label>...`` rows."""
    labels = list(series)
    with open(path, "w", newline="") as fh:
        fh.write(f"# discrete energy vs time{' - ' if note else ''}{note}\n")
        writer = csv.writer(fh)
        writer.writerow(["t"] + labels)
        for k, t in enumerate(times):
            writer.writerow([f"{t:.6g}"]
                            + [f"{series[lab][k]:.12e}" for lab in labels])


def write_convergence_csv(path, degrees, log10_errors, note=""):
    """Convergence sweep as CSV: comment header, then ``N,log10_max_error``."""
    with open(path, "w", newline="") as fh:
        fh.write("# max nodal error vs polynomial degree"
                 f"{' - ' if note else ''}{note}\n")
        writer = csv.writer(fh)
        writer.writerow(["N", "log10_max_error"])
        for N, err in zip(degrees, log10_errors):
            writer.writerow([N, f"{err:.6f}"])
