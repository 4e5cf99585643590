"""Hybrid continuous/discontinuous Galerkin spectral element solver
for the two-dimensional linear acoustic wave system on conforming
quadrilateral meshes with curved elements and piecewise-constant media.

Submodules are imported lazily so that the CLI can cap BLAS thread
pools via environment variables before numpy loads.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "AcousticMedium": ".acoustics",
    "ConfigError": ".driver",
    "RunConfig": ".driver",
    "RunReport": ".driver",
    "ScatteringSolution": ".solutions",
    "SCHEMES": ".timestepping",
    "SpatialOperator": ".spatial",
    "WaveSpec": ".solutions",
    "advance": ".timestepping",
    "build_problem": ".driver",
    "cartesian_mesh": ".mesh",
    "check": ".driver",
    "conservation_drift": ".diagnostics",
    "constant_state": ".solutions",
    "curved_mesh_example": ".mesh",
    "discrete_energy": ".diagnostics",
    "discrete_energy_sym": ".diagnostics",
    "l2_error": ".diagnostics",
    "load_mesh": ".mesh",
    "matched_interface_constants": ".solutions",
    "max_error": ".diagnostics",
    "plane_wave_state": ".solutions",
    "project_fields": ".spatial",
    "record_energy_series": ".diagnostics",
    "run": ".driver",
    "run_to": ".timestepping",
    "save_mesh": ".mesh",
    "stable_timestep": ".timestepping",
    "sweep": ".driver",
    "warped_mesh": ".mesh",
    "zero_fields": ".spatial",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    if name in _EXPORTS:
        module = importlib.import_module(_EXPORTS[name], __name__)
        value = getattr(module, name)
        globals()[name] = value
        return value
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | set(__all__))
