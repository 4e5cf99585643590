"""Run configuration, experiment presets, and the invariant check suite.

The CLI front end (``hybridsem run|sweep|check``) is a thin wrapper
around three functions here:

``run(config)``
    Build the mesh and problem described by a :class:`RunConfig`,
    integrate to the final time, and return a :class:`RunReport`
    (plus an energy-series CSV when requested).
``sweep(config, degrees)``
    One run per polynomial degree; writes a convergence table CSV.
``check()``
    Fast self-contained invariant suite (operator identities, residual
    form equivalence, free-stream preservation, conservation, interface
    energy bounds).

Runs are deterministic for a fixed config: meshes enumerate elements in
row-major order, faces in builder order, and all reductions use fixed
numpy evaluation order.  CSV files are written with fixed formats, so
repeated single-threaded runs produce bitwise-identical artifacts.
"""

import configparser
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .acoustics import AcousticMedium
from .basis import operators
from .diagnostics import (
    discrete_energy,
    l2_error,
    max_error,
    record_energy_series,
    write_convergence_csv,
    write_energy_csv,
)
from .mesh import (
    cartesian_mesh,
    curved_mesh_example,
    load_mesh,
    warped_mesh,
)
from .solutions import (
    ScatteringSolution,
    WaveSpec,
    matched_interface_constants,
    plane_wave_state,
)
from .spatial import SpatialOperator, project_fields, reference_time_derivative
from .timestepping import SCHEMES, run_to, stable_timestep


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


PRESET_NAMES = (
    "cartesian-wavepacket",
    "curved-sine",
    "free-stream",
    "scattering",
    "custom",
)
MODES = ("CG", "DG", "HYBRID")

_SCHEMA = {
    "run": ("preset", "mode", "n", "t_final", "scheme", "cfl", "dt",
            "boundary"),
    "mesh": ("kind", "nx", "ny", "box", "n_geom", "amplitude", "split",
             "dg_lines", "mesh_file"),
    "materials": ("left", "right"),
    "wave": ("shape", "direction", "omega", "t0", "sigma_sq", "cutoff",
             "amplitude", "state"),
    "output": ("dir", "prefix", "energy_series", "sample_dt"),
    "sweep": ("degrees",),
}

_GLOBAL_DEFAULTS = {
    "run": {
        "preset": "custom",
        "mode": "CG",
        "n": "6",
        "t_final": "5.0",
        "scheme": "LSRK45",
        "cfl": "0.4",
        "dt": "none",
        "boundary": "exact",
    },
    "mesh": {
        "kind": "cartesian",
        "nx": "20",
        "ny": "20",
        "box": "-5 5 -5 5",
        "n_geom": "4",
        "amplitude": "0.06",
        "split": "none",
        "dg_lines": "",
        "mesh_file": "none",
    },
    "materials": {"left": "1.0 1.0", "right": "none"},
    "wave": {
        "shape": "sine",
        "direction": "1 0",
        "omega": "6.283185307179586",
        "t0": "0.0",
        "sigma_sq": "0.10857362047581294",
        "cutoff": "none",
        "amplitude": "1.0",
        "state": "1.0 0.0 0.0",
    },
    "output": {
        "dir": ".",
        "prefix": "run",
        "energy_series": "false",
        "sample_dt": "0.5",
    },
    "sweep": {"degrees": ""},
}

# Per-preset overrides layered between the global defaults and the user
# file.  The wavepacket studies share the packet e^(-s^2/0.27795) sin(w s)
# with w = 5 pi / 2 released at t0 = 3 and measured at t = 5.
PRESETS = {
    "cartesian-wavepacket": {
        "run": {"mode": "CG", "t_final": "5.0"},
        "mesh": {"kind": "cartesian", "nx": "20", "ny": "20",
                 "box": "-5 5 -5 5", "dg_lines": "0.0"},
        "wave": {"shape": "wavepacket",
                 "direction": "0.8660254037844386 0.5",
                 "omega": "7.853981633974483", "t0": "3.0",
                 "sigma_sq": "0.27795", "cutoff": "none"},
    },
    "curved-sine": {
        "run": {"cfl": "0.1", "t_final": "5.0"},
        "mesh": {"kind": "warped", "nx": "3", "ny": "3", "box": "0 2 0 2",
                 "amplitude": "0.06", "n_geom": "4"},
        "wave": {"shape": "sine", "direction": "0.8660254037844386 0.5",
                 "omega": "3.141592653589793", "t0": "0.0"},
    },
    "free-stream": {
        "run": {"n": "5", "t_final": "1.0"},
        "mesh": {"kind": "curved-example", "n_geom": "5"},
        "wave": {"shape": "constant", "state": "1.0 0.5 -0.25"},
    },
    "scattering": {
        "run": {"mode": "HYBRID", "t_final": "5.0"},
        "mesh": {"kind": "cartesian", "nx": "20", "ny": "20",
                 "box": "-5 5 -5 5", "split": "0.0"},
        "materials": {"left": "1.0 1.0", "right": "0.4 0.7"},
        "wave": {"shape": "wavepacket",
                 "direction": "0.5 0.8660254037844386",
                 "omega": "7.853981633974483", "t0": "3.0",
                 "sigma_sq": "0.27795", "cutoff": "none"},
    },
    "custom": {},
}


def _parse_file(path):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as f:
            cp.read_file(f, source=path)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    table = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(
                f"{path}: unknown section [{section}]; expected one of "
                + ", ".join(sorted(_SCHEMA))
            )
        for key, value in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(
                    f"{path}: unknown option '{key}' in [{section}]"
                )
            table.setdefault(section, {})[key] = value.strip()
    return table


def _layered(user):
    preset = user.get("run", {}).get("preset", "custom").strip()
    if preset not in PRESET_NAMES:
        raise ConfigError(
            f"unknown preset {preset!r}; expected one of "
            + ", ".join(PRESET_NAMES)
        )
    table = {s: dict(v) for s, v in _GLOBAL_DEFAULTS.items()}
    table["run"]["preset"] = preset
    for source in (PRESETS[preset], user):
        for section, items in source.items():
            table[section].update(items)
    return table


class RunConfig:
    """Validated key/value run configuration.

    Values resolve in three layers: global defaults, then the preset
    named by ``[run] preset``, then the user's config file.
    """

    def __init__(self, table):
        self._table = table
        self.validate()

    @classmethod
    def from_file(cls, path=None, overrides=None):
        """Load a config file (INI sections) over the preset defaults.

        ``overrides`` is an optional ``{(section, key): value}`` mapping
        applied last; the CLI uses it for command-line flags.
        """
        user = _parse_file(path) if path is not None else {}
        if overrides:
            for (section, key), value in overrides.items():
                user.setdefault(section, {})[key] = str(value)
        return cls(_layered(user))

    # -- typed getters -------------------------------------------------
    def raw(self, section, key):
        return self._table[section][key]

    def _optional(self, section, key):
        value = self.raw(section, key)
        return None if value.lower() in ("", "none") else value

    def getstr(self, section, key):
        return self.raw(section, key)

    def getfloat(self, section, key, optional=False):
        value = self._optional(section, key) if optional \
            else self.raw(section, key)
        if value is None:
            return None
        try:
            return float(value)
        except ValueError:
            raise ConfigError(
                f"[{section}] {key} = {value!r} is not a number"
            ) from None

    def getint(self, section, key):
        value = self.raw(section, key)
        try:
            return int(value)
        except ValueError:
            raise ConfigError(
                f"[{section}] {key} = {value!r} is not an integer"
            ) from None

    def getbool(self, section, key):
        value = self.raw(section, key).lower()
        if value in ("true", "yes", "on", "1"):
            return True
        if value in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"[{section}] {key} = {value!r} is not a boolean")

    def getfloats(self, section, key):
        value = self._optional(section, key)
        if value is None:
            return ()
        try:
            return tuple(float(tok) for tok in value.replace(",", " ").split())
        except ValueError:
            raise ConfigError(
                f"[{section}] {key} = {value!r} is not a number list"
            ) from None

    # -- derived views -------------------------------------------------
    @property
    def preset(self):
        return self.raw("run", "preset")

    @property
    def mode(self):
        return self.raw("run", "mode").upper()

    @property
    def degree(self):
        return self.getint("run", "n")

    def medium(self, side):
        vals = self.getfloats("materials", side)
        if not vals:
            return None
        if len(vals) != 2:
            raise ConfigError(f"[materials] {side} needs 'rho c'")
        return AcousticMedium(*vals)

    def wave_spec(self):
        direction = self.getfloats("wave", "direction")
        if len(direction) != 2:
            raise ConfigError("[wave] direction needs two components")
        return WaveSpec(
            direction=direction,
            omega=self.getfloat("wave", "omega"),
            amplitude=self.getfloat("wave", "amplitude"),
            t0=self.getfloat("wave", "t0"),
            shape=self.raw("wave", "shape"),
            sigma_sq=self.getfloat("wave", "sigma_sq"),
            cutoff=self.getfloat("wave", "cutoff", optional=True),
        )

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(
                f"[run] mode = {self.raw('run', 'mode')!r}; expected CG, DG "
                "or HYBRID"
            )
        n = self.degree
        if not 1 <= n <= 20:
            raise ConfigError(f"[run] n = {n} outside the supported [1, 20]")
        scheme = self.raw("run", "scheme")
        if scheme not in SCHEMES:
            raise ConfigError(
                f"[run] scheme = {scheme!r}; expected one of "
                + ", ".join(SCHEMES)
            )
        if self.raw("run", "boundary") not in ("exact", "zero"):
            raise ConfigError("[run] boundary must be 'exact' or 'zero'")
        shape = self.raw("wave", "shape")
        if shape not in ("sine", "gauss", "wavepacket", "constant"):
            raise ConfigError(f"[wave] shape = {shape!r} is not supported")
        kind = self.raw("mesh", "kind")
        if kind not in ("cartesian", "warped", "curved-example", "file"):
            raise ConfigError(f"[mesh] kind = {kind!r} is not supported")
        split = self.getfloat("mesh", "split", optional=True)
        if split is not None and self.medium("right") is None:
            raise ConfigError(
                "[mesh] split set but [materials] right is missing"
            )
        if self.mode == "HYBRID" and split is None \
                and not self.getfloats("mesh", "dg_lines"):
            raise ConfigError(
                "HYBRID mode needs an interface: set [mesh] dg_lines or "
                "[mesh] split"
            )
        if shape != "constant":
            self.wave_spec()  # validates direction/omega/sigma ranges


@dataclass
class Problem:
    """Mesh, operator inputs, and reference solution for one run."""

    mesh: object
    init: object          # init(x, y) or init(element, x, y)
    exact: object         # exact(x, y, t) or exact(element, x, y, t); None
    boundary: object      # g(x, y, t, material) or None (g = 0)


def _build_mesh(cfg):
    kind = cfg.raw("mesh", "kind")
    n = cfg.degree
    all_dg = cfg.mode == "DG"
    left = cfg.medium("left")
    if kind == "file":
        path = cfg._optional("mesh", "mesh_file")
        if path is None:
            raise ConfigError("[mesh] kind = file needs mesh_file")
        return load_mesh(path)
    if kind == "curved-example":
        return curved_mesh_example(
            n, n_geom=cfg.getint("mesh", "n_geom"), medium=left,
            all_dg=all_dg,
        )
    box = cfg.getfloats("mesh", "box")
    if len(box) != 4:
        raise ConfigError("[mesh] box needs 'x0 x1 y0 y1'")
    nx, ny = cfg.getint("mesh", "nx"), cfg.getint("mesh", "ny")
    if kind == "warped":
        return warped_mesh(
            nx, ny, box, n, n_geom=cfg.getint("mesh", "n_geom"),
            amplitude=cfg.getfloat("mesh", "amplitude"), medium=left,
            all_dg=all_dg,
        )
    split = cfg.getfloat("mesh", "split", optional=True)
    materials = {0: left}
    if split is not None:
        materials[1] = cfg.medium("right")
    dg_lines = ()
    if cfg.mode == "HYBRID" and split is None:
        dg_lines = cfg.getfloats("mesh", "dg_lines")
    return cartesian_mesh(
        nx, ny, box, n, materials=materials, material_split=split,
        force_dg_lines=dg_lines, all_dg=all_dg,
    )


def _build_solution(cfg, mesh):
    """Exact solution / initial data / boundary data for the config."""
    shape = cfg.raw("wave", "shape")
    two_media = len(mesh.materials) > 1

    if shape == "constant":
        state = cfg.getfloats("wave", "state")
        if len(state) != 3:
            raise ConfigError("[wave] state needs 'p u v'")
        states = {0: np.asarray(state, dtype=float)}
        if two_media:
            states[1] = np.asarray(
                matched_interface_constants(
                    mesh.materials[0], mesh.materials[1], state
                )
            )

        def exact(element, x, y, t):
            base = states[mesh.elements[element].material]
            return np.broadcast_to(
                base[(slice(None),) + (None,) * np.ndim(x)],
                (3,) + np.shape(x),
            ).copy()

        def g(x, y, t, material):
            base = states[material]
            out = np.empty((3, np.size(x)))
            out[:] = base[:, None]
            return out

        return exact, g

    spec = cfg.wave_spec()
    if two_media:
        scatter = ScatteringSolution(
            mesh.materials[0], mesh.materials[1], spec
        )

        def exact(element, x, y, t):
            side = "left" if mesh.elements[element].material == 0 else "right"
            return scatter.evaluate(x, y, t, side)

        def g(x, y, t, material):
            side = "left" if material == 0 else "right"
            return scatter.evaluate(x, y, t, side)

        return exact, g

    medium = mesh.materials[0]

    def exact(x, y, t):
        return plane_wave_state(spec, medium, x, y, t)

    def g(x, y, t, material):
        return plane_wave_state(spec, medium, x, y, t)

    return exact, g


def build_problem(cfg):
    """Construct the mesh, initial data, and reference fields for a config."""
    mesh = _build_mesh(cfg)
    exact, g = _build_solution(cfg, mesh)
    if cfg.raw("run", "boundary") == "zero":
        g = None

    try:
        def init(x, y):
            return exact(x, y, 0.0)

        init(np.zeros((1, 1)), np.zeros((1, 1)))
    except TypeError:
        def init(element, x, y):
            return exact(element, x, y, 0.0)

    return Problem(mesh=mesh, init=init, exact=exact, boundary=g)


@dataclass
class RunReport:
    """Summary of one time-dependent run."""

    preset: str
    mode: str
    degree: int
    t_final: float
    dt: float
    steps: int
    wall_seconds: float
    max_rhs_initial: float
    max_err: float = None
    l2_err: float = None
    log10_max_err: float = None
    final_energy: float = None
    energy_csv: str = None

    def lines(self):
        out = [
            f"preset          {self.preset}",
            f"mode            {self.mode}",
            f"N               {self.degree}",
            f"t_final         {self.t_final:g}",
            f"dt              {self.dt:.6e}  ({self.steps} steps)",
            f"max |Udot(0)|   {self.max_rhs_initial:.6e}",
        ]
        if self.max_err is not None:
            out.append(f"max error       {self.max_err:.6e}"
                       f"  (log10 {self.log10_max_err:+.6f})")
            out.append(f"L2 error        {self.l2_err:.6e}")
        if self.final_energy is not None:
            out.append(f"final energy    {self.final_energy:.6e}")
        if self.energy_csv is not None:
            out.append(f"energy series   {self.energy_csv}")
        out.append(f"wall time       {self.wall_seconds:.2f} s")
        return out


def _timestep(cfg, mesh):
    dt = cfg.getfloat("run", "dt", optional=True)
    if dt is None:
        dt = stable_timestep(mesh, cfl=cfg.getfloat("run", "cfl"))
    if dt <= 0.0:
        raise ConfigError("[run] dt must be positive")
    return dt


def run(cfg, write_artifacts=True):
    """Execute one configured run and return a :class:`RunReport`.

    When ``[output] energy_series`` is on (and ``write_artifacts``), the
    sampled discrete energy is written to ``<dir>/<prefix>_energy.csv``.
    """
    problem = build_problem(cfg)
    mesh = problem.mesh
    op = SpatialOperator(mesh, boundary=problem.boundary)
    dt = _timestep(cfg, mesh)
    t_final = cfg.getfloat("run", "t_final")
    scheme = cfg.raw("run", "scheme")
    fields = project_fields(mesh, problem.init)
    max_rhs0 = float(np.abs(op.rhs(fields, 0.0)).max())

    start = time.perf_counter()
    energy_csv = None
    if cfg.getbool("output", "energy_series"):
        times, series, fields = record_energy_series(
            op, fields, t_final, dt,
            sample_dt=cfg.getfloat("output", "sample_dt"), scheme=scheme,
        )
        if write_artifacts:
            outdir = cfg.raw("output", "dir")
            os.makedirs(outdir, exist_ok=True)
            energy_csv = os.path.join(
                outdir, cfg.raw("output", "prefix") + "_energy.csv"
            )
            note = (f"preset={cfg.preset} mode={cfg.mode} N={cfg.degree} "
                    f"scheme={scheme}")
            write_energy_csv(energy_csv, times, series, note=note)
    elif t_final > 0.0:
        fields = run_to(fields, op.rhs, 0.0, t_final, dt, scheme=scheme)
    wall = time.perf_counter() - start

    steps = max(1, math.ceil(t_final / dt - 1e-12)) if t_final > 0 else 0
    report = RunReport(
        preset=cfg.preset, mode=cfg.mode, degree=cfg.degree,
        t_final=t_final, dt=dt, steps=steps, wall_seconds=wall,
        max_rhs_initial=max_rhs0,
        final_energy=float(discrete_energy(fields, mesh)),
        energy_csv=energy_csv,
    )
    if problem.exact is not None:
        report.max_err = float(max_error(fields, mesh, problem.exact,
                                         t_final))
        report.l2_err = float(l2_error(fields, mesh, problem.exact, t_final))
        report.log10_max_err = float(np.log10(report.max_err)) \
            if report.max_err > 0.0 else -math.inf
    return report


def sweep(cfg, degrees, write_artifacts=True):
    """Run the configured problem once per degree in ``degrees``.

    Returns ``(degrees, log10_errors, reports)`` and writes the
    convergence table to ``<dir>/<prefix>_convergence.csv``.  An empty
    degree list yields an empty table.
    """
    degrees = [int(n) for n in degrees]
    reports = []
    logs = []
    for n in degrees:
        sub = RunConfig.from_file(None, overrides={
            **{(s, k): v for s, items in cfg._table.items()
               for k, v in items.items()},
            ("run", "n"): str(n),
            ("output", "energy_series"): "false",
        })
        rep = run(sub, write_artifacts=False)
        reports.append(rep)
        logs.append(rep.log10_max_err)
    path = None
    if write_artifacts:
        outdir = cfg.raw("output", "dir")
        os.makedirs(outdir, exist_ok=True)
        path = os.path.join(
            outdir, cfg.raw("output", "prefix") + "_convergence.csv"
        )
        note = f"preset={cfg.preset} mode={cfg.mode}"
        write_convergence_csv(path, degrees, logs, note=note)
    return degrees, logs, path


# ---------------------------------------------------------------------------
# invariant check suite


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _check_operator_identities():
    worst = 0.0
    for n in range(1, 13):
        ops = operators(n)
        worst = max(worst,
                    np.abs(ops.Q + ops.Q.T - ops.boundary_matrix()).max())
        # quadrature exactness through degree 2n-1 and derivative
        # exactness through degree n, on monomials
        for k in range(2 * n):
            exact = (1.0 - (-1.0) ** (k + 1)) / (k + 1)
            worst = max(worst, abs(ops.weights @ ops.nodes**k - exact))
        for k in range(n + 1):
            dp = k * ops.nodes ** (k - 1) if k else np.zeros(n + 1)
            worst = max(worst, np.abs(ops.D @ ops.nodes**k - dp).max())
    return CheckResult(
        "operator-identities", worst < 1e-12,
        f"max defect {worst:.2e} over N=1..12",
    )


def _continuous_random_fields(mesh, seed):
    rng = np.random.default_rng(seed)
    glob = rng.standard_normal((3, mesh.n_nodes))
    fields = np.empty((len(mesh.elements), 3, mesh.N + 1, mesh.N + 1))
    for c in range(3):
        fields[:, c] = glob[c][mesh.node_ids]
    return fields


def _check_form_equivalence():
    mesh = warped_mesh(2, 2, (0.0, 1.0, 0.0, 1.0), 4, amplitude=0.08)
    op = SpatialOperator(mesh)
    fields = _continuous_random_fields(mesh, seed=5)
    results = [reference_time_derivative(op, fields, 0.0, form)
               for form in ("W", "S", "DS", "T")]
    worst = max(np.abs(r - results[0]).max() for r in results[1:])
    worst = max(worst, np.abs(op.rhs(fields, 0.0) - results[0]).max())
    return CheckResult(
        "form-equivalence", worst < 1e-12,
        f"forms W/S/DS/T and production rhs agree to {worst:.2e}",
    )


def _check_free_stream():
    state = np.array([1.0, 0.5, -0.25])

    def g(x, y, t, material):
        out = np.empty((3, np.size(x)))
        out[:] = state[:, None]
        return out

    mesh = curved_mesh_example(5, n_geom=5)
    op = SpatialOperator(mesh, boundary=g)
    fields = project_fields(
        mesh, lambda x, y: np.broadcast_to(
            state[:, None, None], (3,) + x.shape
        ).copy(),
    )
    worst = float(np.abs(op.rhs(fields, 0.0)).max())
    return CheckResult(
        "free-stream", worst < 1e-10,
        f"max |Udot| = {worst:.2e} at a constant state",
    )


def _check_conservation():
    mesh = cartesian_mesh(
        4, 4, (-1.0, 1.0, -1.0, 1.0), 5,
        materials={0: AcousticMedium(1.0, 1.0), 1: AcousticMedium(0.4, 0.7)},
        material_split=0.0,
    )

    def g(x, y, t, material):
        return np.stack([np.sin(3.0 * x) + t, np.cos(y), 0.2 * x * y])

    op = SpatialOperator(mesh, boundary=g)
    fields = _continuous_random_fields(mesh, seed=12)
    interior = op.total_state(op.rhs(fields, 0.5))
    flux = op.boundary_flux_total(fields, 0.5)
    worst = float(np.abs(interior + flux).max())
    return CheckResult(
        "conservation", worst < 1e-12,
        f"|sum(J w Udot) + boundary flux| = {worst:.2e}",
    )


def _check_interface_bounds():
    from .acoustics import (
        interface_characteristics,
        interface_energy_Q,
        interface_energy_QN,
        split_normal_matrix,
    )

    rng = np.random.default_rng(2024)
    medL = AcousticMedium(1.0, 1.0)
    medR = AcousticMedium(0.4, 0.7)
    worst_q = -np.inf
    worst_b = -np.inf
    for _ in range(200):
        normal = rng.standard_normal(2)
        normal /= np.hypot(*normal)
        UL = rng.standard_normal(3)
        UR = rng.standard_normal(3)
        data = interface_characteristics(medL, medR, UL, UR, normal)
        worst_q = max(worst_q,
                      interface_energy_QN(data, UL, UR)
                      - interface_energy_Q(data))
        Aplus, Aminus = split_normal_matrix(medL, normal[None, :])
        Aplus, Aminus = Aplus[0], Aminus[0]
        gex = rng.standard_normal(3)
        star = Aplus @ UL + Aminus @ gex
        ntilde = medL.normal_matrix(normal)
        lhs = -UL @ (star - 0.5 * ntilde @ UL)
        rhs = 0.5 * gex @ (-Aminus) @ gex
        worst_b = max(worst_b, lhs - rhs)
    ok = worst_q <= 1e-12 and worst_b <= 1e-12
    return CheckResult(
        "interface-bounds", ok,
        f"max(Q_N - Q) = {worst_q:.2e}, "
        f"max boundary-inequality defect = {worst_b:.2e}",
    )


def check():
    """Run the invariant suite; returns a list of :class:`CheckResult`."""
    return [
        _check_operator_identities(),
        _check_form_equivalence(),
        _check_free_stream(),
        _check_conservation(),
        _check_interface_bounds(),
    ]
