"""Tests for the explicit Runge-Kutta schemes and CFL step selection."""

import math

import numpy as np
import pytest

from hybridsem.acoustics import AcousticMedium
from hybridsem.mesh import cartesian_mesh
from hybridsem.solutions import WaveSpec, plane_wave_state
from hybridsem.spatial import SpatialOperator, project_fields
from hybridsem.timestepping import SCHEMES, advance, run_to, stable_timestep


def integrate_linear(lam, u0, t_end, nsteps, scheme):
    u = np.array([u0])
    dt = t_end / nsteps
    rhs = lambda state, t: lam * state
    for k in range(nsteps):
        u = advance(u, k * dt, dt, rhs, scheme)
    return u[0]


class TestSchemes:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_linear_ode_fourth_order(self, scheme):
        lam, u0, T = -1.3, 0.7, 2.0
        exact = u0 * math.exp(lam * T)
        errs = [abs(integrate_linear(lam, u0, T, n, scheme) - exact)
                for n in (20, 40, 80)]
        orders = np.log2(np.array(errs[:-1]) / errs[1:])
        assert orders.min() > 3.9

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_cubic_time_quadrature_exact(self, scheme):
        # u' = t^3 is integrated without error by any fourth-order scheme,
        # which pins down the stage-time coefficients
        u = np.array([0.0])
        rhs = lambda state, t: np.array([t ** 3])
        for k in range(5):
            u = advance(u, 0.4 * k, 0.4, rhs, scheme)
        assert u[0] == pytest.approx(2.0 ** 4 / 4.0, abs=1e-13)

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_zero_rhs_keeps_state(self, scheme):
        state = np.random.default_rng(3).standard_normal((2, 3, 4))
        out = advance(state, 0.0, 0.1, lambda u, t: np.zeros_like(u), scheme)
        assert np.array_equal(out, state)

    def test_unknown_scheme_raises(self):
        with pytest.raises(ValueError, match="scheme"):
            advance(np.zeros(2), 0.0, 0.1, lambda u, t: u, "euler")

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_nonfinite_state_aborts(self, scheme):
        rhs = lambda u, t: np.full_like(u, np.nan)
        with pytest.raises(FloatingPointError, match="non-finite"):
            advance(np.ones(3), 0.0, 0.1, rhs, scheme)


class TestRunTo:
    def test_lands_exactly_with_uniform_steps(self):
        times = []

        def rhs(u, t):
            times.append(t)
            return np.zeros_like(u)

        out = run_to(np.zeros(1), rhs, 0.25, 1.0, 0.2)
        assert len(times) == 4 * 5  # four steps, five stages each
        starts = times[::5]
        assert starts == pytest.approx([0.25, 0.4375, 0.625, 0.8125])

    def test_matches_manual_stepping(self):
        rhs = lambda u, t: -u + np.sin(t)
        u = np.array([1.0, -0.5])
        manual = u.copy()
        for k in range(5):
            manual = advance(manual, 0.1 * k, 0.1, rhs)
        stepped = run_to(u, rhs, 0.0, 0.5, 0.1)
        assert stepped == pytest.approx(manual, abs=1e-14)

    def test_no_op_when_already_there(self):
        u = np.ones(4)
        assert run_to(u, None, 1.0, 1.0, 0.1) is u
        assert run_to(u, None, 1.0, 0.5, 0.1) is u


class TestStableTimestep:
    def test_hand_evaluated_cartesian_formula(self):
        mesh = cartesian_mesh(20, 20, (-5.0, 5.0, -5.0, 5.0), N=9)
        # elements of size 0.5: J = 1/16, |Ja1| + |Ja2| = 1/2, c = 1
        assert stable_timestep(mesh, cfl=0.5) == pytest.approx(
            0.5 * 0.125 / 19.0, rel=1e-13)

    def test_halving_elements_halves_step(self):
        box = (-5.0, 5.0, -5.0, 5.0)
        coarse = stable_timestep(cartesian_mesh(10, 10, box, N=5))
        fine = stable_timestep(cartesian_mesh(20, 20, box, N=5))
        assert coarse == pytest.approx(2.0 * fine, rel=1e-13)

    def test_doubling_wave_speed_halves_step(self):
        box = (0.0, 1.0, 0.0, 1.0)
        slow = cartesian_mesh(4, 4, box, N=4,
                              materials={0: AcousticMedium(1.0, 1.0)})
        fast = cartesian_mesh(4, 4, box, N=4,
                              materials={0: AcousticMedium(1.0, 2.0)})
        assert stable_timestep(slow) == pytest.approx(
            2.0 * stable_timestep(fast), rel=1e-13)

    def test_multiple_materials_use_local_speed(self):
        media = {0: AcousticMedium(1.0, 1.0), 1: AcousticMedium(1.0, 3.0)}
        split = cartesian_mesh(4, 2, (-1.0, 1.0, 0.0, 1.0), N=3,
                               materials=media, material_split=0.0)
        fast = cartesian_mesh(4, 2, (-1.0, 1.0, 0.0, 1.0), N=3,
                              materials={0: AcousticMedium(1.0, 3.0)})
        assert stable_timestep(split) == pytest.approx(
            stable_timestep(fast), rel=1e-13)


class TestWaveRun:
    def test_time_error_below_spatial_error(self):
        """Halving dt barely moves the error: space dominates at CFL 0.4."""
        spec = WaveSpec(direction=(1.0, 0.0))
        med = AcousticMedium(1.0, 1.0)
        mesh = cartesian_mesh(4, 4, (0.0, 2.0, 0.0, 2.0), N=5)

        def g(x, y, t, material):
            return plane_wave_state(spec, med, x, y, t)

        op = SpatialOperator(mesh, boundary=g)
        errors = []
        for dt in (stable_timestep(mesh), 0.5 * stable_timestep(mesh)):
            fields = project_fields(
                mesh, lambda x, y: plane_wave_state(spec, med, x, y, 0.0))
            fields = run_to(fields, op.rhs, 0.0, 0.5, dt)
            exact = project_fields(
                mesh, lambda x, y: plane_wave_state(spec, med, x, y, 0.5))
            errors.append(np.abs(fields - exact).max())
        assert errors[0] > 0.0
        assert abs(errors[1] - errors[0]) < 0.01 * errors[0]

    def test_free_stream_preserved_over_many_steps(self):
        mesh = cartesian_mesh(3, 3, (0.0, 1.0, 0.0, 1.0), N=4)
        state = np.array([0.3, -1.1, 0.8])

        def g(x, y, t, material):
            return np.broadcast_to(state[:, None], (3, x.size))

        op = SpatialOperator(mesh, boundary=g)
        fields = project_fields(
            mesh, lambda x, y: np.broadcast_to(
                state[:, None, None], (3,) + x.shape).copy())
        out = run_to(fields, op.rhs, 0.0, 1.0, stable_timestep(mesh))
        assert np.abs(out - fields).max() < 1e-13
