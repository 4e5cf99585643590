import numpy as np
import pytest

from hybridsem.basis import (
    SpectralOperators,
    deriv_eval_matrix,
    derivative_matrix,
    eval_matrix,
    interpolate_2d,
    lagrange_eval,
    lgl_nodes_weights,
    operators,
)


class TestNodesWeights:
    def test_linear_rule(self):
        nodes, weights = lgl_nodes_weights(1)
        assert np.allclose(nodes, [-1.0, 1.0], atol=1e-15)
        assert np.allclose(weights, [1.0, 1.0], atol=1e-15)

    def test_quadratic_rule(self):
        nodes, weights = lgl_nodes_weights(2)
        assert np.allclose(nodes, [-1.0, 0.0, 1.0], atol=1e-15)
        assert np.allclose(weights, [1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0], atol=1e-15)

    def test_rejects_degree_zero(self):
        with pytest.raises(ValueError):
            lgl_nodes_weights(0)

    @pytest.mark.parametrize("N", range(1, 13))
    def test_nodes_symmetric_and_sorted(self, N):
        nodes, weights = lgl_nodes_weights(N)
        assert nodes[0] == -1.0 and nodes[-1] == 1.0
        assert np.all(np.diff(nodes) > 0)
        assert np.allclose(nodes, -nodes[::-1], atol=1e-15)
        assert np.allclose(weights, weights[::-1], atol=1e-15)

    @pytest.mark.parametrize("N", range(1, 13))
    def test_weights_sum_to_two(self, N):
        _, weights = lgl_nodes_weights(N)
        assert abs(weights.sum() - 2.0) < 1e-13

    @pytest.mark.parametrize("N", range(1, 13))
    def test_quadrature_exact_to_2N_minus_1(self, N):
        nodes, weights = lgl_nodes_weights(N)
        rng = np.random.default_rng(100 + N)
        for _ in range(5):
            coeff = rng.uniform(-1, 1, size=2 * N)  # degree <= 2N-1
            vals = np.polynomial.polynomial.polyval(nodes, coeff)
            exact = sum(c * (1.0 - (-1.0) ** (k + 1)) / (k + 1)
                        for k, c in enumerate(coeff))
            err = abs(weights @ vals - exact)
            assert err < 1e-12, f"quadrature error {err:.2e} at N={N}"

    def test_quadrature_not_exact_beyond(self):
        # degree 2N integrand shows a genuine rule limit
        nodes, weights = lgl_nodes_weights(2)
        val = weights @ nodes**4
        assert abs(val - 2.0 / 5.0) > 1e-3


class TestDerivativeMatrix:
    def test_linear_case(self):
        D = derivative_matrix(np.array([-1.0, 1.0]))
        assert np.allclose(D, [[-0.5, 0.5], [-0.5, 0.5]], atol=1e-15)

    @pytest.mark.parametrize("N", range(1, 13))
    def test_row_sums_vanish(self, N):
        ops = operators(N)
        assert np.abs(ops.D.sum(axis=1)).max() < 1e-14

    @pytest.mark.parametrize("N", range(1, 13))
    def test_differentiates_polynomials_exactly(self, N):
        ops = operators(N)
        rng = np.random.default_rng(7 * N + 1)
        coeff = rng.uniform(-1, 1, size=N + 1)
        vals = np.polynomial.polynomial.polyval(ops.nodes, coeff)
        dvals = np.polynomial.polynomial.polyval(
            ops.nodes, np.polynomial.polynomial.polyder(coeff))
        err = np.abs(ops.D @ vals - dvals).max()
        assert err < 1e-12, f"derivative error {err:.2e} at N={N}"

    @pytest.mark.parametrize("N", range(1, 13))
    def test_summation_by_parts(self, N):
        ops = operators(N)
        Q = ops.Q
        err = np.abs(Q + Q.T - ops.boundary_matrix()).max()
        assert err < 1e-13, f"SBP identity error {err:.2e} at N={N}"

    @pytest.mark.parametrize("N", range(1, 13))
    def test_discrete_integration_by_parts(self, N):
        # <Du, v>_N + <u, Dv>_N = u_N v_N - u_0 v_0 for arbitrary nodal data
        ops = operators(N)
        rng = np.random.default_rng(31 * N)
        u = rng.standard_normal(N + 1)
        v = rng.standard_normal(N + 1)
        lhs = np.sum(ops.weights * (ops.D @ u) * v) + np.sum(ops.weights * u * (ops.D @ v))
        rhs = u[-1] * v[-1] - u[0] * v[0]
        assert abs(lhs - rhs) < 1e-12


class TestLagrangeBasis:
    def test_midpoint_value(self):
        ops = operators(2)
        assert abs(lagrange_eval(ops, 1, 0.5) - 0.75) < 1e-15

    def test_cardinality(self):
        ops = operators(6)
        for l in range(7):
            vals = lagrange_eval(ops, l, ops.nodes)
            expect = np.zeros(7)
            expect[l] = 1.0
            assert np.allclose(vals, expect, atol=1e-12)

    def test_bad_index_raises(self):
        ops = operators(3)
        with pytest.raises(IndexError):
            lagrange_eval(ops, 4, 0.0)
        with pytest.raises(IndexError):
            lagrange_eval(ops, -1, 0.0)

    @pytest.mark.parametrize("N", [3, 7, 12])
    def test_partition_of_unity(self, N):
        ops = operators(N)
        pts = np.linspace(-1, 1, 17)
        total = sum(lagrange_eval(ops, l, pts) for l in range(N + 1))
        assert np.abs(total - 1.0).max() < 1e-12

    def test_deriv_eval_matrix_consistency(self):
        # at the nodes the arbitrary-point derivative rows equal D rows
        ops = operators(5)
        Ed = deriv_eval_matrix(ops, ops.nodes)
        assert np.abs(Ed - ops.D).max() < 1e-12

    def test_deriv_eval_matrix_offnode(self):
        ops = operators(5)
        rng = np.random.default_rng(5)
        coeff = rng.uniform(-1, 1, size=6)
        pts = np.array([-0.83, 0.02, 0.641])
        Ed = deriv_eval_matrix(ops, pts)
        vals = np.polynomial.polynomial.polyval(ops.nodes, coeff)
        dexact = np.polynomial.polynomial.polyval(
            pts, np.polynomial.polynomial.polyder(coeff))
        assert np.abs(Ed @ vals - dexact).max() < 1e-11


class TestTensorInterpolation:
    def test_bilinear_example(self):
        ops = operators(2)
        xi, eta = np.meshgrid(ops.nodes, ops.nodes, indexing="ij")
        vals = xi * eta
        assert abs(interpolate_2d(ops, vals, 0.3, -0.2) - (-0.06)) < 1e-14

    @pytest.mark.parametrize("N", [2, 5, 9])
    def test_reproduces_tensor_polynomials(self, N):
        ops = operators(N)
        rng = np.random.default_rng(N)
        cx = rng.uniform(-1, 1, size=N + 1)
        cy = rng.uniform(-1, 1, size=N + 1)
        fx = np.polynomial.polynomial.polyval(ops.nodes, cx)
        fy = np.polynomial.polynomial.polyval(ops.nodes, cy)
        vals = np.outer(fx, fy)
        for xi, eta in [(-0.7, 0.33), (0.0, 0.99), (0.512, -0.512)]:
            expect = (np.polynomial.polynomial.polyval(xi, cx)
                      * np.polynomial.polynomial.polyval(eta, cy))
            assert abs(interpolate_2d(ops, vals, xi, eta) - expect) < 1e-11

    def test_vector_values(self):
        ops = operators(3)
        rng = np.random.default_rng(2)
        vals = rng.standard_normal((4, 4, 3))
        out = interpolate_2d(ops, vals, 0.1, 0.2)
        assert out.shape == (3,)

    def test_outside_point_rejected(self):
        ops = operators(2)
        with pytest.raises(ValueError):
            interpolate_2d(ops, np.zeros((3, 3)), 1.5, 0.0)


class TestEvalMatrix:
    def test_interpolates_between_grids(self):
        coarse = operators(4)
        fine = operators(9)
        E = eval_matrix(coarse, fine.nodes)
        coeff = np.array([0.3, -1.2, 0.5, 2.0, -0.25])
        vals = np.polynomial.polynomial.polyval(coarse.nodes, coeff)
        expect = np.polynomial.polynomial.polyval(fine.nodes, coeff)
        assert np.abs(E @ vals - expect).max() < 1e-12


def test_operator_cache_returns_same_object():
    assert operators(4) is operators(4)
