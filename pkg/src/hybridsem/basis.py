"""Legendre-Gauss-Lobatto collocation operators on [-1, 1].

All spatial operators in the solver are built from the one-dimensional
nodal Lagrange basis on the LGL points: the quadrature rule (exact for
polynomials up to degree 2N-1), the collocation derivative matrix, and
interpolation to arbitrary points.  The derivative matrix satisfies the
summation-by-parts relation

    W @ D + (W @ D).T == diag(-1, 0, ..., 0, 1)

with W the diagonal quadrature weight matrix, which is what the energy
estimates of the scheme rest on.
"""

from dataclasses import dataclass, field

import numpy as np

_NEWTON_TOL = 1.0e-15
_NEWTON_MAXIT = 50


def legendre_poly(N, x):
    """Evaluate P_N and P_N' at x via the three-term recurrence.

    Args:
        N: polynomial degree (>= 0).
        x: scalar or ndarray of evaluation points.

    Returns:
        (P, dP): values of the Legendre polynomial and its derivative.
    """
    x = np.asarray(x, dtype=float)
    p_prev = np.ones_like(x)
    if N == 0:
        return p_prev, np.zeros_like(x)
    p = x.copy()
    dp_prev = np.zeros_like(x)
    dp = np.ones_like(x)
    for k in range(2, N + 1):
        p_next = ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
        dp_next = dp_prev + (2 * k - 1) * p
        p_prev, p = p, p_next
        dp_prev, dp = dp, dp_next
    return p, dp


def lgl_nodes_weights(N):
    """Nodes and quadrature weights of the (N+1)-point LGL rule.

    Interior nodes are the roots of P_N', found by Newton iteration from
    Chebyshev-Gauss-Lobatto initial guesses; the Legendre ODE collapses
    the Newton update for q(s) = (1-s^2) P_N'(s) to

        s <- s + (1 - s^2) P_N'(s) / (N (N+1) P_N(s)).

    Weights are 2 / (N (N+1) P_N(s)^2).  Raises ValueError for N < 1.
    """
    if N < 1:
        raise ValueError(f"LGL rule needs N >= 1, got {N}")
    nodes = np.empty(N + 1)
    nodes[0], nodes[N] = -1.0, 1.0
    for i in range(1, N):
        s = -np.cos(np.pi * i / N)
        for _ in range(_NEWTON_MAXIT):
            p, dp = legendre_poly(N, s)
            ds = (1.0 - s * s) * dp / (N * (N + 1) * p)
            s += ds
            if abs(ds) < _NEWTON_TOL:
                break
        nodes[i] = s
    # enforce exact symmetry about the origin
    nodes = 0.5 * (nodes - nodes[::-1])
    p, _ = legendre_poly(N, nodes)
    weights = 2.0 / (N * (N + 1) * p * p)
    return nodes, weights


def barycentric_weights(nodes):
    """Barycentric weights b_l = 1 / prod_{m != l} (s_l - s_m)."""
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / diff.prod(axis=1)


def derivative_matrix(nodes):
    """Collocation derivative matrix D[i, n] = l_n'(s_i).

    Off-diagonal entries come from the barycentric form; the diagonal is
    set to the negative row sum so every row annihilates constants
    exactly (in floating point, not just analytically).
    """
    b = barycentric_weights(nodes)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    D = (b[None, :] / b[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


@dataclass(frozen=True)
class SpectralOperators:
    """Bundle of 1D collocation data for polynomial degree N."""

    N: int
    nodes: np.ndarray
    weights: np.ndarray
    D: np.ndarray
    bary: np.ndarray = field(repr=False)

    @classmethod
    def create(cls, N):
        nodes, weights = lgl_nodes_weights(N)
        return cls(N=N, nodes=nodes, weights=weights,
                   D=derivative_matrix(nodes), bary=barycentric_weights(nodes))

    @property
    def Q(self):
        """SBP matrix Q = W D."""
        return self.weights[:, None] * self.D

    def boundary_matrix(self):
        B = np.zeros((self.N + 1, self.N + 1))
        B[0, 0], B[-1, -1] = -1.0, 1.0
        return B


_ops_cache = {}


def operators(N):
    """Cached SpectralOperators for degree N."""
    if N not in _ops_cache:
        _ops_cache[N] = SpectralOperators.create(N)
    return _ops_cache[N]


def lagrange_eval(ops, l, s):
    """Value of the l-th cardinal function at point(s) s in [-1, 1]."""
    if not 0 <= l <= ops.N:
        raise IndexError(f"basis index {l} out of range 0..{ops.N}")
    s = np.asarray(s, dtype=float)
    others = np.delete(np.arange(ops.N + 1), l)
    num = (s[..., None] - ops.nodes[others]).prod(axis=-1)
    den = (ops.nodes[l] - ops.nodes[others]).prod()
    return num / den


def eval_matrix(ops, points):
    """Matrix E with E[a, l] = l_l(points[a]); rows interpolate nodal data."""
    points = np.atleast_1d(np.asarray(points, dtype=float))
    E = np.empty((points.size, ops.N + 1))
    for l in range(ops.N + 1):
        E[:, l] = lagrange_eval(ops, l, points)
    return E


def deriv_eval_matrix(ops, points):
    """Matrix Ed with Ed[a, l] = l_l'(points[a]) at arbitrary points."""
    points = np.atleast_1d(np.asarray(points, dtype=float))
    n = ops.N + 1
    Ed = np.empty((points.size, n))
    for a, x in enumerate(points):
        hit = np.nonzero(np.abs(x - ops.nodes) < 1e-13)[0]
        if hit.size:
            Ed[a, :] = ops.D[hit[0], :]
            continue
        for l in range(n):
            others = np.delete(np.arange(n), l)
            ll = (x - ops.nodes[others]).prod() / (ops.nodes[l] - ops.nodes[others]).prod()
            Ed[a, l] = ll * (1.0 / (x - ops.nodes[others])).sum()
    return Ed


def interpolate_2d(ops, values, xi, eta):
    """Evaluate the tensor-product interpolant of nodal values at (xi, eta).

    values has shape (N+1, N+1, ...) indexed [i, j] over the xi/eta grid.
    Points outside [-1, 1]^2 are rejected.
    """
    if not (-1.0 - 1e-12 <= xi <= 1.0 + 1e-12 and -1.0 - 1e-12 <= eta <= 1.0 + 1e-12):
        raise ValueError(f"point ({xi}, {eta}) outside reference square")
    lx = eval_matrix(ops, xi)[0]
    ly = eval_matrix(ops, eta)[0]
    return np.einsum("i,j,ij...->...", lx, ly, values)
