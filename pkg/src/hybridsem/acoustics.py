"""Two-dimensional linear acoustics: coefficient matrices and fluxes.

State vector U = (p, u, v): pressure and the two velocity components.
The system is

    U_t + A1 U_x + A2 U_y = 0,

with piecewise-constant material coefficients rho (density) and c (sound
speed).  S = diag(c, 1/rho, 1/rho) symmetrizes both coefficient matrices
simultaneously, so all characteristic quantities are computed in the
symmetry variables U^s = S^{-1} U and converted back.  Numerical fluxes
never use closed-form acoustic eigenvectors: the normal coefficient
matrix is diagonalized generically in the symmetric frame.
"""

from dataclasses import dataclass
from functools import cached_property
from types import SimpleNamespace

import numpy as np

_ZERO_EIG_REL = 1.0e-10


@dataclass(frozen=True)
class AcousticMedium:
    """Constant material data (rho, c) with the derived matrices."""

    rho: float
    c: float

    def __post_init__(self):
        if self.rho <= 0 or self.c <= 0:
            raise ValueError(f"need rho > 0 and c > 0, got rho={self.rho}, c={self.c}")

    @cached_property
    def A1(self):
        rho, c = self.rho, self.c
        return np.array([[0.0, rho * c * c, 0.0],
                         [1.0 / rho, 0.0, 0.0],
                         [0.0, 0.0, 0.0]])

    @cached_property
    def A2(self):
        rho, c = self.rho, self.c
        return np.array([[0.0, 0.0, rho * c * c],
                         [0.0, 0.0, 0.0],
                         [1.0 / rho, 0.0, 0.0]])

    @cached_property
    def S(self):
        return np.diag([self.c, 1.0 / self.rho, 1.0 / self.rho])

    @cached_property
    def Sinv(self):
        return np.diag([1.0 / self.c, self.rho, self.rho])

    def normal_matrix(self, ntilde):
        """A(n) = n1 A1 + n2 A2 for a (possibly scaled) normal, batched ok."""
        n = np.asarray(ntilde, dtype=float)
        return n[..., 0, None, None] * self.A1 + n[..., 1, None, None] * self.A2

    def normal_matrix_sym(self, ntilde):
        """Symmetric-frame normal matrix S^{-1} A(n) S, batched ok."""
        return np.einsum("ab,...bc,cd->...ad", self.Sinv, self.normal_matrix(ntilde), self.S)

    @property
    def impedance(self):
        return self.rho * self.c


def physical_flux(medium, state):
    """Flux pair (A1 U, A2 U); state may be batched with trailing axis 3."""
    U = np.asarray(state, dtype=float)
    return U @ medium.A1.T, U @ medium.A2.T


def to_symmetry_vars(medium, state):
    return np.asarray(state, dtype=float) @ medium.Sinv.T


def from_symmetry_vars(medium, sym_state):
    return np.asarray(sym_state, dtype=float) @ medium.S.T


@dataclass(frozen=True)
class NormalDecomposition:
    """Eigendecomposition of the symmetric-frame normal matrix.

    P is orthonormal with columns ordered (positive, negative, zero
    eigenvalue); lam holds the matching eigenvalues.  For acoustics the
    nonzero ones are +/- c * |ntilde|.
    """

    medium: AcousticMedium
    ntilde: np.ndarray
    P: np.ndarray
    lam: np.ndarray

    @property
    def scale(self):
        return float(np.hypot(self.ntilde[0], self.ntilde[1]))

    def char_vars(self, state):
        """w = P^T S^{-1} U, ordered like lam."""
        return self.P.T @ (self.medium.Sinv @ np.asarray(state, dtype=float))

    def abs_matrix_sym(self):
        return self.P @ np.diag(np.abs(self.lam)) @ self.P.T

    def abs_matrix(self):
        """|A(n)| in the conservative frame: S P |Lam| P^T S^{-1}."""
        return self.medium.S @ self.abs_matrix_sym() @ self.medium.Sinv


def _partition_order(lam, tol):
    pos = [k for k in range(lam.size) if lam[k] > tol]
    neg = [k for k in range(lam.size) if lam[k] < -tol]
    zer = [k for k in range(lam.size) if abs(lam[k]) <= tol]
    return pos + neg + zer


def normal_decomposition(medium, ntilde):
    """Diagonalize the normal matrix in the symmetric frame.

    Uses a generic symmetric eigensolver; eigenvalues are reordered into
    (positive, negative, zero) blocks.
    """
    n = np.asarray(ntilde, dtype=float)
    As = medium.normal_matrix_sym(n)
    lam, P = np.linalg.eigh(As)
    tol = _ZERO_EIG_REL * max(np.abs(lam).max(), 1.0)
    order = _partition_order(lam, tol)
    return NormalDecomposition(medium=medium, ntilde=n, P=P[:, order], lam=lam[order])


def abs_normal_matrix(medium, ntilde):
    """|A(n)| = S P |Lam| P^T S^{-1}, batched over leading axes of ntilde."""
    n = np.asarray(ntilde, dtype=float)
    As = medium.normal_matrix_sym(n)
    lam, P = np.linalg.eigh(As)
    abs_sym = np.einsum("...ik,...k,...jk->...ij", P, np.abs(lam), P)
    return np.einsum("ab,...bc,cd->...ad", medium.S, abs_sym, medium.Sinv)


def split_normal_matrix(medium, ntilde):
    """Pair (A^+, A^-) with A^{+/-} = (A +/- |A|)/2, batched ok."""
    A = medium.normal_matrix(ntilde)
    Aabs = abs_normal_matrix(medium, ntilde)
    return 0.5 * (A + Aabs), 0.5 * (A - Aabs)


def upwind_flux_uniform(medium, state_left, state_right, ntilde):
    """Upwind flux for a uniform medium: A <U> - |A| [U]/2.

    The jump is right minus left with ntilde pointing from left to right.
    Batched over leading axes when states/ntilde carry them.
    """
    UL = np.asarray(state_left, dtype=float)
    UR = np.asarray(state_right, dtype=float)
    A = medium.normal_matrix(ntilde)
    Aabs = abs_normal_matrix(medium, ntilde)
    avg = 0.5 * (UL + UR)
    jump = UR - UL
    return (np.einsum("...ab,...b->...a", A, avg)
            - 0.5 * np.einsum("...ab,...b->...a", Aabs, jump))


def interface_characteristics(med_left, med_right, state_left, state_right, ntilde):
    """Characteristic data for the two-medium interface Riemann problem.

    Upwinds the outgoing characteristics and solves the flux-continuity
    condition for the transmitted ones: with P_side the conservative-frame
    eigenvectors S_side P^s_side,

        P_L Lam_L (w_L^+, w*^-, .) = P_R Lam_R (w*^+, w_R^-, .)

    restricted to the nonzero-speed characteristics.  The 3x2 system is
    solved by least squares and must be consistent; the residual is
    checked.  Returns the full characteristic bookkeeping plus the flux.
    """
    dL = normal_decomposition(med_left, ntilde)
    dR = normal_decomposition(med_right, ntilde)
    wL = dL.char_vars(state_left)
    wR = dR.char_vars(state_right)

    # conservative-frame eigenvector columns for the +/- characteristics
    colLp = med_left.S @ dL.P[:, 0]
    colLm = med_left.S @ dL.P[:, 1]
    colRp = med_right.S @ dR.P[:, 0]
    colRm = med_right.S @ dR.P[:, 1]

    A = np.column_stack([dR.lam[0] * colRp, -dL.lam[1] * colLm])
    b = dL.lam[0] * wL[0] * colLp - dR.lam[1] * wR[1] * colRm
    x, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < 2:
        raise np.linalg.LinAlgError("singular characteristic interface system")
    resid = np.abs(A @ x - b).max()
    scale = max(np.abs(b).max(), 1.0)
    if resid > 1e-10 * scale:
        raise np.linalg.LinAlgError(
            f"inconsistent interface jump system, residual {resid:.2e}")
    ws_plus, ws_minus = x
    flux = dL.lam[0] * wL[0] * colLp + dL.lam[1] * ws_minus * colLm
    return SimpleNamespace(left=dL, right=dR, wL=wL, wR=wR,
                           ws_plus=ws_plus, ws_minus=ws_minus, flux=flux)


def upwind_flux_interface(med_left, med_right, state_left, state_right, ntilde):
    """Upwind flux across a material interface (ntilde points left to right)."""
    return interface_characteristics(
        med_left, med_right, state_left, state_right, ntilde).flux


def two_point_flux(medium, state_a, state_b, ntilde_a, ntilde_b):
    """Volume two-point flux <A(n)> <U> between collocation points a, b."""
    Ua = np.asarray(state_a, dtype=float)
    Ub = np.asarray(state_b, dtype=float)
    Aavg = 0.5 * (medium.normal_matrix(ntilde_a) + medium.normal_matrix(ntilde_b))
    return np.einsum("...ab,...b->...a", Aavg, 0.5 * (Ua + Ub))


def interface_energy_Q(data):
    """Continuous-interface energy functional Q of the characteristic traces.

    Q = -1/2 (w_L^+ lam_L^+ w_L^+ - w*^+ lam_R^+ w*^+)
        -1/2 (w_R^- |lam_R^-| w_R^- - w*^- |lam_L^-| w*^-).
    """
    lamLp, lamLm = data.left.lam[0], data.left.lam[1]
    lamRp, lamRm = data.right.lam[0], data.right.lam[1]
    qp = data.wL[0] ** 2 * lamLp - data.ws_plus ** 2 * lamRp
    qm = data.wR[1] ** 2 * abs(lamRm) - data.ws_minus ** 2 * abs(lamLm)
    return -0.5 * (qp + qm)


def interface_energy_QN(data, state_left, state_right):
    """Discrete interface energy contribution of the upwind flux.

    Q_N = [[U^s.T F^s*]] - 1/2 [[U^s.T A^s(n) U^s]], with each side's own
    symmetrizer applied to the single-valued conservative flux.
    """
    medL, medR = data.left.medium, data.right.medium
    usL = medL.Sinv @ np.asarray(state_left, dtype=float)
    usR = medR.Sinv @ np.asarray(state_right, dtype=float)
    FsL = medL.Sinv @ data.flux
    FsR = medR.Sinv @ data.flux
    AsL = medL.normal_matrix_sym(data.left.ntilde)
    AsR = medR.normal_matrix_sym(data.right.ntilde)
    term_star = usR @ FsR - usL @ FsL
    term_flux = usR @ AsR @ usR - usL @ AsL @ usL
    return term_star - 0.5 * term_flux
