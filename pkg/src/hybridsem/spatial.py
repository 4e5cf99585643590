"""Semi-discrete spatial operator for the hybrid CG/DG spectral element method.

The production path evaluates the two-point flux volume kernel plus upwind
surface corrections on DG and physical-boundary faces, then closes the system
with a stiffness summation over shared continuous-Galerkin nodes.  Literal
reference implementations of the weak, strong, directly-stable, and two-point
residual forms are provided for equivalence testing; they are slow on purpose.
"""

import numpy as np

from .acoustics import split_normal_matrix, upwind_flux_interface
from .basis import operators

__all__ = [
    "SpatialOperator",
    "project_fields",
    "zero_fields",
    "reference_residual",
    "reference_time_derivative",
]


def _side_flat_indices(N, side):
    """Flat (i*(N+1)+j) indices of the nodes on one element side.

    Ordering follows the running side coordinate, matching side_trace.
    """
    n = N + 1
    idx = np.arange(n)
    if side == 0:
        return idx * n
    if side == 1:
        return N * n + idx
    if side == 2:
        return idx * n + N
    if side == 3:
        return idx.copy()
    raise ValueError(f"side must be 0..3, got {side}")


def zero_fields(mesh):
    n = mesh.N + 1
    return np.zeros((len(mesh), 3, n, n))


def project_fields(mesh, init):
    """Collocate an initializer.

    init may be init(x, y) -> (3, ...) arrays, or a per-element callable
    init(e, x, y) when the data is side-dependent (material interfaces).
    """
    fields = zero_fields(mesh)
    for e, elem in enumerate(mesh.elements):
        try:
            fields[e] = init(elem.X, elem.Y)
        except TypeError:
            fields[e] = init(e, elem.X, elem.Y)
    return fields


class _FaceBatch:
    """Vectorized per-point data for a set of non-CG faces."""

    __slots__ = ("eL", "idxL", "eR", "idxR", "ML", "MR", "AnL", "AnR",
                 "x", "y", "material", "n_faces")

    def __init__(self):
        self.n_faces = 0


class SpatialOperator:
    """Right-hand-side evaluator  U_t = L(U, t)  on a hybrid mesh.

    Parameters
    ----------
    mesh : HybridMesh
    boundary : callable or None
        Exterior-state provider g(x, y, t, material_id) -> (3, npts) used in
        the upwind flux at physical boundaries.  None means g = 0.
    """

    def __init__(self, mesh, boundary=None):
        self.mesh = mesh
        self.boundary = boundary
        N = mesh.N
        self.N = N
        n = N + 1
        self.ops = operators(N)
        self.D = self.ops.D
        w = self.ops.weights
        self.w2 = np.outer(w, w)
        E = len(mesh)

        self.J = np.stack([el.J for el in mesh.elements])
        self.X = np.stack([el.X for el in mesh.elements])
        self.Y = np.stack([el.Y for el in mesh.elements])
        Ja1 = np.stack([el.Ja1 for el in mesh.elements])
        Ja2 = np.stack([el.Ja2 for el in mesh.elements])

        self.At1 = np.empty((E, n, n, 3, 3))
        self.At2 = np.empty((E, n, n, 3, 3))
        mdiv = (np.einsum("in,enjd->eijd", self.D, Ja1)
                + np.einsum("jn,eind->eijd", self.D, Ja2))
        self.mdivA = np.empty((E, n, n, 3, 3))
        for e, elem in enumerate(mesh.elements):
            med = mesh.medium(e)
            A1, A2 = med.A1, med.A2
            self.At1[e] = Ja1[e, :, :, 0, None, None] * A1 \
                + Ja1[e, :, :, 1, None, None] * A2
            self.At2[e] = Ja2[e, :, :, 0, None, None] * A1 \
                + Ja2[e, :, :, 1, None, None] * A2
            self.mdivA[e] = mdiv[e, :, :, 0, None, None] * A1 \
                + mdiv[e, :, :, 1, None, None] * A2

        # flat metric coefficients and per-material element groups for the
        # vectorized volume kernel
        K = E * n * n
        self._ja = [Ja1[..., 0].reshape(K), Ja1[..., 1].reshape(K),
                    Ja2[..., 0].reshape(K), Ja2[..., 1].reshape(K)]
        self._mdiv = [mdiv[..., 0].reshape(K), mdiv[..., 1].reshape(K)]
        groups = {}
        for e in range(E):
            groups.setdefault(mesh.elements[e].material, []).append(e)
        self._mat_groups = []
        for mat, eids in groups.items():
            med = mesh.materials[mat]
            AA = np.vstack([med.A1, med.A2])
            if len(eids) == E:
                cols = slice(None)
            else:
                cols = (np.asarray(eids)[:, None] * n * n
                        + np.arange(n * n)).ravel()
            self._mat_groups.append((cols, AA))

        self.node_flat = mesh.node_ids.reshape(E, n * n)
        self.denom = np.bincount(self.node_flat.ravel(),
                                 weights=(self.J * self.w2).ravel(),
                                 minlength=mesh.n_nodes)

        self._side_idx = [_side_flat_indices(N, s) for s in range(4)]
        self.dg = self._build_interior_batch()
        self.bnd = self._build_boundary_batch()

    # -- setup helpers ----------------------------------------------------

    def _outward_normals(self, e, side):
        elem = self.mesh.elements[e]
        return elem.face_jacobian[side][:, None] * elem.face_normal[side]

    def _flux_matrices(self, med_left, med_right, ntilde):
        """Per-point matrices (ML, MR) with F* = ML @ U_L + MR @ U_R."""
        if med_left is med_right or (med_left.rho == med_right.rho
                                     and med_left.c == med_right.c):
            return split_normal_matrix(med_left, ntilde)
        npts = ntilde.shape[0]
        ML = np.empty((npts, 3, 3))
        MR = np.empty((npts, 3, 3))
        zero = np.zeros(3)
        for p in range(npts):
            for k in range(3):
                ek = np.zeros(3)
                ek[k] = 1.0
                ML[p, :, k] = upwind_flux_interface(
                    med_left, med_right, ek, zero, ntilde[p])
                MR[p, :, k] = upwind_flux_interface(
                    med_left, med_right, zero, ek, ntilde[p])
        return ML, MR

    def _build_interior_batch(self):
        mesh = self.mesh
        faces = [f for f in mesh.faces if f.kind == "DG"]
        batch = _FaceBatch()
        batch.n_faces = len(faces)
        if not faces:
            return batch
        n = self.N + 1
        F = len(faces)
        batch.eL = np.empty(F, dtype=int)
        batch.eR = np.empty(F, dtype=int)
        batch.idxL = np.empty((F, n), dtype=int)
        batch.idxR = np.empty((F, n), dtype=int)
        batch.ML = np.empty((F, n, 3, 3))
        batch.MR = np.empty((F, n, 3, 3))
        batch.AnL = np.empty((F, n, 3, 3))
        batch.AnR = np.empty((F, n, 3, 3))
        for k, f in enumerate(faces):
            eL, sL = f.left
            eR, sR = f.right
            batch.eL[k] = eL
            batch.eR[k] = eR
            batch.idxL[k] = self._side_idx[sL]
            right_idx = self._side_idx[sR]
            batch.idxR[k] = right_idx[::-1] if f.reversed else right_idx
            nL = self._outward_normals(eL, sL)
            nR_own = self._outward_normals(eR, sR)
            nR = nR_own[::-1] if f.reversed else nR_own
            medL = mesh.medium(eL)
            medR = mesh.medium(eR)
            batch.ML[k], batch.MR[k] = self._flux_matrices(medL, medR, nL)
            batch.AnL[k] = medL.normal_matrix(nL)
            batch.AnR[k] = medR.normal_matrix(nR)
        return batch

    def _build_boundary_batch(self):
        mesh = self.mesh
        faces = [f for f in mesh.faces if f.kind == "BOUNDARY"]
        batch = _FaceBatch()
        batch.n_faces = len(faces)
        if not faces:
            return batch
        n = self.N + 1
        B = len(faces)
        batch.eL = np.empty(B, dtype=int)
        batch.idxL = np.empty((B, n), dtype=int)
        batch.ML = np.empty((B, n, 3, 3))
        batch.MR = np.empty((B, n, 3, 3))
        batch.AnL = np.empty((B, n, 3, 3))
        batch.x = np.empty((B, n))
        batch.y = np.empty((B, n))
        batch.material = np.empty(B, dtype=int)
        for k, f in enumerate(faces):
            e, s = f.left
            batch.eL[k] = e
            batch.idxL[k] = self._side_idx[s]
            ntilde = self._outward_normals(e, s)
            med = mesh.medium(e)
            batch.ML[k], batch.MR[k] = split_normal_matrix(med, ntilde)
            batch.AnL[k] = med.normal_matrix(ntilde)
            coords = mesh.face_coords(e, s)
            batch.x[k] = coords[:, 0]
            batch.y[k] = coords[:, 1]
            batch.material[k] = self.mesh.elements[e].material
        return batch

    # -- evaluation -------------------------------------------------------

    def _volume_residual_flat(self, fields):
        """Two-point volume kernel, telescoped to split form: w/2 (A~.grad U
        + div(A~ U) + (div Ja).A U).  Returns component-major (3, E, n, n)."""
        D = self.D
        E = fields.shape[0]
        n = self.N + 1
        K = E * n * n
        U4 = fields.transpose(1, 0, 2, 3)
        adv_x = np.matmul(D, U4).reshape(3, K)
        adv_y = np.matmul(U4, D.T).reshape(3, K)
        Ur = np.ascontiguousarray(U4).reshape(3, K)

        # material matrices applied per point: rows 0-2 are A1 X, 3-5 A2 X
        VU = np.empty((6, K))
        Vx = np.empty((6, K))
        Vy = np.empty((6, K))
        for cols, AA in self._mat_groups:
            VU[:, cols] = AA @ Ur[:, cols]
            Vx[:, cols] = AA @ adv_x[:, cols]
            Vy[:, cols] = AA @ adv_y[:, cols]

        j1x, j1y, j2x, j2y = self._ja
        F1 = j1x * VU[:3] + j1y * VU[3:]
        F2 = j2x * VU[:3] + j2y * VU[3:]
        out = j1x * Vx[:3] + j1y * Vx[3:]
        out += j2x * Vy[:3] + j2y * Vy[3:]
        out += self._mdiv[0] * VU[:3] + self._mdiv[1] * VU[3:]
        out = out.reshape(3, E, n, n)
        out += np.matmul(D, F1.reshape(3, E, n, n))
        out += np.matmul(F2.reshape(3, E, n, n), D.T)
        out *= 0.5 * self.w2
        return out

    def _volume_residual(self, fields):
        """Volume kernel in the element-major (E, 3, n, n) layout."""
        return self._volume_residual_flat(fields).transpose(1, 0, 2, 3)

    def _gather(self, flat, e_idx, p_idx):
        return flat[e_idx[:, None], :, p_idx].transpose(0, 2, 1)

    def _boundary_exterior(self, t):
        """Exterior states g at all boundary points, shape (B, 3, n)."""
        b = self.bnd
        n = self.N + 1
        g = np.zeros((b.n_faces, 3, n))
        if self.boundary is None or b.n_faces == 0:
            return g
        for mat in np.unique(b.material):
            rows = np.nonzero(b.material == mat)[0]
            vals = self.boundary(b.x[rows].ravel(), b.y[rows].ravel(), t, mat)
            g[rows] = np.asarray(vals).reshape(3, len(rows), n).transpose(1, 0, 2)
        return g

    def _interior_star(self, fields):
        """Single-valued numerical flux on DG faces, oriented out of left."""
        d = self.dg
        flat = fields.reshape(fields.shape[0], 3, -1)
        UL = self._gather(flat, d.eL, d.idxL)
        UR = self._gather(flat, d.eR, d.idxR)
        star = np.einsum("fpab,fbp->fap", d.ML, UL)
        star += np.einsum("fpab,fbp->fap", d.MR, UR)
        return star, UL, UR

    def _boundary_star(self, fields, t):
        b = self.bnd
        flat = fields.reshape(fields.shape[0], 3, -1)
        UL = self._gather(flat, b.eL, b.idxL)
        g = self._boundary_exterior(t)
        star = np.einsum("fpab,fbp->fap", b.ML, UL)
        star += np.einsum("fpab,fbp->fap", b.MR, g)
        return star, UL

    def rhs(self, fields, t):
        """Assembled time derivative; CG-continuous by construction."""
        mesh = self.mesh
        E = len(mesh)
        n = self.N + 1
        M = n * n
        wt = self.ops.weights

        R = self._volume_residual_flat(fields).reshape(3, E * M)

        if self.dg.n_faces:
            d = self.dg
            star, UL, UR = self._interior_star(fields)
            FnL = np.einsum("fpab,fbp->fap", d.AnL, UL)
            FnR = np.einsum("fpab,fbp->fap", d.AnR, UR)
            dL = wt[None, None, :] * (star - FnL)
            dR = wt[None, None, :] * (-star - FnR)
            gL = (d.eL[:, None] * M + d.idxL).ravel()
            gR = (d.eR[:, None] * M + d.idxR).ravel()
            for c in range(3):
                R[c] += np.bincount(gL, weights=dL[:, c].ravel(), minlength=E * M)
                R[c] += np.bincount(gR, weights=dR[:, c].ravel(), minlength=E * M)

        if self.bnd.n_faces:
            b = self.bnd
            star, UL = self._boundary_star(fields, t)
            FnL = np.einsum("fpab,fbp->fap", b.AnL, UL)
            dB = wt[None, None, :] * (star - FnL)
            gB = (b.eL[:, None] * M + b.idxL).ravel()
            for c in range(3):
                R[c] += np.bincount(gB, weights=dB[:, c].ravel(), minlength=E * M)

        nodes = self.node_flat.ravel()
        out = np.empty_like(fields)
        for c in range(3):
            summed = np.bincount(nodes, weights=R[c], minlength=mesh.n_nodes)
            udot = -summed / self.denom
            out[:, c] = udot[self.mesh.node_ids]
        return out

    def boundary_flux_total(self, fields, t):
        """Quadrature of the boundary numerical flux, a (3,) vector.

        Global conservation: sum(J w Udot) = -boundary_flux_total.
        """
        if self.bnd.n_faces == 0:
            return np.zeros(3)
        star, _ = self._boundary_star(fields, t)
        return np.einsum("fcp,p->c", star, self.ops.weights)

    def total_state(self, fields):
        """Discrete integral sum(J w U) per component, a (3,) vector."""
        return np.einsum("eij,ij,ecij->c", self.J, self.w2, fields)

    def face_fluxes(self, fields, t):
        """Numerical fluxes per mesh face (None on CG faces).

        Returns a list parallel to mesh.faces; each non-CG entry is the
        (n, 3) single-valued flux oriented outward from the face's left
        element.  Clarity path used by the reference forms and tests.
        """
        out = [None] * len(self.mesh.faces)
        if self.dg.n_faces:
            star, _, _ = self._interior_star(fields)
            k = 0
            for i, f in enumerate(self.mesh.faces):
                if f.kind == "DG":
                    out[i] = star[k].T.copy()
                    k += 1
        if self.bnd.n_faces:
            star, _ = self._boundary_star(fields, t)
            k = 0
            for i, f in enumerate(self.mesh.faces):
                if f.kind == "BOUNDARY":
                    out[i] = star[k].T.copy()
                    k += 1
        return out


# -- literal reference forms ----------------------------------------------


def _element_surface_stars(op, stars):
    """Per element, per side: outward numerical flux or None (CG side)."""
    mesh = op.mesh
    table = [[None] * 4 for _ in range(len(mesh))]
    for f, star in zip(mesh.faces, stars):
        if star is None:
            continue
        eL, sL = f.left
        table[eL][sL] = star
        if f.right is not None:
            eR, sR = f.right
            flipped = -star[::-1] if f.reversed else -star
            table[eR][sR] = flipped
    return table


def reference_residual(op, e, fields, surface, form):
    """Literal quadrature evaluation of one element's residual grid.

    surface: list of 4 outward numerical-flux arrays or None per side.
    form: one of "W", "S", "DS", "T".
    """
    N = op.N
    n = N + 1
    D = op.D
    w = op.ops.weights
    U = fields[e]
    At1 = op.At1[e]
    At2 = op.At2[e]

    F1 = np.einsum("ijab,bij->aij", At1, U)
    F2 = np.einsum("ijab,bij->aij", At2, U)

    R = np.zeros((3, n, n))
    if form == "W":
        # -1/2 { <U, div F^T(phi)> + <F(U), grad phi> }
        X1 = np.einsum("ia,i,cib->cab", D, w, U)
        X2 = np.einsum("jb,j,caj->cab", D, w, U)
        t1 = (np.einsum("abcd,dab,b->cab", At1, X1, w)
              + np.einsum("abcd,dab,a->cab", At2, X2, w))
        t2 = (np.einsum("ia,i,cib,b->cab", D, w, F1, w)
              + np.einsum("jb,j,caj,a->cab", D, w, F2, w))
        R -= 0.5 * (t1 + t2)
    elif form in ("S", "DS"):
        t3 = (np.einsum("abcd,dab->cab", At1, np.einsum("an,cnb->cab", D, U))
              + np.einsum("abcd,dab->cab", At2, np.einsum("bn,can->cab", D, U)))
        t3 *= op.w2
        if form == "S":
            t4 = (np.einsum("an,cnb->cab", D, F1)
                  + np.einsum("bn,can->cab", D, F2)) * op.w2
            R += 0.5 * (t3 + t4)
        else:
            t2 = (np.einsum("ia,i,cib,b->cab", D, w, F1, w)
                  + np.einsum("jb,j,caj,a->cab", D, w, F2, w))
            R += 0.5 * (t3 - t2)
    elif form == "T":
        # literal pairwise two-point divergence
        for m in range(n):
            sharp1 = np.einsum("ijab,bij->aij", 0.5 * (At1 + At1[m, :][None, :]),
                               0.5 * (U + U[:, m, :][:, None, :]))
            sharp2 = np.einsum("ijab,bij->aij", 0.5 * (At2 + At2[:, m][:, None]),
                               0.5 * (U + U[:, :, m][:, :, None]))
            R += 2.0 * (D[:, m][None, :, None] * sharp1
                        + D[:, m][None, None, :] * sharp2)
        R *= op.w2
    else:
        raise ValueError(f"unknown form {form!r}")

    half_interior = {"W": 0.0, "S": 1.0, "DS": 0.5, "T": 1.0}[form]
    for s in range(4):
        star = surface[s]
        if star is None:
            continue
        idx = op._side_idx[s]
        ntilde = op._outward_normals(e, s)
        med = op.mesh.medium(e)
        Utr = U.reshape(3, n * n)[:, idx]
        Fn = np.einsum("pab,bp->ap", med.normal_matrix(ntilde), Utr)
        contrib = w[None, :] * (star.T - half_interior * Fn)
        flatR = R.reshape(3, n * n)
        flatR[:, idx] += contrib
    return R


def reference_time_derivative(op, fields, t, form):
    """Globally assembled time derivative from a literal residual form."""
    mesh = op.mesh
    stars = op.face_fluxes(fields, t)
    table = _element_surface_stars(op, stars)
    E = len(mesh)
    n = op.N + 1
    R = np.empty((E, 3, n, n))
    for e in range(E):
        R[e] = reference_residual(op, e, fields, table[e], form)
    nodes = op.node_flat.ravel()
    out = np.empty_like(fields)
    Rflat = R.transpose(1, 0, 2, 3).reshape(3, -1)
    for c in range(3):
        summed = np.bincount(nodes, weights=Rflat[c], minlength=mesh.n_nodes)
        out[:, c] = (-summed / op.denom)[mesh.node_ids]
    return out
