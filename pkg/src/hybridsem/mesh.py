"""Conforming quadrilateral meshes with curved elements.

Elements carry a polynomial mapping of geometry degree ``N_g`` given by its
nodal points on the LGL(N_g) tensor grid.  Metric terms are differentiated
exactly at the geometry degree and evaluated at the solution grid, so the
discrete metric identities hold whenever N >= N_g; superparametric meshes
(N < N_g) lose them, and with them free-stream preservation.  Faces are
tagged CG, DG, or BOUNDARY; a shared-node map groups coincident points
across CG faces for continuous assembly.
"""

from dataclasses import dataclass, field

import numpy as np

from .acoustics import AcousticMedium
from .basis import eval_matrix, operators

# Side numbering: 0 = south (eta=-1), 1 = east (xi=+1), 2 = north (eta=+1),
# 3 = west (xi=-1).  Nodal fields are indexed [i, j] with i along xi.
SIDE_SLICES = {
    0: (slice(None), 0),
    1: (-1, slice(None)),
    2: (slice(None), -1),
    3: (0, slice(None)),
}


def side_trace(values, side):
    """Trace of a nodal array on one element side (view, not copy)."""
    return values[SIDE_SLICES[side]]


@dataclass
class ElementGeometry:
    """Geometry data of one curved quadrilateral element."""

    map_points: np.ndarray      # (Ng+1, Ng+1, 2) mapping nodes
    material: int
    X: np.ndarray = field(default=None, repr=False)
    Y: np.ndarray = field(default=None, repr=False)
    Ja1: np.ndarray = field(default=None, repr=False)
    Ja2: np.ndarray = field(default=None, repr=False)
    J: np.ndarray = field(default=None, repr=False)
    face_normal: np.ndarray = field(default=None, repr=False)
    face_jacobian: np.ndarray = field(default=None, repr=False)

    @property
    def geometry_degree(self):
        return self.map_points.shape[0] - 1

    def corners(self):
        """Corner coordinates in CCW order (c0..c3)."""
        mp = self.map_points
        return np.array([mp[0, 0], mp[-1, 0], mp[-1, -1], mp[0, -1]])


@dataclass
class Face:
    """Connectivity record for one mesh face."""

    left: tuple                 # (element index, side)
    right: tuple = None         # (element index, side) or None for boundary
    kind: str = "CG"            # "CG" | "DG" | "BOUNDARY"
    reversed: bool = False      # right trace runs opposite to left trace
    boundary_tag: str = None


def geometry_interp_matrix(n_geom, n_sol):
    """Interpolation matrix from the LGL(n_geom) grid to LGL(n_sol) nodes."""
    ops_g = operators(n_geom)
    ops_s = operators(n_sol)
    return eval_matrix(ops_g, ops_s.nodes)


def compute_metrics(map_points, N):
    """Metric terms of a mapping, evaluated at the solution grid.

    The mapping keeps its own degree: coordinates and their derivatives
    are formed exactly on the geometry grid and evaluated at the LGL(N)
    nodes, Ja1 = (Y_eta, -X_eta) and Ja2 = (-Y_xi, X_xi).  When N is
    below the geometry degree the discrete metric identity no longer
    holds, so a superparametric mesh loses free-stream preservation.
    Raises on nonpositive J.
    """
    n_geom = map_points.shape[0] - 1
    D_g = operators(n_geom).D
    E = geometry_interp_matrix(n_geom, N)
    Xg = map_points[:, :, 0]
    Yg = map_points[:, :, 1]

    X, Y = E @ Xg @ E.T, E @ Yg @ E.T
    X_xi, X_eta = E @ (D_g @ Xg) @ E.T, E @ (Xg @ D_g.T) @ E.T
    Y_xi, Y_eta = E @ (D_g @ Yg) @ E.T, E @ (Yg @ D_g.T) @ E.T

    Ja1 = np.stack((Y_eta, -X_eta), axis=-1)
    Ja2 = np.stack((-Y_xi, X_xi), axis=-1)
    J = X_xi * Y_eta - X_eta * Y_xi
    if np.any(J <= 0):
        raise ValueError(f"nonpositive Jacobian (min J = {J.min():.3e})")

    face_normal = np.empty((4, N + 1, 2))
    face_jacobian = np.empty((4, N + 1))
    signed = {0: -side_trace(Ja2, 0), 1: side_trace(Ja1, 1),
              2: side_trace(Ja2, 2), 3: -side_trace(Ja1, 3)}
    for side, ntilde in signed.items():
        scale = np.linalg.norm(ntilde, axis=-1)
        if np.any(scale <= 0):
            raise ValueError("degenerate face normal")
        face_jacobian[side] = scale
        face_normal[side] = ntilde / scale[:, None]
    return X, Y, Ja1, Ja2, J, face_normal, face_jacobian


def build_element(map_points, material, N):
    elem = ElementGeometry(map_points=np.asarray(map_points, dtype=float),
                           material=material)
    (elem.X, elem.Y, elem.Ja1, elem.Ja2, elem.J,
     elem.face_normal, elem.face_jacobian) = compute_metrics(elem.map_points, N)
    return elem


def metric_identity_residual(elem, N):
    """Nodal residual of sum_i d(Ja^i)/dxi^i, one 2-vector per node."""
    D = operators(N).D
    res = np.empty_like(elem.Ja1)
    for n in range(2):
        res[:, :, n] = D @ elem.Ja1[:, :, n] + elem.Ja2[:, :, n] @ D.T
    return res


class _UnionFind:
    def __init__(self, n):
        self.parent = np.arange(n)

    def find(self, a):
        p = self.parent
        root = a
        while p[root] != root:
            root = p[root]
        while p[a] != root:
            p[a], a = root, p[a]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


class HybridMesh:
    """Conforming element mesh with CG/DG face tagging.

    Attributes
    ----------
    elements : list of ElementGeometry
    faces : list of Face
    materials : dict mapping material id to AcousticMedium
    node_ids : (E, N+1, N+1) int array, global ids of CG-coupled points
    n_nodes : number of distinct global node ids
    """

    def __init__(self, elements, faces, materials, N):
        self.elements = elements
        self.faces = faces
        self.materials = dict(materials)
        self.N = N
        self.node_ids, self.n_nodes = self._build_node_map()

    def __len__(self):
        return len(self.elements)

    def medium(self, e):
        return self.materials[self.elements[e].material]

    def face_coords(self, e, side):
        elem = self.elements[e]
        return np.stack((side_trace(elem.X, side),
                         side_trace(elem.Y, side)), axis=-1)

    def _build_node_map(self):
        N = self.N
        per = (N + 1) * (N + 1)
        uf = _UnionFind(len(self.elements) * per)

        def flat(e, side):
            ids = np.arange(per).reshape(N + 1, N + 1)
            return e * per + side_trace(ids, side)

        for f in self.faces:
            if f.kind != "CG":
                continue
            le, ls = f.left
            re, rs = f.right
            lid, rid = flat(le, ls), flat(re, rs)
            if f.reversed:
                rid = rid[::-1]
            for a, b in zip(lid, rid):
                uf.union(a, b)

        roots = np.array([uf.find(a) for a in range(len(self.elements) * per)])
        uniq, compact = np.unique(roots, return_inverse=True)
        node_ids = compact.reshape(len(self.elements), N + 1, N + 1)
        return node_ids, len(uniq)

    def validate(self, tol=1e-12):
        """Check conforming faces, antiparallel normals, positive J."""
        for e, elem in enumerate(self.elements):
            if np.any(elem.J <= 0):
                raise ValueError(f"element {e}: nonpositive Jacobian")
        for f in self.faces:
            if f.kind == "BOUNDARY":
                continue
            xl = self.face_coords(*f.left)
            xr = self.face_coords(*f.right)
            if f.reversed:
                xr = xr[::-1]
            gap = np.abs(xl - xr).max()
            if gap > tol:
                raise ValueError(f"face {f.left}-{f.right} gap {gap:.2e}")
            nl = self.elements[f.left[0]].face_normal[f.left[1]]
            nr = self.elements[f.right[0]].face_normal[f.right[1]]
            if f.reversed:
                nr = nr[::-1]
            if np.abs(nl + nr).max() > 1e-10:
                raise ValueError(f"face {f.left}-{f.right}: normals not opposed")
        return True


def _match_faces(elements, dg_predicate, boundary_tagger, all_dg):
    """Pair element sides by shared corner keys and tag face kinds."""
    def key(pt):
        return (round(pt[0], 9), round(pt[1], 9))

    table = {}
    for e, elem in enumerate(elements):
        cs = elem.corners()
        for side, (a, b) in enumerate([(0, 1), (1, 2), (3, 2), (0, 3)]):
            k = frozenset((key(cs[a]), key(cs[b])))
            table.setdefault(k, []).append((e, side))

    faces = []
    for k, members in table.items():
        if len(members) > 2:
            raise ValueError(f"face shared by {len(members)} elements")
        if len(members) == 1:
            (e, side), = members
            mid = np.asarray([sum(p[0] for p in k) / 2, sum(p[1] for p in k) / 2])
            faces.append(Face(left=(e, side), kind="BOUNDARY",
                              boundary_tag=boundary_tagger(mid)))
            continue
        (le, ls), (re, rs) = members
        xl = np.stack((side_trace(elements[le].X, ls),
                       side_trace(elements[le].Y, ls)), axis=-1)
        xr = np.stack((side_trace(elements[re].X, rs),
                       side_trace(elements[re].Y, rs)), axis=-1)
        straight = np.abs(xl - xr).max()
        flipped = np.abs(xl - xr[::-1]).max()
        rev = flipped < straight
        if min(straight, flipped) > 1e-10:
            raise ValueError(f"nonconforming face between {le} and {re}")
        mat_l = elements[le].material
        mat_r = elements[re].material
        mid = xl[len(xl) // 2]
        is_dg = all_dg or mat_l != mat_r or (
            dg_predicate is not None and dg_predicate(mid))
        faces.append(Face(left=(le, ls), right=(re, rs),
                          kind="DG" if is_dg else "CG", reversed=rev))
    return faces


def build_mesh(map_point_list, material_list, materials, N,
               dg_predicate=None, boundary_tagger=None, all_dg=False):
    """Assemble a HybridMesh from per-element mapping nodes.

    Faces between different materials are always DG; ``dg_predicate(mid)``
    can force additional interior faces to DG by face midpoint.
    """
    if boundary_tagger is None:
        boundary_tagger = lambda mid: "exterior"
    elements = [build_element(mp, m, N)
                for mp, m in zip(map_point_list, material_list)]
    faces = _match_faces(elements, dg_predicate, boundary_tagger, all_dg)
    return HybridMesh(elements, faces, materials, N)


def _bilinear_map_points(corners, n_geom=1):
    """Mapping nodes of the straight-sided quad with the given CCW corners."""
    ops = operators(n_geom)
    xi = ops.nodes[:, None, None]
    eta = ops.nodes[None, :, None]
    c0, c1, c2, c3 = (np.asarray(c, dtype=float) for c in corners)
    return ((1 - xi) * (1 - eta) * c0 + (1 + xi) * (1 - eta) * c1 +
            (1 + xi) * (1 + eta) * c2 + (1 - xi) * (1 + eta) * c3) / 4


def cartesian_mesh(nx, ny, bounds, N, materials=None, material_split=None,
                   force_dg_lines=(), all_dg=False):
    """Uniform nx-by-ny mesh of the rectangle ``bounds`` = (x0, x1, y0, y1).

    ``material_split`` places a vertical material interface at that x
    coordinate (faces there become DG and elements are assigned material 0
    left, 1 right).  ``force_dg_lines`` lists x coordinates of extra vertical
    DG lines inside a single material.  Both must align with element edges.
    """
    x0, x1, y0, y1 = bounds
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    tol = 1e-10 * max(x1 - x0, y1 - y0)

    def aligned(value):
        return np.any(np.abs(xs - value) < tol)

    if material_split is not None and not aligned(material_split):
        raise ValueError(f"material split x={material_split} not on an element edge")
    for line in force_dg_lines:
        if not aligned(line):
            raise ValueError(f"DG line x={line} not on an element edge")

    if materials is None:
        materials = {0: AcousticMedium(1.0, 1.0)}
        if material_split is not None:
            materials[1] = AcousticMedium(1.0, 1.0)

    map_point_list, material_list = [], []
    for i in range(nx):
        for j in range(ny):
            corners = [(xs[i], ys[j]), (xs[i + 1], ys[j]),
                       (xs[i + 1], ys[j + 1]), (xs[i], ys[j + 1])]
            map_point_list.append(_bilinear_map_points(corners))
            mat = 0
            if material_split is not None and xs[i] >= material_split - tol:
                mat = 1
            material_list.append(mat)

    lines = list(force_dg_lines)
    dg_predicate = None
    if lines:
        dg_predicate = lambda mid: any(abs(mid[0] - v) < tol for v in lines)

    def tagger(mid):
        if abs(mid[0] - x0) < tol:
            return "left"
        if abs(mid[0] - x1) < tol:
            return "right"
        if abs(mid[1] - y0) < tol:
            return "bottom"
        return "top"

    return build_mesh(map_point_list, material_list, materials, N,
                      dg_predicate=dg_predicate, boundary_tagger=tagger,
                      all_dg=all_dg)


def _arc_points(center, radius, ang0, ang1, n_geom):
    t = operators(n_geom).nodes
    ang = ang0 + (t + 1) / 2 * (ang1 - ang0)
    return np.stack((center[0] + radius * np.cos(ang),
                     center[1] + radius * np.sin(ang)), axis=-1)


def _line_points(p0, p1, n_geom):
    t = operators(n_geom).nodes[:, None]
    return np.asarray(p0) * (1 - t) / 2 + np.asarray(p1) * (1 + t) / 2


def _gordon_hall(curves, n_geom):
    """Transfinite blend of four boundary curves sampled on LGL(n_geom).

    curves = (south, east, north, west); south/north run with xi, east/west
    with eta, all in ascending parameter.
    """
    s, e, n, w = (np.asarray(c, dtype=float) for c in curves)
    t = operators(n_geom).nodes
    xi = t[:, None, None]
    eta = t[None, :, None]
    c0, c1, c2, c3 = s[0], s[-1], n[-1], n[0]
    face = ((1 - eta) * s[:, None, :] + (1 + eta) * n[:, None, :] +
            (1 - xi) * w[None, :, :] + (1 + xi) * e[None, :, :]) / 2
    corner = ((1 - xi) * (1 - eta) * c0 + (1 + xi) * (1 - eta) * c1 +
              (1 + xi) * (1 + eta) * c2 + (1 - xi) * (1 + eta) * c3) / 4
    return face - corner


def _arc_through(p0, p1, radius, bow_left, n_geom):
    """Minor arc of the given radius from p0 to p1.

    ``bow_left`` selects which side of the chord the arc bulges toward
    (left of the p0->p1 direction if True).
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    chord = p1 - p0
    half = np.hypot(*chord) / 2
    if radius < half:
        raise ValueError("arc radius smaller than half chord")
    h = np.sqrt(radius**2 - half**2)
    perp = np.array([-chord[1], chord[0]]) / (2 * half)
    center = (p0 + p1) / 2 + (-h if bow_left else h) * perp
    a0 = np.arctan2(p0[1] - center[1], p0[0] - center[0])
    a1 = np.arctan2(p1[1] - center[1], p1[0] - center[0])
    a1 = a0 + np.mod(a1 - a0 + np.pi, 2 * np.pi) - np.pi
    return _arc_points(center, radius, a0, a1, n_geom)


def curved_mesh_example(N, n_geom=5, medium=None, all_dg=False):
    """Sixteen-element single-material mesh of [-5,5]^2 with circular edges.

    A 4x4 block layout whose central 2x2 block is bent onto circles of radius
    2 and 3: the block's corner nodes move to radius 3 on the diagonals, its
    edge midpoints to radius 2 on the axes, its perimeter edges become arcs
    of radius-2 circles, and its interior spokes bow onto radius-3 circles
    through the origin.  Curves are interpolated at geometry degree
    ``n_geom``; interior faces are CG unless ``all_dg``.
    """
    if medium is None:
        medium = AcousticMedium(1.0, 1.0)
    ring = 2.5
    r_corner, r_mid = 3.0, 2.0

    def on_ring(p):
        return max(abs(p[0]), abs(p[1])) == ring

    def move(p):
        p = np.asarray(p, dtype=float)
        if not on_ring(p):
            return p
        radius = r_corner if min(abs(p[0]), abs(p[1])) == ring else r_mid
        return p * (radius / np.hypot(*p))

    def edge_curve(p0, p1):
        p0 = np.asarray(p0, dtype=float)
        p1 = np.asarray(p1, dtype=float)
        same_side = (abs(abs(p0[0]) - ring) < 1e-12 and abs(p0[0] - p1[0]) < 1e-12) or \
                    (abs(abs(p0[1]) - ring) < 1e-12 and abs(p0[1] - p1[1]) < 1e-12)
        if on_ring(p0) and on_ring(p1) and same_side:
            q0, q1 = move(p0), move(p1)
            # bow away from the origin: left of the CCW-going chord
            ccw = q0[0] * q1[1] - q0[1] * q1[0] > 0
            return _arc_through(q0, q1, r_mid, bow_left=ccw, n_geom=n_geom)
        spoke = None
        if np.allclose(p0, 0) and on_ring(p1) and (p1[0] == 0 or p1[1] == 0):
            spoke = _arc_through((0.0, 0.0), move(p1), r_corner,
                                 bow_left=True, n_geom=n_geom)
        elif np.allclose(p1, 0) and on_ring(p0) and (p0[0] == 0 or p0[1] == 0):
            spoke = _arc_through((0.0, 0.0), move(p0), r_corner,
                                 bow_left=True, n_geom=n_geom)[::-1]
        if spoke is not None:
            return spoke
        return _line_points(move(p0), move(p1), n_geom)

    lines = np.array([-5.0, -ring, 0.0, ring, 5.0])
    map_point_list = []
    for i in range(4):
        for j in range(4):
            c0 = (lines[i], lines[j])
            c1 = (lines[i + 1], lines[j])
            c2 = (lines[i + 1], lines[j + 1])
            c3 = (lines[i], lines[j + 1])
            curves = (edge_curve(c0, c1), edge_curve(c1, c2),
                      edge_curve(c3, c2), edge_curve(c0, c3))
            map_point_list.append(_gordon_hall(curves, n_geom))

    def tagger(mid):
        return "outer"

    return build_mesh(map_point_list, [0] * 16, {0: medium}, N,
                      boundary_tagger=tagger, all_dg=all_dg)


def warped_mesh(nx, ny, bounds, N, n_geom=4, amplitude=0.06, medium=None,
                all_dg=False):
    """Smoothly warped Cartesian mesh for free-stream and geometry tests.

    The warp x -> x + a L sin(pi x/L) sin(pi y/L) (both components) is
    sampled isoparametrically at geometry degree ``n_geom``; interior faces
    are CG unless ``all_dg``.
    """
    if medium is None:
        medium = AcousticMedium(1.0, 1.0)
    x0, x1, y0, y1 = bounds
    L = max(x1 - x0, y1 - y0)

    def warp(p):
        sx = np.sin(np.pi * (p[..., 0] - x0) / L)
        sy = np.sin(np.pi * (p[..., 1] - y0) / L)
        out = p.copy()
        out[..., 0] += amplitude * L * sx * sy
        out[..., 1] += amplitude * L * sx * sy
        return out

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    map_point_list = []
    for i in range(nx):
        for j in range(ny):
            corners = [(xs[i], ys[j]), (xs[i + 1], ys[j]),
                       (xs[i + 1], ys[j + 1]), (xs[i], ys[j + 1])]
            map_point_list.append(warp(_bilinear_map_points(corners, n_geom)))

    return build_mesh(map_point_list, [0] * (nx * ny), {0: medium}, N,
                      all_dg=all_dg)


def save_mesh(mesh, path):
    """Write a mesh to a structured text file (see README for the format)."""
    with open(path, "w") as fh:
        fh.write("hybridsem-mesh 1\n")
        fh.write(f"N {mesh.N}\n")
        fh.write(f"materials {len(mesh.materials)}\n")
        for mat_id, med in sorted(mesh.materials.items()):
            fh.write(f"{mat_id} {float(med.rho)!r} {float(med.c)!r}\n")
        fh.write(f"elements {len(mesh.elements)}\n")
        for elem in mesh.elements:
            ng = elem.geometry_degree
            fh.write(f"element {elem.material} {ng}\n")
            for i in range(ng + 1):
                for j in range(ng + 1):
                    x, y = elem.map_points[i, j]
                    fh.write(f"{float(x)!r} {float(y)!r}\n")
        fh.write(f"faces {len(mesh.faces)}\n")
        for f in mesh.faces:
            re, rs = f.right if f.right is not None else (-1, -1)
            tag = f.boundary_tag if f.boundary_tag is not None else "-"
            fh.write(f"face {f.left[0]} {f.left[1]} {re} {rs} "
                     f"{f.kind} {int(f.reversed)} {tag}\n")


def load_mesh(path):
    """Read a mesh written by save_mesh and recompute metric terms."""
    with open(path) as fh:
        tokens = fh.read().split()
    it = iter(tokens)

    def expect(word):
        got = next(it)
        if got != word:
            raise ValueError(f"bad mesh file: expected {word!r}, got {got!r}")

    expect("hybridsem-mesh")
    if next(it) != "1":
        raise ValueError("unsupported mesh file version")
    expect("N")
    N = int(next(it))
    expect("materials")
    materials = {}
    for _ in range(int(next(it))):
        mat_id = int(next(it))
        materials[mat_id] = AcousticMedium(float(next(it)), float(next(it)))
    expect("elements")
    n_elem = int(next(it))
    elements = []
    for _ in range(n_elem):
        expect("element")
        material = int(next(it))
        ng = int(next(it))
        mp = np.empty((ng + 1, ng + 1, 2))
        for i in range(ng + 1):
            for j in range(ng + 1):
                mp[i, j] = (float(next(it)), float(next(it)))
        elements.append(build_element(mp, material, N))
    expect("faces")
    faces = []
    for _ in range(int(next(it))):
        expect("face")
        le, ls, re, rs = (int(next(it)) for _ in range(4))
        kind = next(it)
        rev = bool(int(next(it)))
        tag = next(it)
        faces.append(Face(left=(le, ls),
                          right=None if re < 0 else (re, rs),
                          kind=kind, reversed=rev,
                          boundary_tag=None if tag == "-" else tag))
    return HybridMesh(elements, faces, materials, N)
