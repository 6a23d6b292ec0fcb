"""B-spline basis and surface evaluation, differential geometry and
Catmull-Clark subdivision.

All evaluation routines are vectorized over parameter arrays. Basis
functions follow the span-local convention: for a parameter ``u`` in span
``s`` only ``N[s-p], ..., N[s]`` are nonzero and those ``p + 1`` values are
what the low-level routines return.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SingularityError, TopologyError

#: |S_u x S_v| below this is treated as a degenerate tangent plane.
NORMAL_EPS = 1e-12


# ---------------------------------------------------------------------------
# Knot vectors and basis functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KnotVector:
    """Nondecreasing knot sequence of a B-spline basis of a given degree.

    By default the vector must be clamped on ``[0, 1]``; pass
    ``clamped=False`` for general (e.g. uniform periodic) sequences.
    """

    values: np.ndarray
    degree: int
    clamped: bool = True

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        p = int(self.degree)
        if p < 1:
            raise ValueError(f"degree must be positive, got {p}")
        if values.ndim != 1 or len(values) < 2 * (p + 1):
            raise ValueError("knot vector too short for its degree")
        if np.any(np.diff(values) < 0):
            raise ValueError("knot vector must be nondecreasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("knot vector has non-finite entries")
        if self.clamped:
            if np.any(values[: p + 1] != 0.0) or np.any(values[-p - 1:] != 1.0):
                raise ValueError(
                    f"clamped knot vector must start with {p + 1} zeros and "
                    f"end with {p + 1} ones")

    @classmethod
    def uniform(cls, n_ctrl: int, degree: int = 3) -> "KnotVector":
        """Clamped knot vector with equally spaced interior knots."""
        n_int = n_ctrl - degree - 1
        if n_int < 0:
            raise ValueError("need at least degree + 1 control points")
        interior = np.arange(1, n_int + 1) / (n_int + 1)
        return cls.from_interior(interior, degree)

    @classmethod
    def from_interior(cls, interior, degree: int = 3) -> "KnotVector":
        interior = np.asarray(interior, dtype=float)
        values = np.concatenate([np.zeros(degree + 1), interior,
                                 np.ones(degree + 1)])
        return cls(values, degree)

    @property
    def n_basis(self) -> int:
        return len(self.values) - self.degree - 1

    @property
    def interior(self) -> np.ndarray:
        p = self.degree
        return self.values[p + 1: -p - 1]

    @property
    def domain(self) -> tuple[float, float]:
        p = self.degree
        return float(self.values[p]), float(self.values[-p - 1])

    def __eq__(self, other):
        if not isinstance(other, KnotVector):
            return NotImplemented
        return (self.degree == other.degree
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.degree, self.values.tobytes()))


def find_span(knots, degree, u):
    """Knot span index for each ``u`` (vectorized).

    The right end of the domain belongs to the last nonempty span, so
    ``u = 1`` on a clamped vector evaluates to the last control point.
    """
    knots = np.asarray(knots, dtype=float)
    n = len(knots) - degree - 1
    span = np.searchsorted(knots, u, side="right") - 1
    return np.clip(span, degree, n - 1)


def basis_derivatives(knots, degree, u, order):
    """Nonzero basis functions and their derivatives.

    Parameters
    ----------
    knots : array_like
        Knot sequence.
    degree : int
        Polynomial degree ``p``.
    u : array_like
        Parameter values, any shape; evaluated flattened.
    order : int
        Highest derivative order. Orders above ``p`` come back as zeros.

    Returns
    -------
    spans : ndarray of int, shape (m,)
    ders : ndarray, shape (m, order + 1, p + 1)
        ``ders[k, r, i]`` is the r-th derivative of ``N[spans[k] - p + i]``.
    """
    knots = np.asarray(knots, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float)).ravel()
    p = int(degree)
    m = len(u)
    span = find_span(knots, p, u)

    ndu = np.zeros((m, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = u - knots[span + 1 - j]
        right[:, j] = knots[span + j] - u
        saved = np.zeros(m)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = ndu[:, r, j - 1] / ndu[:, j, r]
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((m, order + 1, p + 1))
    # the recursion can leave the values a rounding error away from a
    # partition of unity (e.g. 1 - eps at a clamped end); renormalizing
    # makes endpoint interpolation exact
    vals = ndu[:, :, p]
    ders[:, 0, :] = vals / vals.sum(axis=1, keepdims=True)
    top = min(order, p)
    for r in range(p + 1):
        a = np.zeros((m, 2, p + 1))
        a[:, 0, 0] = 1.0
        s1, s2 = 0, 1
        for k in range(1, top + 1):
            d = np.zeros(m)
            rk, pk = r - k, p - k
            if r >= k:
                a[:, s2, 0] = a[:, s1, 0] / ndu[:, pk + 1, rk]
                d += a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[:, s2, j] = (a[:, s1, j] - a[:, s1, j - 1]) / ndu[:, pk + 1, rk + j]
                d += a[:, s2, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[:, s2, k] = -a[:, s1, k - 1] / ndu[:, pk + 1, r]
                d += a[:, s2, k] * ndu[:, r, pk]
            ders[:, k, r] = d
            s1, s2 = s2, s1
    fac = float(p)
    for k in range(1, top + 1):
        ders[:, k, :] *= fac
        fac *= p - k
    return span, ders


def basis_matrix(knots, degree, u, order=0):
    """Dense basis rows: ``B[k, r, i]`` = r-th derivative of ``N_i`` at ``u[k]``."""
    knots = np.asarray(knots, dtype=float)
    n = len(knots) - degree - 1
    span, ders = basis_derivatives(knots, degree, u, order)
    m = len(span)
    out = np.zeros((m, order + 1, n))
    cols = span[:, None] + np.arange(-degree, 1)[None, :]
    rows = np.arange(m)[:, None]
    for r in range(order + 1):
        out[:, r, :][rows, cols] = ders[:, r, :]
    return out


def _check_domain(knots: KnotVector, u):
    lo, hi = knots.domain
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)) or np.any(u < lo) or np.any(u > hi):
        raise DomainError(f"parameter outside knot domain [{lo}, {hi}]")


def basis_eval(u: float, deriv_order: int, knots: KnotVector):
    """Nonzero basis function values (or derivatives) at a single ``u``.

    Returns a list of ``(index, value)`` pairs, exactly ``degree + 1`` long.
    """
    if deriv_order < 0 or deriv_order > knots.degree:
        raise ValueError(f"deriv_order must lie in 0..{knots.degree}")
    _check_domain(knots, u)
    span, ders = basis_derivatives(knots.values, knots.degree, float(u),
                                   deriv_order)
    s = int(span[0])
    p = knots.degree
    return [(s - p + i, float(ders[0, deriv_order, i])) for i in range(p + 1)]


# ---------------------------------------------------------------------------
# Surfaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SurfaceJet:
    """Position and partial derivatives up to third order at one point."""

    position: np.ndarray
    S_u: np.ndarray
    S_v: np.ndarray
    S_uu: np.ndarray
    S_uv: np.ndarray
    S_vv: np.ndarray
    S_uuu: np.ndarray
    S_uuv: np.ndarray
    S_uvv: np.ndarray
    S_vvv: np.ndarray

    @classmethod
    def from_table(cls, table):
        """Build from ``table[a, b]`` = d^(a+b) S / du^a dv^b."""
        t = np.asarray(table)
        return cls(t[0, 0], t[1, 0], t[0, 1], t[2, 0], t[1, 1], t[0, 2],
                   t[3, 0], t[2, 1], t[1, 2], t[0, 3])


@dataclass
class BSplineSurface:
    """Tensor-product (non-rational) B-spline surface.

    ``control_points[i, j]`` multiplies ``N_i(u) N_j(v)``.
    """

    knots_u: KnotVector
    knots_v: KnotVector
    control_points: np.ndarray

    def __post_init__(self):
        cp = np.asarray(self.control_points, dtype=float)
        nu, nv = self.knots_u.n_basis, self.knots_v.n_basis
        if cp.shape != (nu, nv, 3):
            raise ValueError(f"control grid shape {cp.shape} does not match "
                             f"knot vectors ({nu}, {nv}, 3)")
        if not np.all(np.isfinite(cp)):
            raise ValueError("control points must be finite")
        self.control_points = cp

    @classmethod
    def from_interior_knots(cls, control_points, interior_u=None,
                            interior_v=None, degree=3):
        cp = np.asarray(control_points, dtype=float)
        nu, nv = cp.shape[:2]
        ku = (KnotVector.uniform(nu, degree) if interior_u is None
              else KnotVector.from_interior(interior_u, degree))
        kv = (KnotVector.uniform(nv, degree) if interior_v is None
              else KnotVector.from_interior(interior_v, degree))
        return cls(ku, kv, cp)

    @property
    def degree_u(self) -> int:
        return self.knots_u.degree

    @property
    def degree_v(self) -> int:
        return self.knots_v.degree

    @property
    def shape(self) -> tuple[int, int]:
        return self.control_points.shape[:2]

    def with_control_points(self, control_points) -> "BSplineSurface":
        return BSplineSurface(self.knots_u, self.knots_v, control_points)

    def derivatives(self, u, v, order=3):
        """Partial derivatives at scattered points.

        Returns an array of shape ``(m, order + 1, order + 1, 3)`` whose
        ``[k, a, b]`` entry is d^(a+b) S / du^a dv^b at ``(u[k], v[k])``.
        """
        u = np.atleast_1d(np.asarray(u, dtype=float)).ravel()
        v = np.atleast_1d(np.asarray(v, dtype=float)).ravel()
        _check_domain(self.knots_u, u)
        _check_domain(self.knots_v, v)
        bu = basis_matrix(self.knots_u.values, self.degree_u, u, order)
        bv = basis_matrix(self.knots_v.values, self.degree_v, v, order)
        return np.einsum("mai,mbj,ijc->mabc", bu, bv, self.control_points)

    def evaluate(self, u, v):
        """Surface points; output shape is ``np.shape(u) + (3,)``."""
        shape = np.shape(u)
        pts = self.derivatives(u, v, order=0)[:, 0, 0]
        return pts.reshape(shape + (3,))

    def evaluate_grid(self, us, vs, order=0):
        """Derivatives on the tensor grid ``us x vs``: shape (mu, mv, o+1, o+1, 3)."""
        us = np.asarray(us, dtype=float)
        vs = np.asarray(vs, dtype=float)
        _check_domain(self.knots_u, us)
        _check_domain(self.knots_v, vs)
        bu = basis_matrix(self.knots_u.values, self.degree_u, us, order)
        bv = basis_matrix(self.knots_v.values, self.degree_v, vs, order)
        return np.einsum("xai,ybj,ijc->xyabc", bu, bv, self.control_points)

    def to_dict(self) -> dict:
        return {
            "degree_u": self.degree_u,
            "degree_v": self.degree_v,
            "knots_u": self.knots_u.values.tolist(),
            "knots_v": self.knots_v.values.tolist(),
            "control_points": self.control_points.reshape(-1, 3).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BSplineSurface":
        ku = KnotVector(data["knots_u"], int(data["degree_u"]))
        kv = KnotVector(data["knots_v"], int(data["degree_v"]))
        cp = np.asarray(data["control_points"], dtype=float)
        return cls(ku, kv, cp.reshape(ku.n_basis, kv.n_basis, 3))


def surface_jet(surface: BSplineSurface, u: float, v: float) -> SurfaceJet:
    """All partial derivatives through third order at ``(u, v)``."""
    table = surface.derivatives(u, v, order=3)[0]
    return SurfaceJet.from_table(table)


def unit_normals(S_u, S_v):
    """Unit normals from tangent arrays (..., 3); raises on degeneracy."""
    n = np.cross(S_u, S_v)
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    if np.any(norm < NORMAL_EPS):
        raise SingularityError("degenerate tangent plane (|S_u x S_v| < 1e-12)")
    return n / norm


def surface_normal_and_curvature(surface, u, v, direction):
    """Unit normal and normal curvature along a parameter-space direction.

    The curvature is ``II(d) / I(d)`` from the first and second fundamental
    forms; its sign follows the orientation of ``S_u x S_v``.
    """
    d = np.asarray(direction, dtype=float)
    if d.shape != (2,) or np.linalg.norm(d) == 0.0:
        raise ValueError("direction must be a nonzero 2-vector")
    table = surface.derivatives(u, v, order=2)[0]
    n = unit_normals(table[1, 0], table[0, 1])
    return n, float(_normal_curvature_uv(table[None], n[None], d[None])[0])


def _normal_curvature_uv(tables, normals, dirs):
    du, dv = dirs[:, 0], dirs[:, 1]
    s_d = tables[:, 1, 0] * du[:, None] + tables[:, 0, 1] * dv[:, None]
    s_dd = (tables[:, 2, 0] * (du * du)[:, None]
            + 2.0 * tables[:, 1, 1] * (du * dv)[:, None]
            + tables[:, 0, 2] * (dv * dv)[:, None])
    return np.einsum("mc,mc->m", s_dd, normals) / np.einsum("mc,mc->m", s_d, s_d)


def tangent_to_param_direction(S_u, S_v, w):
    """Parameter direction ``d`` whose image ``S_u d_u + S_v d_v`` best
    matches the 3D tangent vectors ``w`` (least squares, vectorized)."""
    J = np.stack([S_u, S_v], axis=-1)               # (m, 3, 2)
    JtJ = np.einsum("mci,mcj->mij", J, J)
    Jtw = np.einsum("mci,mc->mi", J, w)
    return np.linalg.solve(JtJ, Jtw[..., None])[..., 0]


def normal_curvature_along(tables, w):
    """Normal curvature of a surface in 3D tangent directions ``w``.

    ``tables`` is a (m, >=3, >=3, 3) derivative table; ``w`` is (m, 3) and
    is first projected onto the tangent plane.
    """
    tables = np.asarray(tables)
    n = unit_normals(tables[:, 1, 0], tables[:, 0, 1])
    d = tangent_to_param_direction(tables[:, 1, 0], tables[:, 0, 1], w)
    return _normal_curvature_uv(tables, n, d)


def mean_curvature(tables):
    """Mean curvature from (m, >=3, >=3, 3) derivative tables."""
    su, sv = tables[:, 1, 0], tables[:, 0, 1]
    n = unit_normals(su, sv)
    E = np.einsum("mc,mc->m", su, su)
    F = np.einsum("mc,mc->m", su, sv)
    G = np.einsum("mc,mc->m", sv, sv)
    L = np.einsum("mc,mc->m", tables[:, 2, 0], n)
    M = np.einsum("mc,mc->m", tables[:, 1, 1], n)
    N = np.einsum("mc,mc->m", tables[:, 0, 2], n)
    return (E * N - 2.0 * F * M + G * L) / (2.0 * (E * G - F * F))


def fit_surface(params, points, knots_u: KnotVector, knots_v: KnotVector):
    """Least-squares B-spline surface through scattered ``(u, v) -> xyz`` data."""
    params = np.asarray(params, dtype=float)
    points = np.asarray(points, dtype=float)
    bu = basis_matrix(knots_u.values, knots_u.degree, params[:, 0])[:, 0]
    bv = basis_matrix(knots_v.values, knots_v.degree, params[:, 1])[:, 0]
    design = np.einsum("mi,mj->mij", bu, bv).reshape(len(params), -1)
    coef, *_ = np.linalg.lstsq(design, points, rcond=None)
    return BSplineSurface(knots_u, knots_v,
                          coef.reshape(knots_u.n_basis, knots_v.n_basis, 3))


def save_surface(surface: BSplineSurface, path):
    with open(path, "w") as fh:
        json.dump(surface.to_dict(), fh)


def load_surface(path) -> BSplineSurface:
    with open(path) as fh:
        return BSplineSurface.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Polygon meshes and Catmull-Clark
# ---------------------------------------------------------------------------

@dataclass
class QuadMesh:
    """Polygon mesh; quads after subdivision, general N-gons before."""

    vertices: np.ndarray
    faces: list = field(default_factory=list)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = [list(map(int, f)) for f in self.faces]

    def edge_faces(self) -> dict:
        """Map sorted vertex pair -> list of incident face indices.

        Raises TopologyError for degenerate faces or edges shared by more
        than two faces.
        """
        edges: dict = {}
        for fi, face in enumerate(self.faces):
            if len(face) < 3 or len(set(face)) != len(face):
                raise TopologyError(f"degenerate face {fi}: {face}")
            for a, b in zip(face, face[1:] + face[:1]):
                edges.setdefault((min(a, b), max(a, b)), []).append(fi)
        for e, fs in edges.items():
            if len(fs) > 2:
                raise TopologyError(f"non-manifold edge {e} shared by {len(fs)} faces")
        return edges

    def valence(self) -> np.ndarray:
        val = np.zeros(len(self.vertices), dtype=int)
        for a, b in self.edge_faces():
            val[a] += 1
            val[b] += 1
        return val

    def boundary_vertices(self) -> set:
        out = set()
        for (a, b), fs in self.edge_faces().items():
            if len(fs) == 1:
                out.update((a, b))
        return out


def _boundary_neighbors(mesh: QuadMesh, edges: dict) -> dict:
    nbrs: dict = {}
    for (a, b), fs in edges.items():
        if len(fs) == 1:
            nbrs.setdefault(a, []).append(b)
            nbrs.setdefault(b, []).append(a)
    for vi, ns in nbrs.items():
        if len(ns) != 2:
            raise TopologyError(f"vertex {vi} has {len(ns)} boundary edges")
    return nbrs


def catmull_clark_subdivide(mesh: QuadMesh) -> QuadMesh:
    """One Catmull-Clark step.

    New vertex layout: original vertices first, then one point per edge
    (in sorted-edge order), then one point per face. Boundaries use the
    cubic B-spline curve rules (edge midpoints, 1/8-6/8-1/8 vertex mask).
    """
    V = mesh.vertices
    edges = mesh.edge_faces()
    bnbrs = _boundary_neighbors(mesh, edges)
    face_pts = np.array([V[f].mean(axis=0) for f in mesh.faces])

    edge_list = sorted(edges)
    edge_index = {e: len(V) + k for k, e in enumerate(edge_list)}
    edge_pts = np.empty((len(edge_list), 3))
    for k, (a, b) in enumerate(edge_list):
        fs = edges[(a, b)]
        if len(fs) == 2:
            edge_pts[k] = (V[a] + V[b] + face_pts[fs[0]] + face_pts[fs[1]]) / 4.0
        else:
            edge_pts[k] = (V[a] + V[b]) / 2.0

    vert_faces = [[] for _ in range(len(V))]
    for fi, face in enumerate(mesh.faces):
        for vi in face:
            vert_faces[vi].append(fi)
    vert_edges = [[] for _ in range(len(V))]
    for a, b in edge_list:
        vert_edges[a].append((a, b))
        vert_edges[b].append((a, b))

    new_V = V.copy()
    for vi in range(len(V)):
        if vi in bnbrs:
            a, b = bnbrs[vi]
            new_V[vi] = (V[a] + 6.0 * V[vi] + V[b]) / 8.0
        elif vert_edges[vi]:
            n = len(vert_edges[vi])
            F = face_pts[vert_faces[vi]].mean(axis=0)
            R = np.mean([(V[a] + V[b]) / 2.0 for a, b in vert_edges[vi]], axis=0)
            new_V[vi] = (F + 2.0 * R + (n - 3.0) * V[vi]) / n

    f_base = len(V) + len(edge_list)
    faces = []
    for fi, face in enumerate(mesh.faces):
        k = len(face)
        for i in range(k):
            prev_v, cur, nxt = face[i - 1], face[i], face[(i + 1) % k]
            e_next = edge_index[(min(cur, nxt), max(cur, nxt))]
            e_prev = edge_index[(min(prev_v, cur), max(prev_v, cur))]
            faces.append([cur, e_next, f_base + fi, e_prev])
    return QuadMesh(np.vstack([new_V, edge_pts, face_pts]), faces)


def limit_positions(mesh: QuadMesh) -> np.ndarray:
    """Catmull-Clark limit positions of every vertex of an all-quad mesh.

    Interior vertex of valence n: (n^2 P + 4 sum(e) + sum(d)) / (n (n + 5))
    with ``e`` edge neighbours and ``d`` diagonal quad corners. Boundary
    vertices use the cubic B-spline curve limit (1, 4, 1) / 6.
    """
    if any(len(f) != 4 for f in mesh.faces):
        raise TopologyError("limit positions need an all-quad mesh")
    V = mesh.vertices
    edges = mesh.edge_faces()
    bnbrs = _boundary_neighbors(mesh, edges)
    nbr = [set() for _ in range(len(V))]
    for a, b in edges:
        nbr[a].add(b)
        nbr[b].add(a)
    diag = [[] for _ in range(len(V))]
    for face in mesh.faces:
        for i, vi in enumerate(face):
            diag[vi].append(face[(i + 2) % 4])
    out = V.copy()
    for vi in range(len(V)):
        if vi in bnbrs:
            a, b = bnbrs[vi]
            out[vi] = (V[a] + 4.0 * V[vi] + V[b]) / 6.0
        elif nbr[vi]:
            n = len(nbr[vi])
            e_sum = V[list(nbr[vi])].sum(axis=0)
            d_sum = V[diag[vi]].sum(axis=0)
            out[vi] = (n * n * V[vi] + 4.0 * e_sum + d_sum) / (n * (n + 5.0))
    return out


def read_obj(path) -> QuadMesh:
    """Read ``v`` and ``f`` records of a Wavefront OBJ file."""
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    k = int(tok.split("/")[0])
                    idx.append(k - 1 if k > 0 else len(verts) + k)
                faces.append(idx)
    return QuadMesh(np.array(verts), faces)


def write_obj(mesh: QuadMesh, path, lines=None):
    """Write vertices and faces (1-based); optional ``l`` polylines."""
    with open(path, "w") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
        for face in mesh.faces:
            fh.write("f " + " ".join(str(i + 1) for i in face) + "\n")
        for line in lines or ():
            fh.write("l " + " ".join(str(i + 1) for i in line) + "\n")
