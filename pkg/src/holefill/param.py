"""Boundary parameterization: nearest-plane and mean-value baselines,
closest-point projection onto B-spline surfaces, and pcurve extraction.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import DegeneracyError, ProjectionError, ShapeError
from .geom import BSplineSurface

#: Default number of boundary samples fed through the pipeline.
N_SAMPLES = 128
#: Parameter-domain box that baseline pcurves are normalized into.
UV_MARGIN = 0.05


# ---------------------------------------------------------------------------
# Data types
# ---------------------------------------------------------------------------

@dataclass
class HoleBoundary:
    """Closed loop of boundary samples with optional surface attributes.

    ``normals`` and ``curvatures`` describe the surrounding surface: its unit
    normal and its normal curvature in the cross-boundary direction
    ``normal x tangent``. ``segment_offsets`` mark where each boundary curve
    starts.
    """

    samples: np.ndarray
    normals: Optional[np.ndarray] = None
    curvatures: Optional[np.ndarray] = None
    segment_offsets: list = field(default_factory=list)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float).reshape(-1, 3)
        n = len(self.samples)
        if n < 3:
            raise ShapeError("a hole boundary needs at least 3 samples")
        gaps = np.linalg.norm(np.roll(self.samples, -1, axis=0) - self.samples, axis=1)
        if np.any(gaps == 0.0):
            raise ValueError("consecutive boundary samples coincide")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            if len(self.normals) != n:
                raise ShapeError("normals must have one entry per sample")
            if np.any(np.abs(np.linalg.norm(self.normals, axis=1) - 1.0) > 1e-8):
                raise ValueError("boundary normals must be unit length")
        if self.curvatures is not None:
            self.curvatures = np.asarray(self.curvatures, dtype=float).ravel()
            if len(self.curvatures) != n:
                raise ShapeError("curvatures must have one entry per sample")
        self.segment_offsets = [int(k) for k in self.segment_offsets]
        if any(k < 0 or k >= n for k in self.segment_offsets):
            raise ValueError("segment offset out of range")

    def __len__(self):
        return len(self.samples)

    def tangents(self) -> np.ndarray:
        """Unit tangents by central differences around the loop."""
        t = np.roll(self.samples, -1, axis=0) - np.roll(self.samples, 1, axis=0)
        return t / np.linalg.norm(t, axis=1, keepdims=True)

    def to_dict(self) -> dict:
        out = {"samples": self.samples.tolist(),
               "segment_offsets": list(self.segment_offsets)}
        if self.normals is not None:
            out["normals"] = self.normals.tolist()
        if self.curvatures is not None:
            out["curvatures"] = self.curvatures.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "HoleBoundary":
        return cls(data["samples"], data.get("normals"), data.get("curvatures"),
                   data.get("segment_offsets", []))


@dataclass
class PCurve:
    """Trimming curve as a closed polyline in the unit parameter square."""

    params: np.ndarray

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float).reshape(-1, 2)
        if np.any(self.params < 0.0) or np.any(self.params > 1.0):
            raise ValueError("pcurve parameters must lie in [0, 1]^2")

    def __len__(self):
        return len(self.params)

    @property
    def self_intersecting(self) -> bool:
        return has_self_intersection(self.params)

    def to_dict(self) -> dict:
        return {"params": self.params.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "PCurve":
        return cls(data["params"])


@dataclass(frozen=True)
class FitPlane:
    origin: np.ndarray
    normal: np.ndarray
    e1: np.ndarray
    e2: np.ndarray

    def to_plane(self, points) -> np.ndarray:
        """In-plane coordinates (m, 2) of the orthogonal projections."""
        d = np.asarray(points, dtype=float) - self.origin
        return np.stack([d @ self.e1, d @ self.e2], axis=-1)


class ProjectionResult(NamedTuple):
    u: float
    v: float
    distance: float
    converged: bool


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def save_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj.to_dict() if hasattr(obj, "to_dict") else obj, fh)


# ---------------------------------------------------------------------------
# Loop utilities
# ---------------------------------------------------------------------------

def loop_arclength(points) -> np.ndarray:
    """Cumulative arc length at each vertex of a closed polyline, plus the
    total length as a final entry (length n + 1)."""
    pts = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def resample_loop(points, n: int, values=None):
    """Uniform arc-length resampling of a closed polyline.

    ``values`` (m, k) are interpolated alongside the points. Returns the
    new points, the interpolated values (or None), and the fractional source
    positions of each new sample.
    """
    pts = np.asarray(points, dtype=float)
    m = len(pts)
    s = loop_arclength(pts)
    targets = np.arange(n) * s[-1] / n
    idx = np.clip(np.searchsorted(s, targets, side="right") - 1, 0, m - 1)
    frac = (targets - s[idx]) / (s[idx + 1] - s[idx])
    nxt = (idx + 1) % m
    new = pts[idx] * (1.0 - frac)[:, None] + pts[nxt] * frac[:, None]
    new_vals = None
    if values is not None:
        vals = np.asarray(values, dtype=float).reshape(m, -1)
        new_vals = vals[idx] * (1.0 - frac)[:, None] + vals[nxt] * frac[:, None]
    return new, new_vals, idx + frac


def _segments_intersect(a, b, c, d, eps=0.0):
    """Vectorized closed-segment intersection test for [a,b] vs [c,d]."""
    def orient(p, q, r):
        return ((q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1])
                - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0]))

    def on_seg(p, q, r):
        return ((np.minimum(p[..., 0], q[..., 0]) <= r[..., 0])
                & (r[..., 0] <= np.maximum(p[..., 0], q[..., 0]))
                & (np.minimum(p[..., 1], q[..., 1]) <= r[..., 1])
                & (r[..., 1] <= np.maximum(p[..., 1], q[..., 1])))

    o1, o2 = orient(a, b, c), orient(a, b, d)
    o3, o4 = orient(c, d, a), orient(c, d, b)
    proper = (((o1 > eps) & (o2 < -eps)) | ((o1 < -eps) & (o2 > eps))) & \
             (((o3 > eps) & (o4 < -eps)) | ((o3 < -eps) & (o4 > eps)))
    touch = ((np.abs(o1) <= eps) & on_seg(a, b, c)) | \
            ((np.abs(o2) <= eps) & on_seg(a, b, d)) | \
            ((np.abs(o3) <= eps) & on_seg(c, d, a)) | \
            ((np.abs(o4) <= eps) & on_seg(c, d, b))
    return proper | touch


def self_intersection_pairs(uv) -> np.ndarray:
    """Index pairs (i, j), i < j, of non-adjacent segments of the closed
    polyline ``uv`` that intersect (touching and overlap included)."""
    uv = np.asarray(uv, dtype=float)
    n = len(uv)
    a, b = uv, np.roll(uv, -1, axis=0)
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    hit = _segments_intersect(a[i], b[i], a[j], b[j])
    return np.stack([i[hit], j[hit]], axis=1)


def has_self_intersection(uv) -> bool:
    return len(self_intersection_pairs(uv)) > 0


def normalize_to_box(uv, margin: float = UV_MARGIN) -> np.ndarray:
    """Uniformly scale and center 2D points so their bounding box fits in
    ``[margin, 1 - margin]^2`` (the longer side spans it exactly)."""
    uv = np.asarray(uv, dtype=float)
    lo, hi = uv.min(axis=0), uv.max(axis=0)
    extent = float(np.max(hi - lo))
    if extent == 0.0:
        raise DegeneracyError("cannot normalize a zero-extent point set")
    scale = (1.0 - 2.0 * margin) / extent
    out = (uv - (lo + hi) / 2.0) * scale + 0.5
    return np.clip(out, margin, 1.0 - margin)


# ---------------------------------------------------------------------------
# Nearest-plane and mean-value baselines
# ---------------------------------------------------------------------------

def nearest_plane(points) -> FitPlane:
    """Least-squares plane through a point set.

    The normal is the direction of least variance of the centered points
    (sign chosen so its largest component is positive). The in-plane axis
    ``e1`` is the projection of the world axis least aligned with the normal,
    so axis-aligned inputs give axis-aligned frames.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        raise DegeneracyError("need at least three points for a plane")
    origin = pts.mean(axis=0)
    _, sv, vt = np.linalg.svd(pts - origin, full_matrices=False)
    if sv[0] <= 1e-12 * max(1.0, np.abs(pts).max()) or sv[1] <= 1e-10 * sv[0]:
        raise DegeneracyError("points are coincident or collinear")
    normal = vt[2] if vt.shape[0] > 2 else np.cross(vt[0], vt[1])
    normal = normal / np.linalg.norm(normal)
    if normal[np.argmax(np.abs(normal))] < 0:
        normal = -normal
    axis = np.eye(3)[np.argmin(np.abs(normal))]
    e1 = axis - (axis @ normal) * normal
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    return FitPlane(origin, normal, e1, e2)


def np_pcurve(boundary: HoleBoundary) -> PCurve:
    """Nearest-plane parameterization: project onto the fitted plane and
    normalize into the margin box."""
    plane = nearest_plane(boundary.samples)
    return PCurve(normalize_to_box(plane.to_plane(boundary.samples)))


def _tan_half_angles(x, verts):
    """tan(alpha_i / 2) for the angles at ``x`` between consecutive ``verts``,
    plus a mask of (near-)straight angles where x lies on the chord."""
    a = verts - x
    b = np.roll(verts, -1, axis=0) - x
    la = np.linalg.norm(a, axis=1)
    lb = np.linalg.norm(b, axis=1)
    cross = np.linalg.norm(np.cross(a, b), axis=1)
    dot = np.einsum("ij,ij->i", a, b)
    denom = la * lb + dot
    straight = denom <= 1e-14 * la * lb
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(straight, np.inf, cross / denom)
    return t, straight, la


def mvc_weights(x, verts) -> np.ndarray:
    """Mean value coordinates of point ``x`` w.r.t. a closed polygon.

    Works in 2D or 3D (angles measured in the plane spanned at ``x``). Points
    on a vertex get the Lagrange weight; points on an edge get linear
    interpolation between its endpoints.
    """
    verts = np.asarray(verts, dtype=float)
    x = np.asarray(x, dtype=float)
    if verts.shape[1] == 2:
        verts = np.column_stack([verts, np.zeros(len(verts))])
        x = np.append(x, 0.0)
    m = len(verts)
    w = np.zeros(m)
    dist = np.linalg.norm(verts - x, axis=1)
    scale = max(float(dist.max()), 1e-300)
    hit = np.flatnonzero(dist <= 1e-14 * scale)
    if len(hit):
        w[hit[0]] = 1.0
        return w
    t, straight, la = _tan_half_angles(x, verts)
    if np.any(straight):
        i = int(np.flatnonzero(straight)[0])
        j = (i + 1) % m
        lb = dist[j]
        w[i] = lb / (la[i] + lb)
        w[j] = la[i] / (la[i] + lb)
        return w
    w = (np.roll(t, 1) + t) / la
    return w / w.sum()


def mvc_pcurve(boundary: HoleBoundary) -> PCurve:
    """Mean-value-coordinate parameterization.

    Anchors (the segment offsets, at least three of them) are placed on the
    unit circle at angles proportional to their cumulative boundary arc
    length; every other sample maps to the MVC-weighted combination of the
    anchor positions. With fewer than three anchors the arc length is mapped
    straight onto the circle.
    """
    pts = boundary.samples
    s = loop_arclength(pts)
    angle = 2.0 * np.pi * s[:-1] / s[-1]
    anchors = sorted(set(boundary.segment_offsets))
    if len(anchors) < 3:
        uv = np.column_stack([np.cos(angle), np.sin(angle)])
        return PCurve(normalize_to_box(uv))
    anchor_uv = np.column_stack([np.cos(angle[anchors]), np.sin(angle[anchors])])
    anchor_xyz = pts[anchors]
    uv = np.empty((len(pts), 2))
    for k, x in enumerate(pts):
        uv[k] = mvc_weights(x, anchor_xyz) @ anchor_uv
    return PCurve(normalize_to_box(uv))


# ---------------------------------------------------------------------------
# Closest-point projection
# ---------------------------------------------------------------------------

def _newton_project(surface: BSplineSurface, points, seeds, max_iter=50,
                    tol=1e-10):
    """Bound-constrained Newton point inversion, vectorized over points.

    Returns (uv, distance, converged) arrays. Coordinates sitting on the
    boundary of [0, 1]^2 with an outward-pointing gradient are held fixed
    (projected Newton); every accepted step decreases the squared distance.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    uv = np.clip(np.asarray(seeds, dtype=float).reshape(-1, 2), 0.0, 1.0)
    m = len(p)
    converged = np.zeros(m, dtype=bool)
    active = np.ones(m, dtype=bool)

    def f_of(uv_, p_):
        d = surface.derivatives(uv_[:, 0], uv_[:, 1], order=0)[:, 0, 0] - p_
        return np.einsum("ij,ij->i", d, d)

    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        x = uv[idx]
        D = surface.derivatives(x[:, 0], x[:, 1], order=2)
        r = D[:, 0, 0] - p[idx]
        su, sv = D[:, 1, 0], D[:, 0, 1]
        g = np.column_stack([np.einsum("ij,ij->i", r, su),
                             np.einsum("ij,ij->i", r, sv)])
        H = np.empty((len(idx), 2, 2))
        H[:, 0, 0] = np.einsum("ij,ij->i", su, su) + np.einsum("ij,ij->i", r, D[:, 2, 0])
        H[:, 1, 1] = np.einsum("ij,ij->i", sv, sv) + np.einsum("ij,ij->i", r, D[:, 0, 2])
        H[:, 0, 1] = H[:, 1, 0] = (np.einsum("ij,ij->i", su, sv)
                                   + np.einsum("ij,ij->i", r, D[:, 1, 1]))
        # fall back to Gauss-Newton where the full Hessian is not PD
        det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] ** 2
        bad = (H[:, 0, 0] <= 0) | (det <= 1e-14 * (H[:, 0, 0] * H[:, 1, 1] + 1e-300))
        if np.any(bad):
            H[bad, 0, 0] = np.einsum("ij,ij->i", su[bad], su[bad])
            H[bad, 1, 1] = np.einsum("ij,ij->i", sv[bad], sv[bad])
            H[bad, 0, 1] = H[bad, 1, 0] = np.einsum("ij,ij->i", su[bad], sv[bad])
            H[bad] += 1e-12 * np.eye(2)

        fixed = ((x <= 0.0) & (g > 0.0)) | ((x >= 1.0) & (g < 0.0))
        step = np.zeros_like(x)
        both = ~fixed[:, 0] & ~fixed[:, 1]
        if np.any(both):
            step[both] = -np.linalg.solve(H[both], g[both][..., None])[..., 0]
        only_u = ~fixed[:, 0] & fixed[:, 1]
        step[only_u, 0] = -g[only_u, 0] / H[only_u, 0, 0]
        only_v = fixed[:, 0] & ~fixed[:, 1]
        step[only_v, 1] = -g[only_v, 1] / H[only_v, 1, 1]

        f0 = np.einsum("ij,ij->i", r, r)
        t = np.ones(len(idx))
        new = np.clip(x + step, 0.0, 1.0)
        f1 = f_of(new, p[idx])
        for _ in range(30):
            worse = f1 > f0 * (1.0 + 1e-13) + 1e-300
            if not np.any(worse):
                break
            t[worse] *= 0.5
            new[worse] = np.clip(x[worse] + t[worse, None] * step[worse], 0.0, 1.0)
            f1[worse] = f_of(new[worse], p[idx][worse])
        worse = f1 > f0 * (1.0 + 1e-13) + 1e-300
        new[worse] = x[worse]

        moved = np.max(np.abs(new - x), axis=1)
        uv[idx] = new
        done = (moved < tol) | worse
        converged[idx[done]] = True
        active[idx[done]] = False

    dist = np.sqrt(f_of(uv, p))
    return uv, dist, converged


def _grid_seeds(surface: BSplineSurface, points, seed_grid: int, k: int):
    g = np.linspace(0.0, 1.0, seed_grid)
    grid = surface.evaluate_grid(g, g)[:, :, 0, 0].reshape(-1, 3)
    uu, vv = np.meshgrid(g, g, indexing="ij")
    guv = np.column_stack([uu.ravel(), vv.ravel()])
    d2 = ((points[:, None, :] - grid[None, :, :]) ** 2).sum(axis=2)
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return guv[order]                                   # (m, k, 2)


def _best_of(points, seeds, surface, **kw):
    m, k = seeds.shape[:2]
    uv, dist, conv = _newton_project(surface, np.repeat(points, k, axis=0),
                                     seeds.reshape(-1, 2), **kw)
    uv, dist, conv = uv.reshape(m, k, 2), dist.reshape(m, k), conv.reshape(m, k)
    best = np.argmin(dist, axis=1)
    rows = np.arange(m)
    return uv[rows, best], dist[rows, best], conv[rows, best]


def project_to_surface(surface: BSplineSurface, p, seed_grid: int = 16,
                       seed=None, n_seeds: int = 4, max_iter: int = 50,
                       tol: float = 1e-10) -> ProjectionResult:
    """Closest point on ``surface`` to ``p``.

    Newton iterations start from the ``n_seeds`` nearest nodes of a
    ``seed_grid`` x ``seed_grid`` parameter grid (plus ``seed`` if given);
    the best local minimizer wins. ``converged`` is False when no start
    reached the step tolerance.
    """
    p = np.asarray(p, dtype=float).reshape(1, 3)
    seeds = _grid_seeds(surface, p, seed_grid, n_seeds)[0]
    if seed is not None:
        seeds = np.vstack([np.asarray(seed, dtype=float).reshape(1, 2), seeds])
    uv, dist, conv = _newton_project(surface, np.repeat(p, len(seeds), axis=0),
                                     seeds, max_iter=max_iter, tol=tol)
    order = np.argsort(dist, kind="stable")
    ok = order[conv[order]]
    best = int(ok[0]) if len(ok) else int(order[0])
    return ProjectionResult(float(uv[best, 0]), float(uv[best, 1]),
                            float(dist[best]), bool(conv[best]))


@dataclass
class ProjectionDiagnostics:
    params: np.ndarray
    distances: np.ndarray
    converged: np.ndarray

    @property
    def ratio(self) -> float:
        return float(np.mean(self.converged))


def pcurve_from_projection(surface: BSplineSurface, boundary: HoleBoundary,
                           seed_grid: int = 16, min_ratio: float = 0.95,
                           return_diagnostics: bool = False):
    """Project every boundary sample onto ``surface`` and read off (u, v).

    Pass one starts Newton from the two nearest seed-grid nodes of each
    sample. Pass two re-runs each sample from its predecessor's pass-one
    result (continuity seeding) and keeps whichever is closer. Raises
    ProjectionError when fewer than ``min_ratio`` of the samples converge.
    """
    pts = boundary.samples
    seeds = _grid_seeds(surface, pts, seed_grid, 2)
    uv, dist, conv = _best_of(pts, seeds, surface)
    uv2, dist2, conv2 = _newton_project(surface, pts, np.roll(uv, 1, axis=0))
    better = (dist2 < dist) & conv2
    uv[better], dist[better], conv[better] = uv2[better], dist2[better], True
    diag = ProjectionDiagnostics(uv, dist, conv)
    if diag.ratio < min_ratio:
        raise ProjectionError(
            f"only {diag.ratio:.1%} of samples converged (< {min_ratio:.0%})",
            diag)
    pc = PCurve(uv)
    return (pc, diag) if return_diagnostics else pc


# ---------------------------------------------------------------------------
# Metric
# ---------------------------------------------------------------------------

def parameter_error(predicted: PCurve, ground_truth: PCurve,
                    align: bool = True) -> float:
    """Mean Euclidean distance between corresponding pcurve samples.

    With ``align`` the ground truth is cyclically shifted to the start index
    that minimizes the error.
    """
    a = predicted.params if isinstance(predicted, PCurve) else np.asarray(predicted)
    b = ground_truth.params if isinstance(ground_truth, PCurve) else np.asarray(ground_truth)
    if a.shape != b.shape:
        raise ShapeError(f"pcurve sizes differ: {a.shape} vs {b.shape}")
    if not align:
        return float(np.mean(np.linalg.norm(a - b, axis=1)))
    n = len(a)
    idx = (np.arange(n)[:, None] + np.arange(n)[None, :]) % n
    errs = np.linalg.norm(a[None, :, :] - b[idx], axis=2).mean(axis=1)
    return float(errs.min())


# ---------------------------------------------------------------------------
# Canonical layout
# ---------------------------------------------------------------------------

def signed_area(xy) -> float:
    xy = np.asarray(xy, dtype=float)
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def canonical_order(boundary: HoleBoundary) -> np.ndarray:
    """Permutation putting a boundary in canonical layout.

    The loop runs counterclockwise about the nearest-plane normal (oriented
    along the mean attribute normal when normals are present) and starts at
    the first segment offset.
    """
    plane = nearest_plane(boundary.samples)
    normal, e1 = plane.normal, plane.e1
    if boundary.normals is not None and normal @ boundary.normals.mean(axis=0) < 0:
        normal = -normal
    e2 = np.cross(normal, e1)
    d = boundary.samples - plane.origin
    n = len(boundary)
    order = np.arange(n)
    if signed_area(np.column_stack([d @ e1, d @ e2])) < 0:
        order = (-order) % n
    if boundary.segment_offsets:
        start = int(np.flatnonzero(order == boundary.segment_offsets[0])[0])
        order = np.roll(order, -start)
    return order


def reorder(boundary: HoleBoundary, order) -> HoleBoundary:
    order = np.asarray(order)
    pos = np.argsort(order)
    offsets = sorted(int(pos[k]) for k in boundary.segment_offsets)
    return HoleBoundary(
        boundary.samples[order],
        None if boundary.normals is None else boundary.normals[order],
        None if boundary.curvatures is None else boundary.curvatures[order],
        offsets)


def resample_boundary(boundary: HoleBoundary, n: int = N_SAMPLES) -> HoleBoundary:
    """Uniform arc-length resampling starting at the first segment offset;
    attributes are interpolated linearly (normals renormalized)."""
    start = boundary.segment_offsets[0] if boundary.segment_offsets else 0
    rolled = reorder(boundary, np.roll(np.arange(len(boundary)), -start))
    cols = []
    if rolled.normals is not None:
        cols.append(rolled.normals)
    if rolled.curvatures is not None:
        cols.append(rolled.curvatures[:, None])
    vals = np.hstack(cols) if cols else None
    pts, new_vals, src = resample_loop(rolled.samples, n, vals)
    normals = curv = None
    if rolled.normals is not None:
        normals = new_vals[:, :3] / np.linalg.norm(new_vals[:, :3], axis=1,
                                                   keepdims=True)
    if rolled.curvatures is not None:
        curv = new_vals[:, -1]
    m = len(boundary)
    offsets = []
    for k in rolled.segment_offsets:
        gap = np.abs(src - k)
        gap = np.minimum(gap, m - gap)
        offsets.append(int(np.argmin(gap)))
    return HoleBoundary(pts, normals, curv, sorted(set(offsets)))


def prepare_boundary(boundary: HoleBoundary, n: int = N_SAMPLES) -> HoleBoundary:
    """Resample (only when the count differs from ``n``) and canonicalize."""
    if len(boundary) != n:
        boundary = resample_boundary(boundary, n)
    return reorder(boundary, canonical_order(boundary))
