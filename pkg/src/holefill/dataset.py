"""Synthetic training data: fair random B-spline surfaces trimmed by
procedural pcurves.

A record pairs a hole boundary (sampled along a pcurve of a known surface)
with that surface, its voxel labels and its interior knots. Everything is
mapped into the unit cube by a uniform scale derived from the boundary
alone, so the same transform can be computed for unseen boundaries.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigurationError, NormalizationError
from .fairing import SurfaceLayout, assemble_fairness, fairness_energy, trim_tangents
from .geom import (BSplineSurface, KnotVector, _normal_curvature_uv,
                   tangent_to_param_direction, unit_normals)
from .param import N_SAMPLES, HoleBoundary, PCurve, canonical_order
from .voxel import RefinementLabelSet, encode_refinement

GENERATOR_VERSION = "1"
FAMILIES = ("procedural", "patch-sampled", "folded", "hairpin")
GRID = 8
DEGREE = 3
MIN_KNOT_GAP = 0.02
#: Half-width of the box the longest boundary axis is scaled into.
BOUNDARY_HALF_SPAN = 0.18
DENSE = 2048


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Normalization:
    """Uniform map ``x -> (x - center) * scale + 0.5``."""

    center: np.ndarray
    scale: float

    @classmethod
    def from_boundary(cls, samples) -> "Normalization":
        pts = np.asarray(samples, dtype=float)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        extent = float(np.max(hi - lo))
        if not extent > 0.0:
            raise NormalizationError("boundary has zero extent")
        return cls((lo + hi) / 2.0, 2.0 * BOUNDARY_HALF_SPAN / extent)

    def apply(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.center) * self.scale + 0.5

    def invert(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=float) - 0.5) / self.scale + self.center

    def surface(self, surface: BSplineSurface, inverse=False) -> BSplineSurface:
        f = self.invert if inverse else self.apply
        return surface.with_control_points(f(surface.control_points))

    def boundary(self, boundary: HoleBoundary, inverse=False) -> HoleBoundary:
        f = self.invert if inverse else self.apply
        curv = boundary.curvatures
        if curv is not None:
            curv = curv * self.scale if inverse else curv / self.scale
        return HoleBoundary(f(boundary.samples), boundary.normals, curv,
                            boundary.segment_offsets)

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "scale": self.scale}

    @classmethod
    def from_dict(cls, d) -> "Normalization":
        return cls(np.asarray(d["center"], dtype=float), float(d["scale"]))


# ---------------------------------------------------------------------------
# Surfaces
# ---------------------------------------------------------------------------

def random_interior_knots(rng, count=GRID - DEGREE - 1, min_gap=MIN_KNOT_GAP):
    """Sorted uniform draws, redrawn until every gap (ends included) is at
    least ``min_gap``."""
    while True:
        k = np.sort(rng.uniform(0.0, 1.0, count))
        if np.min(np.diff(np.concatenate([[0.0], k, [1.0]]))) >= min_gap:
            return k


def greville(knots: KnotVector) -> np.ndarray:
    p = knots.degree
    t = knots.values
    return np.array([t[i + 1: i + p + 1].mean() for i in range(knots.n_basis)])


def random_frame(rng) -> np.ndarray:
    """Random rotation (rows are the new x, y, z axes)."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] = -q[:, 2]
    return q.T


def _procedural_grid(rng, x, y):
    h = np.zeros_like(x)
    for _ in range(3):
        freq = rng.uniform(0.3, 1.2)
        ang = rng.uniform(0.0, 2.0 * np.pi)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amp = rng.uniform(0.03, 0.12)
        h += amp * np.sin(2.0 * np.pi * freq * (np.cos(ang) * x + np.sin(ang) * y)
                          + phase)
    return np.stack([x, y, h], axis=-1)


def _quadric_grid(rng, x, y):
    a, b, c = rng.uniform(-0.8, 0.8, 3)
    return np.stack([x, y, a * x * x + b * x * y + c * y * y], axis=-1)


def _folded_grid(rng, x, y):
    """Strongly bent strip: a (tapered, twisted) cylinder section wrapping
    between roughly 230 and 340 degrees."""
    span = rng.uniform(4.0, 6.0)
    twist = rng.uniform(-1.2, 1.2)
    taper = rng.uniform(-0.3, 0.3)
    radius = (1.0 + taper * y) / span
    theta = x * span + twist * y
    return np.stack([radius * np.sin(theta), y, radius * np.cos(theta)], axis=-1)


def _hairpin_grid(rng, x, y):
    """Strip folded back on itself around a tight bend, so its two legs
    overlap when seen along the fold normal."""
    r = rng.uniform(0.08, 0.15)
    s0 = rng.uniform(-0.1, 0.1)
    h = np.pi * r / 2.0
    phi = np.clip((x - (s0 - h)) / r, 0.0, np.pi)
    cx = np.where(x < s0 - h, x - (s0 - h),
                  np.where(x > s0 + h, -(x - (s0 + h)), r * np.sin(phi)))
    cz = np.where(x < s0 - h, r, np.where(x > s0 + h, -r, r * np.cos(phi)))
    shear = rng.uniform(-0.3, 0.3)
    taper = rng.uniform(-0.3, 0.3)
    return np.stack([cx, y * (1.0 + taper * x) + shear * x, cz], axis=-1)


_BUILDERS = {"procedural": _procedural_grid, "patch-sampled": _quadric_grid,
             "folded": _folded_grid, "hairpin": _hairpin_grid}


def generate_surface(seed: int, family: str = "procedural") -> BSplineSurface:
    """Random 8 x 8 clamped cubic surface of roughly unit size.

    The control grid samples a smooth shape at the Greville abscissae of
    random knot vectors, then gets a random rigid orientation.
    """
    if family not in _BUILDERS:
        raise ConfigurationError(f"unknown surface family {family!r}")
    rng = np.random.default_rng(seed)
    ku = KnotVector.from_interior(random_interior_knots(rng), DEGREE)
    kv = KnotVector.from_interior(random_interior_knots(rng), DEGREE)
    x, y = np.meshgrid(greville(ku) - 0.5, greville(kv) - 0.5, indexing="ij")
    grid = _BUILDERS[family](rng, x, y)
    return BSplineSurface(ku, kv, grid @ random_frame(rng))


def _bicubic_field(rng, s, t):
    """Random bicubic Bezier vector field evaluated on the grid (s, t)."""
    ctrl = rng.uniform(-1.0, 1.0, size=(4, 4, 3))
    k = np.arange(4)
    binom = np.array([1.0, 3.0, 3.0, 1.0])
    bs = binom * s[..., None] ** k * (1.0 - s[..., None]) ** (3 - k)
    bt = binom * t[..., None] ** k * (1.0 - t[..., None]) ** (3 - k)
    return np.einsum("...i,...j,ijc->...c", bs, bt, ctrl)


def add_fair_noise(surface: BSplineSurface, level: float, seed: int = 0,
                   max_ratio: float = 4.0, tries: int = 20) -> BSplineSurface:
    """Perturb control points by a smooth low-frequency displacement whose
    largest magnitude equals ``level``.

    Candidates that raise the fairness energy by more than ``max_ratio`` are
    redrawn; after ``tries`` attempts the lowest-energy candidate is used.
    """
    if level < 0:
        raise ValueError("noise level must be non-negative")
    if level == 0:
        return surface
    rng = np.random.default_rng(seed)
    s, t = np.meshgrid(greville(surface.knots_u), greville(surface.knots_v),
                       indexing="ij")
    A = assemble_fairness(SurfaceLayout.of(surface))
    e0 = fairness_energy(A, surface.control_points)
    best, best_e = None, math.inf
    for _ in range(tries):
        disp = _bicubic_field(rng, s, t)
        disp *= level / np.max(np.linalg.norm(disp, axis=-1))
        cand = surface.with_control_points(surface.control_points + disp)
        e = fairness_energy(A, cand.control_points)
        if e <= max_ratio * e0:
            return cand
        if e < best_e:
            best, best_e = cand, e
    return best


# ---------------------------------------------------------------------------
# Pcurve library
# ---------------------------------------------------------------------------

@dataclass
class LoopShape:
    """Dense closed counterclockwise polyline in the parameter square with
    anchor indices (anchor 0 sits at index 0)."""

    kind: str
    params: np.ndarray
    anchors: list


def _polar_loop(center, radius_fn, m=DENSE):
    th = 2.0 * np.pi * np.arange(m) / m
    r = radius_fn(th)
    return center + np.column_stack([r * np.cos(th), r * np.sin(th)]), th


def _fit_box(uv, center, lo=0.1, hi=0.9):
    """Shrink a loop about ``center`` (if needed) so it fits ``[lo, hi]^2``."""
    d = uv - center
    with np.errstate(divide="ignore", invalid="ignore"):
        limits = np.where(d > 0, (hi - center) / d,
                          np.where(d < 0, (lo - center) / d, np.inf))
    shrink = min(1.0, float(np.min(limits)))
    return center + d * shrink


def _ellipse(rng):
    c = rng.uniform(0.45, 0.55, 2)
    a, b = rng.uniform(0.25, 0.4, 2)
    rot = rng.uniform(0, np.pi)
    harm = [(k, rng.uniform(0, 0.04), rng.uniform(0, 2 * np.pi)) for k in (2, 3, 4)]

    def radius(th):
        base = a * b / np.sqrt((b * np.cos(th - rot)) ** 2 + (a * np.sin(th - rot)) ** 2)
        return base * (1.0 + sum(h * np.cos(k * th + p) for k, h, p in harm))

    uv, _ = _polar_loop(c, radius)
    m = len(uv)
    return LoopShape("ellipse", _fit_box(uv, c), [0, m // 4, m // 2, 3 * m // 4])


def _star(rng):
    c = rng.uniform(0.45, 0.55, 2)
    k = int(rng.integers(3, 6))
    amp = rng.uniform(0.15, 0.3)
    r0 = rng.uniform(0.27, 0.38) / (1.0 + amp)
    phase = rng.uniform(0, 2 * np.pi / k)
    uv, th = _polar_loop(c, lambda t: r0 * (1.0 + amp * np.cos(k * (t - phase))))
    m = len(uv)
    tips = sorted(int(round((phase + 2 * np.pi * j / k) / (2 * np.pi) * m)) % m
                  for j in range(k))
    return LoopShape("star", _fit_box(uv, c), tips)


def _rounded_polygon(rng):
    c = rng.uniform(0.45, 0.55, 2)
    k = int(rng.integers(3, 7))
    r = rng.uniform(0.38, 0.45)
    ang = np.sort(2 * np.pi * (np.arange(k) + rng.uniform(-0.2, 0.2, k)) / k
                  + rng.uniform(0, 2 * np.pi)) % (2 * np.pi)
    ang = np.sort(ang)
    verts = c + r * np.column_stack([np.cos(ang), np.sin(ang)])
    poly = verts
    for _ in range(5):                       # corner cutting
        nxt = np.roll(poly, -1, axis=0)
        poly = np.stack([0.75 * poly + 0.25 * nxt, 0.25 * poly + 0.75 * nxt],
                        axis=1).reshape(-1, 2)
    # resample densely by polar angle about the center
    th_poly = np.unwrap(np.arctan2(poly[:, 1] - c[1], poly[:, 0] - c[0]))
    start = np.argmin(th_poly)
    th_poly = np.roll(th_poly, -start)
    rad = np.roll(np.linalg.norm(poly - c, axis=1), -start)
    th_poly = th_poly - th_poly[0]
    th = 2 * np.pi * np.arange(DENSE) / DENSE
    base = np.arctan2(poly[start, 1] - c[1], poly[start, 0] - c[0])
    rr = np.interp((th - base) % (2 * np.pi), np.append(th_poly, 2 * np.pi),
                   np.append(rad, rad[0]))
    uv = c + rr[:, None] * np.column_stack([np.cos(th), np.sin(th)])
    corners = sorted({int(round(a / (2 * np.pi) * DENSE)) % DENSE for a in ang})
    return LoopShape("polygon", _fit_box(uv, c), corners)


def _start_at_first_anchor(shape: LoopShape) -> LoopShape:
    """Rotate so the anchor nearest the +u direction is index 0."""
    c = shape.params.mean(axis=0)
    d = shape.params[shape.anchors] - c
    ang = np.abs(np.arctan2(d[:, 1], d[:, 0]))
    first = shape.anchors[int(np.argmin(ang))]
    m = len(shape.params)
    anchors = sorted((a - first) % m for a in shape.anchors)
    return LoopShape(shape.kind, np.roll(shape.params, -first, axis=0), anchors)


_LOOPS = {"ellipse": _ellipse, "star": _star, "polygon": _rounded_polygon}


def make_pcurve_library(seed: int, count: int = 64, kinds=tuple(_LOOPS)) -> list:
    """Procedural closed loops inside [0.1, 0.9]^2 (perturbed ellipses,
    stars, rounded polygons), cycling through ``kinds``."""
    rng = np.random.default_rng(seed)
    return [_start_at_first_anchor(_LOOPS[kinds[i % len(kinds)]](rng))
            for i in range(count)]


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass
class DatasetRecord:
    record_id: int
    surface_id: int
    boundary: HoleBoundary
    target_surface: BSplineSurface
    target_labels: RefinementLabelSet
    target_knots: np.ndarray
    pcurve_gt: PCurve
    normalization: Normalization
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"record_id": self.record_id, "surface_id": self.surface_id,
                "boundary": self.boundary.to_dict(),
                "target_surface": self.target_surface.to_dict(),
                "target_labels": self.target_labels.to_dict(),
                "target_knots": self.target_knots.tolist(),
                "pcurve_gt": self.pcurve_gt.to_dict(),
                "normalization": self.normalization.to_dict(),
                "provenance": self.provenance}

    @classmethod
    def from_dict(cls, d) -> "DatasetRecord":
        return cls(int(d["record_id"]), int(d["surface_id"]),
                   HoleBoundary.from_dict(d["boundary"]),
                   BSplineSurface.from_dict(d["target_surface"]),
                   RefinementLabelSet.from_dict(d["target_labels"]),
                   np.asarray(d["target_knots"], dtype=float),
                   PCurve.from_dict(d["pcurve_gt"]),
                   Normalization.from_dict(d["normalization"]),
                   d.get("provenance", {}))


def boundary_attributes(surface: BSplineSurface, uv):
    """Unit normals and cross-boundary normal curvature along a sampled
    pcurve, the latter in direction ``normal x (J . central difference)``."""
    D = surface.derivatives(uv[:, 0], uv[:, 1], order=2)
    normals = unit_normals(D[:, 1, 0], D[:, 0, 1])
    J = np.stack([D[:, 1, 0], D[:, 0, 1]], axis=-1)
    w = np.cross(normals, trim_tangents(J, PCurve(uv)))
    d = tangent_to_param_direction(D[:, 1, 0], D[:, 0, 1], w)
    return D[:, 0, 0], normals, _normal_curvature_uv(D, normals, d)


def sample_loop(surface: BSplineSurface, shape: LoopShape, n: int = N_SAMPLES):
    """Parameters of ``n`` samples spaced uniformly in 3D arc length along
    the image of ``shape``, starting at its first anchor, plus the sample
    index of every anchor."""
    dense = shape.params
    pts = surface.evaluate(dense[:, 0], dense[:, 1])
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.arange(n) * s[-1] / n
    closed = np.vstack([dense, dense[:1]])
    uv = np.column_stack([np.interp(targets, s, closed[:, 0]),
                          np.interp(targets, s, closed[:, 1])])
    offsets = sorted({int(round(s[a] / s[-1] * n)) % n for a in shape.anchors})
    return uv, offsets


def trim_and_sample(surface: BSplineSurface, library, seed: int,
                    n: int = N_SAMPLES, record_id: int = 0, surface_id: int = 0,
                    provenance: Optional[dict] = None) -> DatasetRecord:
    """Trim ``surface`` with a randomly chosen library loop and build a
    normalized, canonically ordered record.

    Raises NormalizationError when the normalized control grid leaves the
    unit cube (the caller should draw another loop).
    """
    if not library:
        raise ValueError("empty pcurve library")
    rng = np.random.default_rng(seed)
    k = int(rng.integers(len(library)))
    shape = library[k]
    if np.any(shape.params < 0.0) or np.any(shape.params > 1.0):
        raise ValueError("pcurve leaves the unit parameter square")
    uv, offsets = sample_loop(surface, shape, n)
    norm = Normalization.from_boundary(surface.evaluate(uv[:, 0], uv[:, 1]))
    target = norm.surface(surface)
    cp = target.control_points.reshape(-1, 3)
    if np.any(cp < 0.0) or np.any(cp >= 1.0):
        raise NormalizationError("control grid does not fit the unit cube")
    pos, normals, curv = boundary_attributes(target, uv)
    boundary = HoleBoundary(pos, normals, curv, offsets)
    order = canonical_order(boundary)
    uv = uv[order]
    pos, normals, curv = boundary_attributes(target, uv)
    pos_order = np.argsort(order)
    boundary = HoleBoundary(pos, normals, curv,
                            sorted(int(pos_order[o]) for o in offsets))
    prov = dict(provenance or {})
    prov.update({"trim_seed": int(seed), "pcurve_index": k,
                 "pcurve_kind": shape.kind})
    return DatasetRecord(
        record_id, surface_id, boundary, target,
        encode_refinement(cp, 0.1, 0.01),
        np.concatenate([target.knots_u.interior, target.knots_v.interior]),
        PCurve(uv), norm, prov)


def generate_corpus(n_surfaces: int, pcurves_per_surface: int = 4, seed: int = 0,
                    noise_level: float = 0.02, families=FAMILIES,
                    library_size: int = 64, n: int = N_SAMPLES,
                    max_redraws: int = 50) -> list:
    """Records for ``n_surfaces`` surfaces, ``pcurves_per_surface`` each.

    Every random choice derives from ``seed`` through spawned child streams,
    so each surface's records depend only on (seed, surface index).
    """
    library = make_pcurve_library(seed, library_size)
    streams = np.random.SeedSequence(seed).spawn(n_surfaces)
    records = []
    for sid, ss in enumerate(streams):
        s_seed, n_seed, t_seed = (int(x) for x in ss.generate_state(3))
        family = families[sid % len(families)]
        surface = add_fair_noise(generate_surface(s_seed, family), noise_level, n_seed)
        prov = {"corpus_seed": seed, "surface_seed": s_seed, "noise_seed": n_seed,
                "noise_level": noise_level, "family": family}
        trim_rng = np.random.default_rng(t_seed)
        made = 0
        for _ in range(max_redraws):
            if made == pcurves_per_surface:
                break
            try:
                rec = trim_and_sample(surface, library, int(trim_rng.integers(2**31)),
                                      n, len(records), sid, prov)
            except NormalizationError:
                continue
            records.append(rec)
            made += 1
    return records


def split(records, ratio: float = 0.9, seed: int = 0):
    """Split by surface identity with a seeded shuffle of the surface ids."""
    records = list(records)
    if len(records) < 10:
        raise ValueError("need at least 10 records to split")
    ids = np.array(sorted({r.surface_id for r in records}))
    ids = ids[np.random.default_rng(seed).permutation(len(ids))]
    n_train = int(round(ratio * len(ids)))
    train_ids = set(ids[:n_train].tolist())
    train = [r for r in records if r.surface_id in train_ids]
    test = [r for r in records if r.surface_id not in train_ids]
    return train, test


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

def write_records(records, path, manifest: Optional[dict] = None):
    """Newline-delimited JSON records plus ``<path>.manifest.json``."""
    path = Path(path)
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict()) + "\n")
    info = {"generator_version": GENERATOR_VERSION, "count": len(records),
            "records": path.name}
    info.update(manifest or {})
    with open(manifest_path(path), "w") as fh:
        json.dump(info, fh, indent=2)


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")


def read_records(path) -> list:
    with open(path) as fh:
        return [DatasetRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
