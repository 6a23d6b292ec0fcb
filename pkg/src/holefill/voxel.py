"""Per-axis voxel labels for control-point coordinates.

Each coordinate in [0, 1) is binned independently: ``v = floor(x * V_N)``
with ``V_N = 1 / dv`` bins, and decoded to the bin center ``(v + 0.5) dv``.
The two-stage variant stores a coarse bin plus a sub-bin index inside it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NormalizationError


def n_bins(dv: float) -> int:
    """Number of bins per axis, ``1 / dv``; must be an integer."""
    if not dv > 0:
        raise ConfigurationError(f"voxel resolution must be positive, got {dv}")
    V = int(round(1.0 / dv))
    if V < 1 or abs(V * dv - 1.0) > 1e-12:
        raise ConfigurationError(f"1 / {dv} is not an integer bin count")
    return V


def refinement_factor(dv_low: float, dv_high: float) -> int:
    lo, hi = n_bins(dv_low), n_bins(dv_high)
    R = hi // lo
    if R < 2 or R * lo != hi:
        raise ConfigurationError(
            f"dv_low / dv_high = {dv_low} / {dv_high} is not an integer >= 2")
    return R


@dataclass(frozen=True)
class VoxelLabelSet:
    resolution: float
    indices: np.ndarray         # (m, 3) int

    @property
    def n_bins(self) -> int:
        return n_bins(self.resolution)

    def to_dict(self) -> dict:
        return {"resolution": self.resolution, "indices": self.indices.tolist()}

    @classmethod
    def from_dict(cls, d) -> "VoxelLabelSet":
        return cls(float(d["resolution"]), np.asarray(d["indices"], dtype=np.int64))


@dataclass(frozen=True)
class RefinementLabelSet:
    coarse: VoxelLabelSet
    sub_indices: np.ndarray     # (m, 3) int in [0, R)
    fine_resolution: float

    @property
    def factor(self) -> int:
        return refinement_factor(self.coarse.resolution, self.fine_resolution)

    def fine_indices(self) -> np.ndarray:
        return self.coarse.indices * self.factor + self.sub_indices

    def to_dict(self) -> dict:
        return {"coarse": self.coarse.to_dict(),
                "sub_indices": self.sub_indices.tolist(),
                "fine_resolution": self.fine_resolution}

    @classmethod
    def from_dict(cls, d) -> "RefinementLabelSet":
        return cls(VoxelLabelSet.from_dict(d["coarse"]),
                   np.asarray(d["sub_indices"], dtype=np.int64),
                   float(d["fine_resolution"]))


def _check_unit(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if not np.all(np.isfinite(pts)) or np.any(pts < 0.0) or np.any(pts > 1.0):
        raise NormalizationError("coordinates must be normalized into [0, 1]")
    return pts


def _two_product(a, b):
    """``a * b = p + e`` exactly (Dekker's product with Veltkamp splitting)."""
    p = a * b
    split = lambda x: (lambda c: (c - (c - x), x - (c - (c - x))))(134217729.0 * x)
    ah, al = split(a)
    bh, bl = split(np.float64(b))
    e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, e


def _floor_bins(pts, V):
    # floor of the exact product: a rounded pts * V can land on the next
    # integer for a coordinate just below a bin edge
    p, e = _two_product(pts, float(V))
    idx = np.floor(p)
    idx -= (p == idx) & (e < 0)
    return np.minimum(idx.astype(np.int64), V - 1)


def encode(points, dv: float) -> VoxelLabelSet:
    """Per-axis bin indices; a coordinate of exactly 1.0 lands in the last bin."""
    V = n_bins(dv)
    return VoxelLabelSet(float(dv), _floor_bins(_check_unit(points), V))


def decode(labels: VoxelLabelSet) -> np.ndarray:
    """Voxel-center reconstruction."""
    V = n_bins(labels.resolution)
    return (2 * labels.indices + 1) / (2.0 * V)


def encode_refinement(points, dv_low: float = 0.1,
                      dv_high: float = 0.01) -> RefinementLabelSet:
    """Coarse bin at ``dv_low`` plus the sub-bin (of ``R = dv_low / dv_high``)
    holding the point inside it."""
    R = refinement_factor(dv_low, dv_high)
    pts = _check_unit(points)
    coarse = _floor_bins(pts, n_bins(dv_low))
    sub = np.clip(_floor_bins(pts, n_bins(dv_high)) - coarse * R, 0, R - 1)
    return RefinementLabelSet(VoxelLabelSet(float(dv_low), coarse), sub,
                              float(dv_high))


def compose(coarse, sub, dv_low: float, dv_high: float) -> np.ndarray:
    """Fine-bin center from coarse and sub indices (arrays of any shape)."""
    R = refinement_factor(dv_low, dv_high)
    fine = np.asarray(coarse) * R + np.asarray(sub)
    return (2 * fine + 1) / (2.0 * n_bins(dv_high))


def decode_refinement(labels: RefinementLabelSet) -> np.ndarray:
    return compose(labels.coarse.indices, labels.sub_indices,
                   labels.coarse.resolution, labels.fine_resolution)


def flatten_3d(labels: VoxelLabelSet) -> np.ndarray:
    """Single categorical index ``vx V^2 + vy V + vz`` (ablation utility only)."""
    V = labels.n_bins
    i = labels.indices
    return i[..., 0] * V * V + i[..., 1] * V + i[..., 2]
