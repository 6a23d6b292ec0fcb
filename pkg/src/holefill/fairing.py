"""Quadratic fairness-plus-constraint energy for the filling surface.

Unknowns are the control points stacked coordinate-major: the vector ``cp``
of length ``3K`` holds all x coordinates (row-major over the grid), then all
y, then all z. The total energy is

    E(cp) = cp^T (A3 + D) cp - 2 b . cp + C

where ``A3`` repeats the K x K fairness matrix ``A`` on each coordinate
block. Its minimizer solves ``(A3 + D) cp = b``.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import linalg

from .errors import ShapeError, SingularSystemError
from .geom import (BSplineSurface, KnotVector, basis_matrix,
                   tangent_to_param_direction, unit_normals, _normal_curvature_uv)
from .param import HoleBoundary, PCurve

#: Integrand coefficients per derivative multi-index (a, b) = (d/du^a, d/dv^b).
ALPHA_BETA = {
    "bending": {(2, 0): 1.0, (1, 1): 2.0, (0, 2): 1.0},
    "roc_in_bending": {(3, 0): 1.0, (2, 1): 3.0, (1, 2): 3.0, (0, 3): 1.0},
}

DEFAULT_WEIGHTS = (1e4, 1e2, 1.0)
DEFAULT_TOLERANCES = (1e-6, 1e-3, 1e-1)
#: Scale on the fairness matrix used by the filling solve; see fill_surface.
DEFAULT_FAIRNESS_WEIGHT = 1e-13
REGULARIZATION_LADDER = (0.0, 1e-12, 1e-10, 1e-8)


@dataclass(frozen=True)
class SurfaceLayout:
    """Degrees and knot vectors of the unknown surface."""

    knots_u: KnotVector
    knots_v: KnotVector

    @classmethod
    def of(cls, surface: BSplineSurface) -> "SurfaceLayout":
        return cls(surface.knots_u, surface.knots_v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.knots_u.n_basis, self.knots_v.n_basis

    @property
    def size(self) -> int:
        nu, nv = self.shape
        return nu * nv

    def surface(self, cp_vector) -> BSplineSurface:
        return BSplineSurface(self.knots_u, self.knots_v,
                              vector_to_grid(cp_vector, self.shape))


def flatten_index(i: int, j: int, grid_shape) -> int:
    """Row-major position of control point ``(i, j)``."""
    nu, nv = grid_shape
    if not (0 <= i < nu and 0 <= j < nv):
        raise IndexError(f"({i}, {j}) outside grid {grid_shape}")
    return i * nv + j


def grid_to_vector(cp) -> np.ndarray:
    cp = np.asarray(cp, dtype=float)
    return cp.reshape(-1, 3).T.ravel().copy()


def vector_to_grid(vec, grid_shape) -> np.ndarray:
    nu, nv = grid_shape
    return np.asarray(vec, dtype=float).reshape(3, nu * nv).T.reshape(nu, nv, 3)


# ---------------------------------------------------------------------------
# Fairness matrix
# ---------------------------------------------------------------------------

def _gram_matrices(knots: KnotVector, quad_order: int):
    """Per-derivative-order Gram matrices  G[r]_ik = int N_i^(r) N_k^(r) du,
    integrated span by span with Gauss-Legendre."""
    nodes, weights = np.polynomial.legendre.leggauss(quad_order)
    brk = np.unique(knots.values)
    a, b = brk[:-1], brk[1:]
    half = (b - a) / 2.0
    pts = ((a + b) / 2.0)[:, None] + half[:, None] * nodes[None, :]
    wts = half[:, None] * weights[None, :]
    B = basis_matrix(knots.values, knots.degree, pts.ravel(), 3)
    w = wts.ravel()
    return np.einsum("q,qri,qrk->rik", w, B, B)


def assemble_fairness(layout: SurfaceLayout, quad_order: int = 4,
                      alpha_beta: Optional[dict] = None) -> np.ndarray:
    """K x K matrix A with ``E_surf = sum_c cp_c^T A cp_c``.

    The integrand is separable in u and v, so every term is a Kronecker
    product of 1D Gram matrices (row-major flattening).
    """
    p = max(layout.knots_u.degree, layout.knots_v.degree)
    if quad_order < math.ceil((2 * p + 1) / 2):
        warnings.warn(f"Gauss order {quad_order} does not integrate degree-{p} "
                      "products exactly", RuntimeWarning, stacklevel=2)
    alpha_beta = ALPHA_BETA if alpha_beta is None else alpha_beta
    Gu = _gram_matrices(layout.knots_u, quad_order)
    Gv = _gram_matrices(layout.knots_v, quad_order)
    A = np.zeros((layout.size, layout.size))
    for table in alpha_beta.values():
        for (a, b), coef in table.items():
            A += coef * np.kron(Gu[a], Gv[b])
    return (A + A.T) / 2.0


def affine_kernel(layout: SurfaceLayout) -> np.ndarray:
    """K x 3 basis of control grids reproducing 1, u and v (Greville
    abscissae); every fairness term vanishes on them."""
    def greville(k: KnotVector):
        t, p = k.values, k.degree
        return np.array([t[i + 1:i + p + 1].mean() for i in range(k.n_basis)])

    gu, gv = greville(layout.knots_u), greville(layout.knots_v)
    ones = np.ones(layout.size)
    return np.column_stack([ones, np.repeat(gu, len(gv)), np.tile(gv, len(gu))])


def fairness_energy(A, cp, layout: Optional[SurfaceLayout] = None) -> float:
    """``sum_c cp_c^T A cp_c`` for a control grid (nu, nv, 3).

    A has entries of order (1/knot spacing)^6, so the plain quadratic form
    carries an absolute rounding error far above the energy of a nearly
    flat patch. Given the layout, the affine part of the grid (which A
    annihilates exactly) is removed first and the form is evaluated on the
    remainder only.
    """
    flat = np.asarray(cp, dtype=float).reshape(-1, 3)
    if layout is not None:
        N = affine_kernel(layout)
        coef, *_ = np.linalg.lstsq(N, flat, rcond=None)
        flat = flat - N @ coef
    return float(np.einsum("kc,kl,lc->", flat, A, flat))


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------

@dataclass
class ContinuityTargets:
    """Per-sample boundary targets.

    ``cross_dirs`` are parameter-space directions whose image on the
    reference (projection) surface is the cross-boundary direction
    ``normal x tangent``; ``metric`` is the squared length of that image.
    ``curvatures`` may be None when the hole carries no curvature data.
    """

    positions: np.ndarray
    normals: np.ndarray
    curvatures: Optional[np.ndarray]
    cross_dirs: np.ndarray
    metric: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.normals = np.asarray(self.normals, dtype=float)
        n = len(self.positions)
        if self.normals.shape != (n, 3):
            raise ShapeError("normals must match positions")
        if np.any(np.abs(np.linalg.norm(self.normals, axis=1) - 1.0) > 1e-8):
            raise ValueError("target normals must be unit length")
        if self.curvatures is not None:
            self.curvatures = np.asarray(self.curvatures, dtype=float).ravel()
            if len(self.curvatures) != n:
                raise ShapeError("curvatures must match positions")
        self.cross_dirs = np.asarray(self.cross_dirs, dtype=float).reshape(n, 2)
        self.metric = np.asarray(self.metric, dtype=float).ravel()

    def __len__(self):
        return len(self.positions)


def jacobians_from_surface(surface: BSplineSurface, pcurve: PCurve) -> np.ndarray:
    """(n, 3, 2) Jacobians [S_u, S_v] along the pcurve."""
    D = surface.derivatives(pcurve.params[:, 0], pcurve.params[:, 1], order=1)
    return np.stack([D[:, 1, 0], D[:, 0, 1]], axis=-1)


def jacobians_conformal(boundary: HoleBoundary, pcurve: PCurve,
                        normals=None) -> np.ndarray:
    """Jacobian estimate for parameterizations without a surface behind them.

    Assumes the map from parameter space is locally conformal: the pcurve
    tangent maps onto the boundary tangent, and the rotated pcurve tangent
    onto ``normal x tangent`` with the same stretch.
    """
    x = boundary.samples
    uv = pcurve.params
    t3 = np.roll(x, -1, axis=0) - np.roll(x, 1, axis=0)
    t2 = np.roll(uv, -1, axis=0) - np.roll(uv, 1, axis=0)
    l3 = np.linalg.norm(t3, axis=1)
    l2 = np.maximum(np.linalg.norm(t2, axis=1), 1e-300)
    sigma = l3 / l2
    if normals is None:
        normals = boundary.normals
    T = t3 / l3[:, None]
    N = np.cross(normals, T)
    tu = t2 / l2[:, None]
    tp = np.column_stack([-tu[:, 1], tu[:, 0]])
    # J [tu, tp] = sigma [T, N]  ->  J = sigma [T, N] [tu, tp]^T (orthonormal)
    lhs = np.stack([T, N], axis=-1) * sigma[:, None, None]
    rot = np.stack([tu, tp], axis=-1)
    return np.einsum("mci,mji->mcj", lhs, rot)


def trim_tangents(jacobians, pcurve: PCurve) -> np.ndarray:
    """Tangents of the trimming curve: Jacobian times the central difference
    of the pcurve samples (unnormalized)."""
    uv = pcurve.params
    tuv = np.roll(uv, -1, axis=0) - np.roll(uv, 1, axis=0)
    return np.einsum("mcj,mj->mc", np.asarray(jacobians), tuv)


MIN_JACOBIAN_RATIO = 0.05


def build_targets(boundary: HoleBoundary, pcurve: PCurve,
                  jacobians) -> ContinuityTargets:
    """Continuity targets from a boundary, its pcurve and the Jacobians of
    the reference (projection) map along it.

    Missing boundary normals are taken from the reference tangent planes.
    """
    J = np.asarray(jacobians, dtype=float)
    normals = boundary.normals
    if normals is None:
        normals = unit_normals(J[:, :, 0], J[:, :, 1])
    w = np.cross(normals, trim_tangents(J, pcurve))
    wn = np.linalg.norm(w, axis=1)
    # A reference map that (nearly) collapses at a sample, e.g. a predicted surface whose
    # neighbouring control points share a voxel, has no usable preimage of
    # the cross direction; such samples get d = 0 and so no curvature rows.
    sv = np.linalg.svd(J, compute_uv=False)
    ok = (sv[:, 1] > MIN_JACOBIAN_RATIO * np.median(sv[:, 0])) & (wn > 0)
    d = np.zeros((len(J), 2))
    if np.any(ok):
        d[ok] = tangent_to_param_direction(J[ok, :, 0], J[ok, :, 1],
                                           w[ok] / wn[ok, None])
    img = np.einsum("mcj,mj->mc", J, d)
    metric = np.einsum("mc,mc->m", img, img)
    return ContinuityTargets(boundary.samples, normals, boundary.curvatures, d,
                             metric)


def trapezoid_weights(positions, pcurve: PCurve) -> np.ndarray:
    """Closed-loop trapezoid weights over the normalized arc-length parameter.

    Segments whose pcurve image has zero length are skipped (with a warning).
    """
    x = np.asarray(positions, dtype=float)
    n = len(x)
    if n == 1:
        return np.ones(1)
    seg = np.linalg.norm(np.roll(x, -1, axis=0) - x, axis=1)
    uv_seg = np.linalg.norm(np.roll(pcurve.params, -1, axis=0) - pcurve.params, axis=1)
    dead = uv_seg == 0.0
    if np.any(dead):
        warnings.warn(f"skipping {int(dead.sum())} zero-length pcurve segment(s)",
                      RuntimeWarning, stacklevel=3)
        seg = np.where(dead, 0.0, seg)
    total = seg.sum()
    if total == 0.0:
        return np.full(n, 1.0 / n)
    return (seg + np.roll(seg, 1)) / (2.0 * total)


def _pcurve_basis_rows(layout: SurfaceLayout, params):
    bu = basis_matrix(layout.knots_u.values, layout.knots_u.degree, params[:, 0], 2)
    bv = basis_matrix(layout.knots_v.values, layout.knots_v.degree, params[:, 1], 2)
    m = len(params)

    def row(a, b):
        return np.einsum("mi,mj->mij", bu[:, a], bv[:, b]).reshape(m, -1)

    return row


def _coord_rows(normals, rows):
    """Rows of length 3K for  sum_c n_c (rows . cp_c)."""
    return np.concatenate([normals[:, c:c + 1] * rows for c in range(3)], axis=1)


def assemble_constraints(layout: SurfaceLayout, pcurve: PCurve,
                         targets: ContinuityTargets, weights=DEFAULT_WEIGHTS,
                         t_weights=None):
    """Constraint quadratic ``cp^T D cp - 2 b.cp + C``.

    G0 penalizes |S - q|^2, G1 the tangent-plane products (S_u.n)^2 +
    (S_v.n)^2, and G2 (n . S_dd - kappa * metric)^2 with S_dd the second
    derivative along the target cross direction. Returns ``(D, b, C)``.
    """
    n = len(pcurve)
    if len(targets) != n:
        raise ShapeError("pcurve and targets must have the same sample count")
    lam_pos, lam_norm, lam_curv = (float(w) for w in weights)
    K = layout.size
    D = np.zeros((3 * K, 3 * K))
    b = np.zeros(3 * K)
    C = 0.0
    if lam_pos == lam_norm == lam_curv == 0.0:
        return D, b, C
    w = trapezoid_weights(targets.positions, pcurve) if t_weights is None \
        else np.asarray(t_weights, dtype=float)
    row = _pcurve_basis_rows(layout, pcurve.params)

    if lam_pos:
        r0 = row(0, 0)
        blk = lam_pos * np.einsum("m,mi,mk->ik", w, r0, r0)
        for c in range(3):
            D[c * K:(c + 1) * K, c * K:(c + 1) * K] += blk
        b += lam_pos * np.concatenate([r0.T @ (w * targets.positions[:, c])
                                       for c in range(3)])
        C += lam_pos * float(np.sum(w * np.sum(targets.positions ** 2, axis=1)))
    if lam_norm:
        for rows in (row(1, 0), row(0, 1)):
            a = _coord_rows(targets.normals, rows)
            D += lam_norm * np.einsum("m,mi,mk->ik", w, a, a)
    if lam_curv and targets.curvatures is not None:
        du, dv = targets.cross_dirs[:, 0:1], targets.cross_dirs[:, 1:2]
        rdd = du * du * row(2, 0) + 2.0 * du * dv * row(1, 1) + dv * dv * row(0, 2)
        a = _coord_rows(targets.normals, rdd)
        goal = targets.curvatures * targets.metric
        D += lam_curv * np.einsum("m,mi,mk->ik", w, a, a)
        b += lam_curv * (a.T @ (w * goal))
        C += lam_curv * float(np.sum(w * goal ** 2))
    return (D + D.T) / 2.0, b, C


# ---------------------------------------------------------------------------
# System and solve
# ---------------------------------------------------------------------------

@dataclass
class EnergySystem:
    A: np.ndarray
    D: np.ndarray
    b: np.ndarray
    C: float = 0.0
    weights: tuple = DEFAULT_WEIGHTS
    fairness_weight: float = 1.0
    quadrature: dict = field(default_factory=dict)
    alpha_beta: dict = field(default_factory=lambda: ALPHA_BETA)

    @property
    def constraint_free(self) -> bool:
        return all(w == 0 for w in self.weights)

    @property
    def size(self) -> int:
        return self.A.shape[0]

    def full_matrix(self) -> np.ndarray:
        """``fairness_weight * A3 + D`` (3K x 3K)."""
        return self.fairness_weight * np.kron(np.eye(3), self.A) + self.D

    def energy(self, cp_vector) -> float:
        x = np.asarray(cp_vector, dtype=float)
        return float(x @ self.full_matrix() @ x - 2.0 * self.b @ x + self.C)

    def gradient(self, cp_vector) -> np.ndarray:
        x = np.asarray(cp_vector, dtype=float)
        return 2.0 * self.full_matrix() @ x - 2.0 * self.b

    def block_diagonal(self) -> bool:
        """True when D has no cross-coordinate coupling and equal blocks."""
        K = self.size
        blocks = [self.D[c * K:(c + 1) * K, c * K:(c + 1) * K] for c in range(3)]
        off = self.D.copy()
        for c in range(3):
            off[c * K:(c + 1) * K, c * K:(c + 1) * K] = 0.0
        return (not off.any() and np.array_equal(blocks[0], blocks[1])
                and np.array_equal(blocks[0], blocks[2]))

    def dump(self, path):
        """Dense text dump (row-major, 17 significant digits)."""
        with open(path, "w") as fh:
            for name, mat in (("A", self.A), ("D", self.D),
                              ("b", self.b.reshape(1, -1)),
                              ("C", np.array([[self.C]]))):
                fh.write(f"# {name} {mat.shape[0]} {mat.shape[1]}\n")
                for r in mat:
                    fh.write(" ".join(f"{x:.16e}" for x in r) + "\n")


def solve_filling(A, D, b, regularization: Optional[float] = None):
    """Minimize ``x^T (A + D) x - 2 b.x`` by a symmetric (Cholesky) solve.

    Tikhonov ``eps I`` is added only when factorization fails, walking up the
    ladder 0, 1e-12, 1e-10, 1e-8 (starting at ``regularization`` if given).
    ``b`` may hold several right-hand sides as columns. Returns
    ``(x, eps_used)``.
    """
    M = np.asarray(A, dtype=float) + np.asarray(D, dtype=float)
    if M.shape[0] != M.shape[1]:
        raise ShapeError("system matrix must be square")
    b = np.asarray(b, dtype=float)
    ladder = [e for e in REGULARIZATION_LADDER
              if regularization is None or e >= regularization]
    if regularization is not None and regularization not in ladder:
        ladder.insert(0, float(regularization))
    eye = np.eye(M.shape[0])
    for eps in ladder:
        try:
            factor = linalg.cho_factor(M + eps * eye, check_finite=True)
            x = linalg.cho_solve(factor, b)
        except (linalg.LinAlgError, ValueError):
            continue
        if np.all(np.isfinite(x)):
            return x, eps
    raise SingularSystemError(
        f"system not positive definite even with eps = {ladder[-1]:g}")


class FillResult(NamedTuple):
    surface: BSplineSurface
    system: EnergySystem
    eps: float


def fill_surface(layout: SurfaceLayout, pcurve: PCurve,
                 targets: ContinuityTargets, weights=DEFAULT_WEIGHTS,
                 fairness_weight: float = DEFAULT_FAIRNESS_WEIGHT,
                 quad_order: int = 4) -> FillResult:
    """Assemble and solve for the filling surface's control points.

    When only positions are constrained, D acts identically on x, y, z and a
    single K x K factorization serves all three coordinates.
    """
    A = assemble_fairness(layout, quad_order)
    D, b, C = assemble_constraints(layout, pcurve, targets, weights)
    system = EnergySystem(A, D, b, C, tuple(weights), fairness_weight,
                          {"gauss_order": quad_order, "t_samples": len(pcurve)})
    K = layout.size
    if system.block_diagonal():
        rhs = b.reshape(3, K).T
        x, eps = solve_filling(fairness_weight * A, D[:K, :K], rhs)
        vec = x.T.ravel()
    else:
        vec, eps = solve_filling(fairness_weight * np.kron(np.eye(3), A), D, b)
    return FillResult(layout.surface(vec), system, eps)


# ---------------------------------------------------------------------------
# Boundary errors and satisfy-tolerance rate
# ---------------------------------------------------------------------------

class BoundaryErrors(NamedTuple):
    g0: float
    g1: float
    g2: float
    g0_pass: bool
    g1_pass: bool
    g2_pass: bool


def boundary_error_and_str(filled: BSplineSurface, pcurve: PCurve,
                           targets: ContinuityTargets,
                           tolerances=DEFAULT_TOLERANCES) -> BoundaryErrors:
    """Max position distance, normal angle (radians) and curvature deviation
    along the trimming curve, each checked against its tolerance.

    Normals are compared up to orientation. The filled surface's curvature is
    taken in its own cross-boundary direction (normal x trim tangent) with
    its normal oriented like the target's. Missing curvature targets give
    ``g2 = nan`` which counts as a failure.
    """
    uv = pcurve.params
    D = filled.derivatives(uv[:, 0], uv[:, 1], order=2)
    g0 = float(np.max(np.linalg.norm(D[:, 0, 0] - targets.positions, axis=1)))
    try:
        nf = unit_normals(D[:, 1, 0], D[:, 0, 1])
    except ArithmeticError:
        return BoundaryErrors(g0, math.nan, math.nan, g0 < tolerances[0],
                              False, False)
    dots = np.einsum("mc,mc->m", nf, targets.normals)
    sign = np.where(dots < 0.0, -1.0, 1.0)
    nf = nf * sign[:, None]
    cross = np.linalg.norm(np.cross(nf, targets.normals), axis=1)
    g1 = float(np.max(np.arctan2(cross, np.abs(dots))))
    if targets.curvatures is None:
        g2 = math.nan
    else:
        J = np.stack([D[:, 1, 0], D[:, 0, 1]], axis=-1)
        w = np.cross(nf, trim_tangents(J, pcurve))
        # a vanishing derivative gives nan, which fails G2 as it should
        with np.errstate(invalid="ignore", divide="ignore"):
            d = tangent_to_param_direction(D[:, 1, 0], D[:, 0, 1], w)
            kf = _normal_curvature_uv(D, nf, d)
        g2 = float(np.max(np.abs(kf - targets.curvatures)))
    t0, t1, t2 = tolerances
    return BoundaryErrors(g0, g1, g2, g0 < t0, g1 < t1,
                          bool(g2 < t2) if not math.isnan(g2) else False)


STR_FIELDS = ("case_id", "g0_err", "g1_err", "g2_err", "g0_pass", "g1_pass",
              "g2_pass")


def satisfy_tolerance_rate(rows) -> tuple[float, float, float]:
    """Fraction of cases passing G0, G1, G2 (failed cases count as misses)."""
    rows = list(rows)
    if not rows:
        return (0.0, 0.0, 0.0)
    n = len(rows)
    return tuple(sum(bool(r[k]) for r in rows) / n
                 for k in ("g0_pass", "g1_pass", "g2_pass"))


def write_str_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=STR_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (repr(float(r[k])) if k.endswith("_err") else
                                 (int(bool(r[k])) if k.endswith("_pass") else r[k]))
                             for k in STR_FIELDS})
