"""End-to-end hole filling and evaluation.

A fill run picks a parameterization (the trained network's projection
surface, a nearest-plane or mean-value baseline, or the known target surface
for synthetic records), derives continuity targets from it, solves for the
filling surface and measures its boundary errors.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import DatasetRecord, Normalization
from .errors import ConfigurationError, HoleFillError, ProjectionError
from .fairing import (DEFAULT_FAIRNESS_WEIGHT, DEFAULT_TOLERANCES, DEFAULT_WEIGHTS,
                      SurfaceLayout, boundary_error_and_str, build_targets,
                      fill_surface, jacobians_conformal, jacobians_from_surface)
from .geom import BSplineSurface, KnotVector
from .param import (N_SAMPLES, UV_MARGIN, HoleBoundary, PCurve, mvc_pcurve,
                    nearest_plane, normalize_to_box, parameter_error,
                    pcurve_from_projection, prepare_boundary)

METHODS = ("uvtran", "np", "mvc", "gt-projection")
REPORT_FIELDS = ("case_id", "method", "status", "parameter_error", "g0_err",
                 "g1_err", "g2_err", "g0_pass", "g1_pass", "g2_pass",
                 "self_intersecting", "eps", "wall_time", "message")


@dataclass(frozen=True)
class RunConfig:
    method: str = "gt-projection"
    dataset: Optional[str] = None
    checkpoint: Optional[str] = None
    output_dir: str = "."
    tolerances: tuple = DEFAULT_TOLERANCES
    weights: tuple = DEFAULT_WEIGHTS
    fairness_weight: float = DEFAULT_FAIRNESS_WEIGHT
    n_samples: int = N_SAMPLES
    seed: int = 0
    curvature_grid: int = 16

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}; "
                                     f"choose from {', '.join(METHODS)}")
        if len(self.tolerances) != 3 or any(t <= 0 for t in self.tolerances):
            raise ConfigurationError("need three positive tolerances")
        if len(self.weights) != 3 or any(w < 0 for w in self.weights):
            raise ConfigurationError("need three non-negative weights")

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        kw = {}
        for f in fields(cls):
            if f.name not in values:
                continue
            raw = values[f.name]
            if f.name in ("tolerances", "weights"):
                kw[f.name] = tuple(float(x) for x in
                                   (raw.split(",") if isinstance(raw, str) else raw))
            elif f.name in ("fairness_weight",):
                kw[f.name] = float(raw)
            elif f.name in ("n_samples", "seed", "curvature_grid"):
                kw[f.name] = int(raw)
            else:
                kw[f.name] = raw
        return cls(**kw)


def read_flat_config(path) -> dict:
    """``key = value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out


# ---------------------------------------------------------------------------
# Parameterizations
# ---------------------------------------------------------------------------

@dataclass
class Parameterization:
    pcurve: PCurve
    jacobians: np.ndarray
    layout: SurfaceLayout
    surface: Optional[BSplineSurface] = None


def _uniform_layout(n_ctrl=8):
    k = KnotVector.uniform(n_ctrl, 3)
    return SurfaceLayout(k, k)


def nearest_plane_parameterization(boundary: HoleBoundary) -> Parameterization:
    """Projection onto the least-squares plane; the map from the margin box
    back to the plane is affine, so its Jacobian is constant."""
    plane = nearest_plane(boundary.samples)
    q = plane.to_plane(boundary.samples)
    extent = float(np.max(q.max(axis=0) - q.min(axis=0)))
    scale = (1.0 - 2.0 * UV_MARGIN) / extent
    pc = PCurve(normalize_to_box(q))
    J = np.broadcast_to(np.column_stack([plane.e1, plane.e2]) / scale,
                        (len(boundary), 3, 2)).copy()
    return Parameterization(pc, J, _uniform_layout())


def mean_value_parameterization(boundary: HoleBoundary) -> Parameterization:
    pc = mvc_pcurve(boundary)
    normals = boundary.normals
    if normals is None:
        plane = nearest_plane(boundary.samples)
        normals = np.broadcast_to(plane.normal, boundary.samples.shape)
    return Parameterization(pc, jacobians_conformal(boundary, pc, normals),
                            _uniform_layout())


def projection_parameterization(surface: BSplineSurface,
                                boundary: HoleBoundary) -> Parameterization:
    pc = pcurve_from_projection(surface, boundary)
    return Parameterization(pc, jacobians_from_surface(surface, pc),
                            SurfaceLayout.of(surface), surface)


def network_surface(model, boundary: HoleBoundary) -> BSplineSurface:
    """Projection surface predicted for a (canonically ordered) boundary,
    mapped back to the boundary's own coordinates."""
    norm = Normalization.from_boundary(boundary.samples)
    P = np.clip(norm.apply(boundary.samples), 0.0, 1.0)
    surf = model.predict_surface(P[None])[0]
    return norm.surface(surf, inverse=True)


# ---------------------------------------------------------------------------
# Fill
# ---------------------------------------------------------------------------

def _empty_row(case_id, method):
    nan = math.nan
    return {"case_id": case_id, "method": method, "status": "ok",
            "parameter_error": nan, "g0_err": nan, "g1_err": nan, "g2_err": nan,
            "g0_pass": False, "g1_pass": False, "g2_pass": False,
            "self_intersecting": False, "eps": nan, "wall_time": nan,
            "message": ""}


def run_fill(config: RunConfig, boundary: HoleBoundary, *, model=None,
             target_surface: Optional[BSplineSurface] = None,
             pcurve_gt: Optional[PCurve] = None, case_id=0):
    """Fill one hole. Returns ``(surface | None, pcurve | None, row)``.

    Projection, solver and geometry failures are reported in the row's
    ``status``/``message`` instead of being raised.
    """
    t0 = time.perf_counter()
    row = _empty_row(case_id, config.method)
    filled = pc = None
    try:
        boundary = prepare_boundary(boundary, config.n_samples)
        if config.method == "gt-projection":
            if target_surface is None:
                raise ConfigurationError("gt-projection needs the target surface")
            par = projection_parameterization(target_surface, boundary)
        elif config.method == "uvtran":
            if model is None:
                raise ConfigurationError("uvtran needs a trained checkpoint")
            par = projection_parameterization(network_surface(model, boundary),
                                              boundary)
        elif config.method == "np":
            par = nearest_plane_parameterization(boundary)
        else:
            par = mean_value_parameterization(boundary)
        pc = par.pcurve
        row["self_intersecting"] = pc.self_intersecting
        if pcurve_gt is not None:
            row["parameter_error"] = parameter_error(pc, pcurve_gt)
        targets = build_targets(boundary, pc, par.jacobians)
        res = fill_surface(par.layout, pc, targets, config.weights,
                           config.fairness_weight)
        filled = res.surface
        row["eps"] = res.eps
        err = boundary_error_and_str(filled, pc, targets, config.tolerances)
        row.update({"g0_err": err.g0, "g1_err": err.g1, "g2_err": err.g2,
                    "g0_pass": err.g0_pass, "g1_pass": err.g1_pass,
                    "g2_pass": err.g2_pass})
    except ProjectionError as exc:
        row.update(status="projection_failed", message=str(exc))
    except ArithmeticError as exc:
        row.update(status="solver_failed", message=str(exc))
    except (HoleFillError, ValueError) as exc:
        row.update(status="failed", message=f"{type(exc).__name__}: {exc}")
    row["wall_time"] = time.perf_counter() - t0
    return filled, pc, row


def fill_record(config: RunConfig, record: DatasetRecord, model=None):
    return run_fill(config, record.boundary, model=model,
                    target_surface=record.target_surface,
                    pcurve_gt=record.pcurve_gt, case_id=record.record_id)


def fill_holes(config: RunConfig, boundaries, model=None):
    """Fill each hole of a multi-hole model on its own (no coupling)."""
    return [run_fill(config, b, model=model, case_id=i)
            for i, b in enumerate(boundaries)]


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class FillReport:
    rows: list = field(default_factory=list)
    curvature_samples: list = field(default_factory=list)

    def sorted_rows(self):
        return sorted(self.rows, key=lambda r: (r["method"], r["case_id"]))

    @property
    def methods(self):
        return sorted({r["method"] for r in self.rows})

    def aggregate(self) -> dict:
        """Per method: case count, STR per continuity level (failed cases
        count as misses), mean parameter error over cases that have one."""
        out = {}
        for m in self.methods:
            rows = [r for r in self.rows if r["method"] == m]
            n = len(rows)
            perr = [r["parameter_error"] for r in rows
                    if not math.isnan(r["parameter_error"])]
            out[m] = {"cases": n,
                      "str_g0": sum(bool(r["g0_pass"]) for r in rows) / n,
                      "str_g1": sum(bool(r["g1_pass"]) for r in rows) / n,
                      "str_g2": sum(bool(r["g2_pass"]) for r in rows) / n,
                      "mean_parameter_error": float(np.mean(perr)) if perr else math.nan,
                      "failures": sum(r["status"] != "ok" for r in rows),
                      "self_intersections": sum(bool(r["self_intersecting"])
                                                for r in rows)}
        return out

    @property
    def has_failures(self) -> bool:
        return any(r["status"] != "ok" for r in self.rows)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
            w.writeheader()
            for r in self.sorted_rows():
                w.writerow({k: _fmt(r[k]) for k in REPORT_FIELDS})

    @classmethod
    def read_csv(cls, path) -> "FillReport":
        rows = []
        with open(path) as fh:
            for r in csv.DictReader(fh):
                row = dict(r)
                for k in ("parameter_error", "g0_err", "g1_err", "g2_err", "eps",
                          "wall_time"):
                    row[k] = float(row[k])
                for k in ("g0_pass", "g1_pass", "g2_pass", "self_intersecting"):
                    row[k] = row[k] == "1"
                row["case_id"] = int(row["case_id"])
                rows.append(row)
        return cls(rows)

    def summary(self) -> str:
        lines = ["# STR is counted per hole; failed cases count as misses.",
                 f"{'method':<14}{'cases':>6}{'G0 %':>8}{'G1 %':>8}{'G2 %':>8}"
                 f"{'param err':>12}{'fail':>6}{'self-x':>8}"]
        for m, a in self.aggregate().items():
            lines.append(f"{m:<14}{a['cases']:>6}{100 * a['str_g0']:>8.1f}"
                         f"{100 * a['str_g1']:>8.1f}{100 * a['str_g2']:>8.1f}"
                         f"{a['mean_parameter_error']:>12.3e}{a['failures']:>6}"
                         f"{a['self_intersections']:>8}")
        return "\n".join(lines)

    def write_curvature_samples(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["case_id", "method", "u", "v", "mean_curvature"])
            for case_id, method, u, v, H in self.curvature_samples:
                for a, b, h in zip(u.ravel(), v.ravel(), H.ravel()):
                    w.writerow([case_id, method, repr(float(a)), repr(float(b)),
                                repr(float(h))])


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def mean_curvature_grid(surface: BSplineSurface, res: int):
    """Mean curvature on a res x res parameter grid (NaN where the normal
    is undefined)."""
    t = np.linspace(0.0, 1.0, res)
    U, V = np.meshgrid(t, t, indexing="ij")
    D = surface.derivatives(U.ravel(), V.ravel(), order=2)
    return U, V, _safe_mean_curvature(D).reshape(res, res)


def _safe_mean_curvature(D):
    su, sv = D[:, 1, 0], D[:, 0, 1]
    n = np.cross(su, sv)
    norm = np.linalg.norm(n, axis=1)
    ok = norm >= 1e-12
    n = n / np.where(ok, norm, 1.0)[:, None]
    E, F, G = (np.einsum("mc,mc->m", a, b) for a, b in ((su, su), (su, sv), (sv, sv)))
    Lc, M, N = (np.einsum("mc,mc->m", D[:, i, j], n) for i, j in ((2, 0), (1, 1), (0, 2)))
    with np.errstate(divide="ignore", invalid="ignore"):
        H = (E * N - 2.0 * F * M + G * Lc) / (2.0 * (E * G - F * F))
    return np.where(ok, H, np.nan)


def run_eval(config: RunConfig, records, model=None, methods=None) -> FillReport:
    """Run every record through each method (rows sorted by method and
    case id). Cases are independent; failures become report rows."""
    methods = [config.method] if methods is None else list(methods)
    report = FillReport()
    for m in methods:
        cfg = replace(config, method=m)
        for rec in sorted(records, key=lambda r: r.record_id):
            filled, _, row = fill_record(cfg, rec, model)
            report.rows.append(row)
            if filled is not None and config.curvature_grid > 0:
                U, V, H = mean_curvature_grid(filled, config.curvature_grid)
                report.curvature_samples.append((rec.record_id, m, U, V, H))
    report.rows = report.sorted_rows()
    return report


def write_report(report: FillReport, path):
    """CSV rows at ``path`` plus ``.summary.txt`` and ``.curvature.csv``
    siblings."""
    path = Path(path)
    report.write_csv(path)
    path.with_suffix(".summary.txt").write_text(report.summary() + "\n")
    report.write_curvature_samples(path.with_suffix(".curvature.csv"))


# ---------------------------------------------------------------------------
# Mesh export
# ---------------------------------------------------------------------------

@dataclass
class MeshExport:
    vertices: np.ndarray
    triangles: np.ndarray
    mean_curvature: np.ndarray
    trim_polyline: Optional[np.ndarray]


def tessellate(surface: BSplineSurface, res: int, pcurve: Optional[PCurve] = None):
    """Triangulated res x res sampling of the full patch (two triangles per
    grid cell) with per-vertex mean curvature, plus the trim polyline."""
    if res < 2:
        raise ValueError("resolution must be at least 2")
    t = np.linspace(0.0, 1.0, res)
    U, V = np.meshgrid(t, t, indexing="ij")
    D = surface.derivatives(U.ravel(), V.ravel(), order=2)
    idx = np.arange(res * res).reshape(res, res)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    tris = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    trim = None
    if pcurve is not None:
        trim = surface.evaluate(pcurve.params[:, 0], pcurve.params[:, 1])
    return MeshExport(D[:, 0, 0], tris, _safe_mean_curvature(D), trim)


def export_mesh(surface: BSplineSurface, pcurve: Optional[PCurve], res: int,
                path) -> MeshExport:
    """Write the tessellation as OBJ (object ``patch`` with triangles, object
    ``trim`` with the closed trimming polyline) and the per-vertex mean
    curvature to ``<path>.curvature.csv``."""
    mesh = tessellate(surface, res, pcurve)
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("o patch\n")
        for p in mesh.vertices:
            fh.write(f"v {p[0]!r} {p[1]!r} {p[2]!r}\n")
        for t in mesh.triangles + 1:
            fh.write(f"f {t[0]} {t[1]} {t[2]}\n")
        if mesh.trim_polyline is not None:
            fh.write("o trim\n")
            for p in mesh.trim_polyline:
                fh.write(f"v {p[0]!r} {p[1]!r} {p[2]!r}\n")
            base = len(mesh.vertices) + 1
            k = len(mesh.trim_polyline)
            fh.write("l " + " ".join(str(base + i) for i in range(k)) + f" {base}\n")
    with open(path.with_suffix(".curvature.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex", "mean_curvature"])
        for i, h in enumerate(mesh.mean_curvature):
            w.writerow([i, repr(float(h))])
    return mesh


def triangle_normals(vertices, triangles) -> np.ndarray:
    v = np.asarray(vertices)
    t = np.asarray(triangles)
    n = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    return n / np.linalg.norm(n, axis=1, keepdims=True)


__all__ = ["METHODS", "RunConfig", "FillReport", "run_fill", "run_eval",
           "fill_record", "fill_holes", "export_mesh", "tessellate",
           "write_report", "read_flat_config", "network_surface",
           "nearest_plane_parameterization", "mean_value_parameterization",
           "projection_parameterization", "triangle_normals"]
