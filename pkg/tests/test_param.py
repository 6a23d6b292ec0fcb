import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from holefill.errors import DegeneracyError, ProjectionError, ShapeError
from holefill.geom import BSplineSurface, KnotVector, unit_normals
from holefill.param import (HoleBoundary, PCurve, canonical_order,
                            has_self_intersection, mvc_pcurve, mvc_weights,
                            nearest_plane, np_pcurve, parameter_error,
                            pcurve_from_projection, prepare_boundary,
                            project_to_surface, resample_boundary,
                            self_intersection_pairs, signed_area)
from oracles import flat_surface, random_surface, segments_cross_bruteforce


def loop(points, **kw):
    return HoleBoundary(np.asarray(points, dtype=float), **kw)


def circle(n=64, r=1.0, z=0.0):
    t = 2 * np.pi * np.arange(n) / n
    return np.column_stack([r * np.cos(t), r * np.sin(t), np.full(n, z)])


def polygon_samples(corners, per_edge):
    corners = np.asarray(corners, dtype=float)
    out = []
    for a, b in zip(corners, np.roll(corners, -1, axis=0)):
        for s in np.arange(per_edge) / per_edge:
            out.append(a + s * (b - a))
    return np.array(out)


# -- data types ---------------------------------------------------------------

def test_boundary_validation():
    with pytest.raises(ValueError):
        loop([[0, 0, 0], [0, 0, 0], [1, 0, 0]])
    with pytest.raises(ValueError):
        loop(circle(8), normals=np.full((8, 3), 0.5))
    with pytest.raises(ShapeError):
        loop(circle(8), curvatures=np.zeros(5))
    with pytest.raises(ValueError):
        loop(circle(8), segment_offsets=[8])


def test_boundary_json_round_trip():
    b = loop(circle(16), normals=np.tile([0, 0, 1.0], (16, 1)),
             curvatures=np.linspace(0, 1, 16), segment_offsets=[0, 5, 9])
    back = HoleBoundary.from_dict(b.to_dict())
    np.testing.assert_array_equal(back.samples, b.samples)
    np.testing.assert_array_equal(back.normals, b.normals)
    np.testing.assert_array_equal(back.curvatures, b.curvatures)
    assert back.segment_offsets == [0, 5, 9]
    pc = PCurve(np.random.default_rng(0).uniform(0, 1, (10, 2)))
    np.testing.assert_array_equal(PCurve.from_dict(pc.to_dict()).params, pc.params)


def test_pcurve_outside_unit_square_rejected():
    with pytest.raises(ValueError):
        PCurve([[0.5, 0.5], [1.2, 0.1], [0.1, 0.1]])


# -- nearest plane ------------------------------------------------------------

def test_nearest_plane_exact_planar_data(rng):
    pts = np.column_stack([rng.uniform(-1, 1, (30, 2)), np.zeros(30)])
    plane = nearest_plane(pts)
    np.testing.assert_allclose(np.abs(plane.normal), [0, 0, 1], atol=1e-12)
    assert np.abs((pts - plane.origin) @ plane.normal).max() < 1e-12
    frame = np.stack([plane.e1, plane.e2, plane.normal])
    np.testing.assert_allclose(frame @ frame.T, np.eye(3), atol=1e-10)


def test_nearest_plane_symmetric_lift():
    h = 0.3
    pts = [[0, 0, h], [1, 0, -h], [1, 1, h], [0, 1, -h]]
    plane = nearest_plane(pts)
    np.testing.assert_allclose(np.abs(plane.normal), [0, 0, 1], atol=1e-12)
    assert abs(plane.origin[2]) < 1e-15


def test_nearest_plane_beats_random_candidates(rng):
    pts = rng.standard_normal((50, 3)) * [2.0, 1.0, 0.3]
    plane = nearest_plane(pts)

    def residual(origin, normal):
        return float(np.sum(((pts - origin) @ normal) ** 2))

    best = residual(plane.origin, plane.normal)
    for _ in range(1000):
        nrm = rng.standard_normal(3)
        nrm /= np.linalg.norm(nrm)
        origin = pts.mean(axis=0) + rng.normal(0, 0.1, 3)
        assert best <= residual(origin, nrm) + 1e-12


def test_nearest_plane_degenerate():
    with pytest.raises(DegeneracyError):
        nearest_plane([[0, 0, 0], [1, 1, 1], [2, 2, 2], [3, 3, 3]])
    with pytest.raises(DegeneracyError):
        nearest_plane(np.ones((5, 3)))


# -- NP pcurve ----------------------------------------------------------------

def test_np_planar_circle_stays_circle():
    Q, _ = np.linalg.qr(np.random.default_rng(3).standard_normal((3, 3)))
    pc = np_pcurve(loop(circle(64, 2.5) @ Q.T + [1, -2, 0.5])).params
    # algebraic circle fit: x^2 + y^2 + D x + E y + F = 0
    A = np.column_stack([pc, np.ones(len(pc))])
    rhs = -(pc ** 2).sum(axis=1)
    (D, E, F), *_ = np.linalg.lstsq(A, rhs, rcond=None)
    c = -np.array([D, E]) / 2
    r = np.sqrt(c @ c - F)
    assert np.abs(np.linalg.norm(pc - c, axis=1) - r).max() < 1e-10


def test_np_square_corners_map_to_margin_box():
    corners = [[-1, -1, 0], [1, -1, 0], [1, 1, 0], [-1, 1, 0]]
    pc = np_pcurve(loop(polygon_samples(corners, 8))).params
    np.testing.assert_allclose(pc[[0, 8, 16, 24]],
                               [[0.05, 0.05], [0.95, 0.05], [0.95, 0.95], [0.05, 0.95]],
                               atol=1e-14)


def figure_eight(n=128, lift=0.3):
    """Simple in 3D, but its shadow on the best-fit plane crosses itself."""
    t = 2 * np.pi * np.arange(n) / n
    return np.column_stack([np.cos(t), 0.5 * np.sin(2 * t), lift * np.sin(t)])


def test_np_folded_boundary_self_intersects():
    pc = np_pcurve(loop(figure_eight()))
    assert pc.self_intersecting


@given(arrays(float, (12, 3), elements=st.floats(-5, 5)))
def test_np_pcurve_inside_margin_box(pts):
    try:
        b = loop(pts)
        pc = np_pcurve(b)
    except (DegeneracyError, ValueError):
        return
    assert pc.params.min() >= 0.05 and pc.params.max() <= 0.95


# -- MVC ----------------------------------------------------------------------

def direct_mvc(x, verts):
    """Signed-angle mean value coordinates of a point inside a polygon."""
    d = verts - x
    r = np.linalg.norm(d, axis=1)
    ang = np.arctan2(np.roll(d, -1, axis=0)[:, 1], np.roll(d, -1, axis=0)[:, 0]) \
        - np.arctan2(d[:, 1], d[:, 0])
    ang = (ang + np.pi) % (2 * np.pi) - np.pi
    w = (np.tan(np.roll(ang, 1) / 2) + np.tan(ang / 2)) / r
    return w / w.sum()


def test_mvc_weights_match_direct_formula(rng):
    verts = np.array([[0, 0], [2, -0.2], [3, 1], [1.5, 2.5], [-0.5, 1.5]])
    for _ in range(50):
        x = verts.mean(axis=0) + rng.uniform(-0.5, 0.5, 2)
        np.testing.assert_allclose(mvc_weights(x, verts), direct_mvc(x, verts), atol=1e-12)


def test_mvc_lagrange_property_and_normalization(rng):
    verts = rng.standard_normal((6, 3))
    for k in range(6):
        w = mvc_weights(verts[k], verts)
        np.testing.assert_array_equal(w, np.eye(6)[k])
    for x in rng.standard_normal((100, 3)):
        w = mvc_weights(x, verts)
        assert w.min() >= 0.0
        assert abs(w.sum() - 1.0) < 1e-10


def test_mvc_anchor_sample_lands_on_its_position():
    pts = circle(60, 1.0)
    pts[:, 2] = 0.2 * np.sin(3 * np.arctan2(pts[:, 1], pts[:, 0]))
    anchors = [0, 13, 29, 41]
    pc = mvc_pcurve(loop(pts, segment_offsets=anchors)).params
    # anchors sit on the unit circle at arc-length angles, up to the final
    # box normalization (a uniform scale plus shift)
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    s = np.r_[0, np.cumsum(seg)]
    ang = 2 * np.pi * s[anchors] / s[-1]
    ideal = np.column_stack([np.cos(ang), np.sin(ang)])
    X = np.column_stack([ideal, np.ones(4)])
    M, *_ = np.linalg.lstsq(X, pc[anchors], rcond=None)
    assert np.abs(X @ M - pc[anchors]).max() < 1e-12
    np.testing.assert_allclose(M[:2], M[0, 0] * np.eye(2), atol=1e-12)


def test_mvc_regular_polygon_reproduced_up_to_similarity():
    M = 5
    ang = 2 * np.pi * np.arange(M) / M
    corners = np.column_stack([np.cos(ang), np.sin(ang), np.zeros(M)])
    per = 12
    pts = polygon_samples(corners, per)
    pc = mvc_pcurve(loop(pts, segment_offsets=list(range(0, M * per, per)))).params
    # fit uv = [x y 1] @ T with T a similarity (possibly reflected)
    X = np.column_stack([pts[:, :2], np.ones(len(pts))])
    T, *_ = np.linalg.lstsq(X, pc, rcond=None)
    lin = T[:2]
    sv = np.linalg.svd(lin, compute_uv=False)
    assert abs(sv[0] - sv[1]) < 1e-8 * sv[0]
    assert np.abs(X @ T - pc).max() < 1e-8


def test_mvc_without_anchors_falls_back_to_circle():
    pc = mvc_pcurve(loop(circle(40) * [1, 3, 1])).params
    c = pc.mean(axis=0)
    r = np.linalg.norm(pc - c, axis=1)
    assert r.max() - r.min() < 1e-12


# -- projection ---------------------------------------------------------------

def test_projection_of_surface_point(rng):
    s = random_surface(rng)
    res = project_to_surface(s, s.evaluate(0.3, 0.7))
    assert abs(res.u - 0.3) < 1e-8 and abs(res.v - 0.7) < 1e-8
    assert res.distance < 1e-10
    assert res.converged


def test_projection_onto_flat_patch():
    s = flat_surface()
    res = project_to_surface(s, [0.5, 0.5, 1.0])
    np.testing.assert_allclose(s.evaluate(res.u, res.v), [0.5, 0.5, 0.0], atol=1e-12)
    assert abs(res.distance - 1.0) < 1e-12


def dense_min_distance(surface, p, m=200):
    g = np.linspace(0, 1, m)
    grid = surface.evaluate_grid(g, g)[:, :, 0, 0]
    return float(np.sqrt(((grid - p) ** 2).sum(axis=-1).min()))


def test_projection_beats_dense_grid_and_is_stationary():
    rng = np.random.default_rng(99)
    for _ in range(100):
        s = random_surface(rng)
        u, v = rng.uniform(0, 1, 2)
        jet = s.derivatives(u, v, order=1)[0]
        n = unit_normals(jet[1, 0], jet[0, 1])
        p = jet[0, 0] + rng.normal(0, 0.1) * n + rng.normal(0, 0.05, 3)
        res = project_to_surface(s, p)
        assert res.distance <= dense_min_distance(s, p) + 1e-6
        D = s.derivatives(res.u, res.v, order=1)[0]
        r = D[0, 0] - p
        rn = np.linalg.norm(r)
        for t, x in ((D[1, 0], res.u), (D[0, 1], res.v)):
            pinned = x in (0.0, 1.0)
            assert pinned or abs(r @ t) / np.linalg.norm(t) <= 1e-8 * rn


def test_iso_curve_boundary_recovers_iso_line(rng):
    s = random_surface(rng, amplitude=0.15)
    vs = np.linspace(0.1, 0.9, 40)
    b = loop(s.evaluate(np.full(40, 0.4), vs))
    pc = pcurve_from_projection(s, b)
    assert np.abs(pc.params[:, 0] - 0.4).max() < 1e-6
    assert np.abs(pc.params[:, 1] - vs).max() < 1e-6


def test_dataset_pair_round_trip(corpus):
    for rec in corpus[:8]:
        pc = pcurve_from_projection(rec.target_surface, rec.boundary)
        err = np.linalg.norm(pc.params - rec.pcurve_gt.params, axis=1).mean()
        assert err < 1e-6


@pytest.mark.parametrize("curved", [False, True])
def test_normal_offset_leaves_pcurve_unchanged(curved):
    s = flat_surface()
    if curved:
        cp = s.control_points.copy()
        cp[..., 2] = 0.1 * ((cp[..., 0] - 0.5) ** 2 + (cp[..., 1] - 0.5) ** 2)
        s = s.with_control_points(cp)
    t = 2 * np.pi * np.arange(64) / 64
    uv = np.column_stack([0.5 + 0.3 * np.cos(t), 0.5 + 0.25 * np.sin(t)])
    D = s.derivatives(uv[:, 0], uv[:, 1], order=1)
    n = unit_normals(D[:, 1, 0], D[:, 0, 1])
    base = pcurve_from_projection(s, loop(D[:, 0, 0])).params
    moved = pcurve_from_projection(s, loop(D[:, 0, 0] + 0.05 * n)).params
    assert np.abs(moved - base).max() < 1e-6
    assert np.abs(base - uv).max() < 1e-6


def test_projection_failure_carries_diagnostics():
    s = flat_surface()
    b = loop(circle(16, 0.2) + [0.5, 0.5, 0])
    with pytest.raises(ProjectionError) as info:
        pcurve_from_projection(s, b, min_ratio=1.01)
    assert len(info.value.diagnostics.params) == 16


# -- parameter error ----------------------------------------------------------

def test_parameter_error_examples(rng):
    a = PCurve(rng.uniform(0.2, 0.8, (32, 2)))
    assert parameter_error(a, a) == 0.0
    shifted = PCurve(a.params + [0.01, 0.0])
    assert abs(parameter_error(a, shifted) - 0.01) < 1e-12
    p = PCurve([[0.1, 0.1], [0.5, 0.1], [0.5, 0.5], [0.1, 0.5]])
    q = PCurve([[0.1, 0.2], [0.8, 0.1], [0.5, 0.5], [0.4, 0.9]])
    hand = (0.1 + 0.3 + 0.0 + 0.5) / 4
    assert abs(parameter_error(p, q, align=False) - hand) < 1e-15
    assert parameter_error(p, q) <= hand


def test_parameter_error_aligns_cyclic_shift(rng):
    a = rng.uniform(0, 1, (20, 2))
    assert parameter_error(PCurve(a), PCurve(np.roll(a, 7, axis=0))) == 0.0


def test_parameter_error_length_mismatch():
    with pytest.raises(ShapeError):
        parameter_error(PCurve(np.full((4, 2), 0.5)), PCurve(np.full((5, 2), 0.5)))


# -- self intersection --------------------------------------------------------

@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=4, max_size=9))
def test_self_intersection_matches_bruteforce(pts):
    uv = np.array(pts, dtype=float)
    got = sorted(map(tuple, self_intersection_pairs(uv).tolist()))
    assert got == segments_cross_bruteforce(uv)


def test_simple_and_crossing_loops():
    square = [[0, 0], [1, 0], [1, 1], [0, 1]]
    bowtie = [[0, 0], [1, 1], [1, 0], [0, 1]]
    assert not has_self_intersection(square)
    assert has_self_intersection(bowtie)


# -- canonical layout ---------------------------------------------------------

def test_canonical_order_is_ccw_and_starts_at_offset():
    pts = circle(40)[::-1] + [0, 0, 2]                  # clockwise about +z
    b = loop(pts, normals=np.tile([0, 0, 1.0], (40, 1)), segment_offsets=[7, 20])
    order = canonical_order(b)
    out = b.samples[order]
    assert signed_area(out[:, :2]) > 0
    assert order[0] == 7
    # flipping the attribute normals flips the orientation
    b2 = loop(pts, normals=np.tile([0, 0, -1.0], (40, 1)), segment_offsets=[7])
    assert signed_area(b2.samples[canonical_order(b2)][:, :2]) < 0


def test_prepare_boundary_resamples_and_is_idempotent():
    t = np.sort(np.random.default_rng(5).uniform(0, 2 * np.pi, 90))
    pts = np.column_stack([np.cos(t), 2 * np.sin(t), 0.1 * np.cos(3 * t)])
    b = prepare_boundary(loop(pts, segment_offsets=[10, 50]), 128)
    assert len(b) == 128
    assert b.segment_offsets[0] == 0
    seg = np.linalg.norm(np.roll(b.samples, -1, axis=0) - b.samples, axis=1)
    assert seg.max() / seg.min() < 1.2
    again = prepare_boundary(b, 128)
    np.testing.assert_array_equal(again.samples, b.samples)
    assert again.segment_offsets == b.segment_offsets


def test_resample_boundary_keeps_attributes_unit():
    n = np.tile([0.0, 0.6, 0.8], (50, 1))
    b = resample_boundary(loop(circle(50), normals=n, curvatures=np.ones(50)), 32)
    np.testing.assert_allclose(np.linalg.norm(b.normals, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(b.curvatures, 1.0)
