import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from holefill.errors import DomainError, SingularityError, TopologyError
from holefill.geom import (BSplineSurface, KnotVector, QuadMesh, basis_eval,
                           basis_matrix, catmull_clark_subdivide, fit_surface,
                           limit_positions, load_surface, mean_curvature,
                           read_obj, save_surface, surface_jet,
                           surface_normal_and_curvature, write_obj)
from oracles import (cox_de_boor_row, flat_surface, jet_away_from_knots,
                     jet_fd_failures, random_surface)

CUBIC8 = KnotVector.uniform(8)


# -- knot vectors -------------------------------------------------------------

def test_uniform_knot_vector_layout():
    assert len(CUBIC8.values) == 12
    np.testing.assert_allclose(CUBIC8.interior, [0.2, 0.4, 0.6, 0.8])
    assert CUBIC8.n_basis == 8
    assert CUBIC8.domain == (0.0, 1.0)


@pytest.mark.parametrize("values", [
    [0, 0, 0, 0, 0.6, 0.4, 1, 1, 1, 1],       # decreasing
    [0, 0, 0, 0.1, 0.5, 1, 1, 1, 1],          # not clamped at the start
    [0, 0, 0, 0, 1, 1, 1],                    # too short
    [0, 0, 0, 0, np.nan, 1, 1, 1, 1],
])
def test_invalid_knot_vectors(values):
    with pytest.raises(ValueError):
        KnotVector(values, 3)


# -- basis functions ----------------------------------------------------------

def test_basis_partition_of_unity_1000_random(rng):
    knots = KnotVector.from_interior([0.1, 0.35, 0.4, 0.77])
    for u in rng.uniform(0, 1, 1000):
        vals = [v for _, v in basis_eval(u, 0, knots)]
        assert len(vals) == 4
        assert min(vals) >= 0.0
        assert abs(sum(vals) - 1.0) < 1e-12


def test_basis_clamped_endpoints():
    left = dict(basis_eval(0.0, 0, CUBIC8))
    assert left[0] == 1.0
    assert all(v == 0.0 for i, v in left.items() if i != 0)
    right = dict(basis_eval(1.0, 0, CUBIC8))
    assert right[7] == pytest.approx(1.0, abs=1e-15)
    assert all(abs(v) < 1e-15 for i, v in right.items() if i != 7)


def test_basis_matches_cox_de_boor_at_half():
    got = np.zeros(8)
    for i, v in basis_eval(0.5, 0, CUBIC8):
        got[i] = v
    np.testing.assert_allclose(got, cox_de_boor_row(CUBIC8.values, 3, 0.5), atol=1e-14)


@given(st.floats(0.0, 1.0), st.lists(st.floats(0.02, 0.98), min_size=4, max_size=4))
def test_basis_matches_cox_de_boor_anywhere(u, interior):
    interior = np.sort(interior)
    knots = KnotVector.from_interior(interior)
    got = basis_matrix(knots.values, 3, [u])[0, 0]
    np.testing.assert_allclose(got, cox_de_boor_row(knots.values, 3, u), atol=1e-12)


def test_basis_derivatives_against_finite_differences(rng):
    knots = KnotVector.from_interior([0.15, 0.3, 0.62, 0.8])
    h = 1e-6
    for u in rng.uniform(0.01, 0.99, 50):
        if np.min(np.abs(knots.interior - u)) < 2e-3:
            continue
        for order in (1, 2, 3):
            hi = basis_matrix(knots.values, 3, [u + h], order - 1)[0, order - 1]
            lo = basis_matrix(knots.values, 3, [u - h], order - 1)[0, order - 1]
            fd = (hi - lo) / (2 * h)
            an = basis_matrix(knots.values, 3, [u], order)[0, order]
            np.testing.assert_allclose(an, fd, rtol=1e-5,
                                       atol=1e-6 * max(1.0, np.abs(an).max()))


def test_basis_eval_errors():
    with pytest.raises(DomainError):
        basis_eval(1.2, 0, CUBIC8)
    with pytest.raises(DomainError):
        basis_eval(-1e-9, 0, CUBIC8)
    with pytest.raises(ValueError):
        basis_eval(0.5, 4, CUBIC8)


# -- surfaces -----------------------------------------------------------------

def test_flat_surface_second_derivatives_vanish(rng):
    s = flat_surface()
    for u, v in rng.uniform(0, 1, (20, 2)):
        jet = surface_jet(s, u, v)
        for d in (jet.S_uu, jet.S_uv, jet.S_vv, jet.S_uuu, jet.S_vvv):
            assert np.abs(d).max() < 1e-12
        np.testing.assert_allclose(jet.position, [u, v, 0], atol=1e-14)


def test_corners_interpolate_control_points(rng):
    s = random_surface(rng)
    cp = s.control_points
    for (u, v), (i, j) in {(0, 0): (0, 0), (1, 0): (-1, 0), (0, 1): (0, -1),
                           (1, 1): (-1, -1)}.items():
        np.testing.assert_array_equal(surface_jet(s, u, v).position, cp[i, j])


def test_jet_derivatives_match_finite_differences(rng):
    for _ in range(25):
        s = random_surface(rng)
        u, v = jet_away_from_knots(rng, s)
        failures = jet_fd_failures(s, u, v)
        assert not failures, failures


def test_first_derivative_relative_error(rng):
    s = random_surface(rng)
    u, v = 0.37, 0.61
    h = 1e-5
    fd = (s.evaluate(u + h, v) - s.evaluate(u - h, v)) / (2 * h)
    an = surface_jet(s, u, v).S_u
    assert np.linalg.norm(fd - an) / np.linalg.norm(an) < 1e-6


def test_surface_out_of_domain():
    with pytest.raises(DomainError):
        surface_jet(flat_surface(), 0.5, 1.0001)


def test_rigid_transform_equivariance(rng):
    s = random_surface(rng)
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    t = rng.standard_normal(3)
    moved = s.with_control_points(s.control_points @ Q.T + t)
    uv = rng.uniform(0, 1, (50, 2))
    a = s.evaluate(uv[:, 0], uv[:, 1]) @ Q.T + t
    b = moved.evaluate(uv[:, 0], uv[:, 1])
    assert np.abs(a - b).max() < 1e-10


def test_surface_json_round_trip(tmp_path, rng):
    s = random_surface(rng)
    path = tmp_path / "s.json"
    save_surface(s, path)
    data = json.loads(path.read_text())
    assert set(data) == {"degree_u", "degree_v", "knots_u", "knots_v", "control_points"}
    assert len(data["control_points"]) == 64
    # row-major: the second entry is control point (0, 1)
    assert data["control_points"][1] == s.control_points[0, 1].tolist()
    back = load_surface(path)
    np.testing.assert_array_equal(back.control_points, s.control_points)
    assert back.knots_u == s.knots_u and back.knots_v == s.knots_v


def test_grid_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        BSplineSurface(CUBIC8, CUBIC8, np.zeros((7, 8, 3)))
    with pytest.raises(ValueError):
        BSplineSurface(CUBIC8, CUBIC8, np.full((8, 8, 3), np.inf))


# -- normals and curvature ----------------------------------------------------

def test_flat_patch_normal_and_curvature(rng):
    s = flat_surface()
    for u, v in rng.uniform(0, 1, (10, 2)):
        n, k = surface_normal_and_curvature(s, u, v, rng.standard_normal(2))
        assert abs(k) < 1e-10
        np.testing.assert_allclose(np.abs(n), [0, 0, 1], atol=1e-10)


def paraboloid_fit():
    g = np.linspace(0, 1, 41)
    uu, vv = np.meshgrid(g, g, indexing="ij")
    params = np.column_stack([uu.ravel(), vv.ravel()])
    x, y = params[:, 0] - 0.5, params[:, 1] - 0.5
    pts = np.column_stack([x, y, (x * x + y * y) / 2])
    return fit_surface(params, pts, CUBIC8, CUBIC8)


def test_paraboloid_apex_curvature():
    s = paraboloid_fit()
    n, k = surface_normal_and_curvature(s, 0.5, 0.5, [1.0, 0.0])
    assert abs(k - 1.0) < 5e-2
    np.testing.assert_allclose(n, [0, 0, 1], atol=1e-6)
    H = mean_curvature(s.derivatives(0.5, 0.5, order=2))
    assert abs(H[0] - 1.0) < 5e-2


def test_normal_orthogonal_to_tangents(rng):
    s = random_surface(rng)
    for u, v in rng.uniform(0, 1, (20, 2)):
        n, _ = surface_normal_and_curvature(s, u, v, [0.3, 0.7])
        jet = surface_jet(s, u, v)
        assert abs(np.linalg.norm(n) - 1) < 1e-12
        assert abs(n @ jet.S_u) < 1e-10 * np.linalg.norm(jet.S_u)
        assert abs(n @ jet.S_v) < 1e-10 * np.linalg.norm(jet.S_v)


def test_degenerate_tangent_plane_raises():
    cp = np.zeros((8, 8, 3))
    cp[..., 0] = np.linspace(0, 1, 8)[:, None]      # no v dependence
    s = BSplineSurface(CUBIC8, CUBIC8, cp)
    with pytest.raises(SingularityError):
        surface_normal_and_curvature(s, 0.5, 0.5, [1, 0])


def test_zero_direction_rejected():
    with pytest.raises(ValueError):
        surface_normal_and_curvature(flat_surface(), 0.5, 0.5, [0, 0])


# -- Catmull-Clark ------------------------------------------------------------

CUBE = QuadMesh(
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
     [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]],
    [[0, 3, 2, 1], [4, 5, 6, 7], [0, 1, 5, 4], [1, 2, 6, 5], [2, 3, 7, 6], [3, 0, 4, 7]])


def grid_mesh(k, z=None):
    g = np.arange(k + 1, dtype=float)
    x, y = np.meshgrid(g, g, indexing="ij")
    z = np.zeros_like(x) if z is None else z
    verts = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    idx = lambda i, j: i * (k + 1) + j
    faces = [[idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]
             for i in range(k) for j in range(k)]
    return QuadMesh(verts, faces)


def test_cube_subdivision_counts():
    out = catmull_clark_subdivide(CUBE)
    assert len(out.vertices) == 26
    assert len(out.faces) == 24
    assert all(len(f) == 4 for f in out.faces)
    # the eight corners keep valence 3
    assert sorted(out.valence()[:8]) == [3] * 8


def test_face_count_is_sum_of_valences():
    mesh = QuadMesh([[0, 0, 0], [1, 0, 0], [1.5, 1, 0], [0.5, 1.6, 0], [-0.5, 1, 0],
                     [2.5, 0.2, 0]],
                    [[0, 1, 2, 3, 4], [1, 5, 2]])
    out = catmull_clark_subdivide(mesh)
    assert len(out.faces) == 5 + 3
    assert all(len(f) == 4 for f in out.faces)


def test_planar_grid_stays_planar(rng):
    mesh = grid_mesh(4)
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    mesh = QuadMesh(mesh.vertices @ Q.T, mesh.faces)
    out = catmull_clark_subdivide(catmull_clark_subdivide(mesh))
    normal = Q[:, 2]
    assert np.abs(out.vertices @ normal).max() < 1e-12


def test_regular_grid_limit_matches_bicubic_bspline(rng):
    z = rng.standard_normal((5, 5))
    mesh = grid_mesh(4, z)
    lim = limit_positions(mesh).reshape(5, 5, 3)
    knots = KnotVector(np.arange(9.0), 3, clamped=False)
    P = mesh.vertices.reshape(5, 5, 3)
    for i in (1, 2, 3):
        for j in (1, 2, 3):
            bu = dict(basis_eval(float(i + 2), 0, knots))
            bv = dict(basis_eval(float(j + 2), 0, knots))
            ref = sum(bu[a] * bv[b] * P[a, b] for a in bu for b in bv)
            assert np.abs(lim[i, j] - ref).max() < 1e-10


def test_limit_positions_invariant_under_subdivision(rng):
    mesh = grid_mesh(4, rng.standard_normal((5, 5)))
    before = limit_positions(mesh)
    after = limit_positions(catmull_clark_subdivide(mesh))
    interior = [i * 5 + j for i in (1, 2, 3) for j in (1, 2, 3)]
    np.testing.assert_allclose(after[interior], before[interior], atol=1e-12)


def test_non_manifold_and_degenerate_faces():
    bad = QuadMesh(np.zeros((6, 3)) + np.arange(6)[:, None],
                   [[0, 1, 2], [0, 1, 3], [0, 1, 4]])
    with pytest.raises(TopologyError):
        catmull_clark_subdivide(bad)
    with pytest.raises(TopologyError):
        catmull_clark_subdivide(QuadMesh(np.eye(3), [[0, 1, 1]]))


def test_obj_round_trip(tmp_path):
    path = tmp_path / "cube.obj"
    write_obj(CUBE, path)
    back = read_obj(path)
    np.testing.assert_array_equal(back.vertices, CUBE.vertices)
    assert back.faces == CUBE.faces
