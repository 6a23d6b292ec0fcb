import json
import math

import numpy as np
import pytest

from holefill.dataset import (FAMILIES, MIN_KNOT_GAP, DatasetRecord, LoopShape,
                              Normalization, add_fair_noise, generate_corpus,
                              generate_surface, make_pcurve_library,
                              manifest_path, read_records, split,
                              trim_and_sample, write_records)
from holefill.errors import ConfigurationError
from holefill.fairing import SurfaceLayout, assemble_fairness, fairness_energy
from holefill.geom import unit_normals
from holefill.param import has_self_intersection, signed_area
from holefill.voxel import decode_refinement
from oracles import jet_away_from_knots, jet_fd_failures


def test_generate_surface_is_deterministic():
    for family in FAMILIES:
        a, b = generate_surface(42, family), generate_surface(42, family)
        np.testing.assert_array_equal(a.control_points, b.control_points)
        np.testing.assert_array_equal(a.knots_u.values, b.knots_u.values)
    assert not np.array_equal(generate_surface(1).control_points,
                              generate_surface(2).control_points)
    with pytest.raises(ConfigurationError):
        generate_surface(0, "spiral")


def test_knot_gaps():
    for seed in range(50):
        s = generate_surface(seed, FAMILIES[seed % len(FAMILIES)])
        for k in (s.knots_u, s.knots_v):
            assert k.n_basis == 8 and k.degree == 3
            gaps = np.diff(np.concatenate([[0.0], k.interior, [1.0]]))
            assert gaps.min() >= MIN_KNOT_GAP


def test_generated_surfaces_pass_jet_checks():
    rng = np.random.default_rng(77)
    for seed in range(8):
        s = generate_surface(seed, FAMILIES[seed % len(FAMILIES)])
        for _ in range(5):
            u, v = jet_away_from_knots(rng, s)
            assert not jet_fd_failures(s, u, v)


def test_zero_noise_is_identity():
    s = generate_surface(3)
    assert add_fair_noise(s, 0.0) is s
    with pytest.raises(ValueError):
        add_fair_noise(s, -0.1)


def test_noise_amplitude_and_energy_ratio():
    for seed in range(20):
        s = generate_surface(seed, FAMILIES[seed % len(FAMILIES)])
        lay = SurfaceLayout.of(s)
        A = assemble_fairness(lay)
        noisy = add_fair_noise(s, 0.02, seed)
        disp = np.linalg.norm(noisy.control_points - s.control_points, axis=-1)
        assert disp.max() == pytest.approx(0.02, rel=1e-12)
        ratio = fairness_energy(A, noisy.control_points, lay) / fairness_energy(A, s.control_points, lay)
        assert ratio <= 4.0


def test_noise_scales_linearly_with_level():
    means = []
    for level in (0.01, 0.02, 0.04):
        m = []
        for seed in range(100):
            s = generate_surface(seed)
            noisy = add_fair_noise(s, level, seed)
            m.append(np.linalg.norm(noisy.control_points - s.control_points, axis=-1).mean())
        means.append(np.mean(m) / level)
    assert max(means) / min(means) < 1.1


def test_pcurve_library_shapes():
    lib = make_pcurve_library(5, 30)
    assert len(lib) == 30
    for shape in lib:
        uv = shape.params
        assert uv.min() >= 0.1 - 1e-12 and uv.max() <= 0.9 + 1e-12
        assert signed_area(uv) > 0
        assert shape.anchors[0] == 0
        assert not has_self_intersection(uv[::16])


def test_record_invariants(corpus):
    for rec in corpus:
        uv = rec.pcurve_gt.params
        D = rec.target_surface.derivatives(uv[:, 0], uv[:, 1], order=1)
        assert np.abs(D[:, 0, 0] - rec.boundary.samples).max() < 1e-10
        np.testing.assert_allclose(np.abs(np.einsum("mc,mc->m", rec.boundary.normals,
                                                    unit_normals(D[:, 1, 0], D[:, 0, 1]))),
                                   1.0, atol=1e-12)
        cp = rec.target_surface.control_points.reshape(-1, 3)
        assert cp.min() >= 0 and cp.max() < 1
        err = np.linalg.norm(decode_refinement(rec.target_labels) - cp, axis=1)
        assert err.max() <= math.sqrt(3) * 0.01 / 2
        np.testing.assert_array_equal(rec.target_knots[:4], rec.target_surface.knots_u.interior)
        np.testing.assert_array_equal(rec.target_knots[4:], rec.target_surface.knots_v.interior)
        assert {"noise_level", "surface_seed", "trim_seed"} <= set(rec.provenance)


def test_boundary_normals_orthogonal_to_exact_tangents(corpus):
    for rec in corpus:
        uv = rec.pcurve_gt.params
        duv = np.roll(uv, -1, 0) - np.roll(uv, 1, 0)
        D = rec.target_surface.derivatives(uv[:, 0], uv[:, 1], order=1)
        t = D[:, 1, 0] * duv[:, :1] + D[:, 0, 1] * duv[:, 1:]
        t /= np.linalg.norm(t, axis=1, keepdims=True)
        assert np.abs(np.einsum("mc,mc->m", rec.boundary.normals, t)).max() < 1e-8


def test_normalization_round_trip(rng):
    x = rng.normal(0, 5, (100, 3))
    norm = Normalization.from_boundary(x)
    np.testing.assert_allclose(norm.invert(norm.apply(x)), x, rtol=0, atol=1e-12 * 20)
    y = norm.apply(x)
    assert abs((y.max(0) - y.min(0)).max() - 0.36) < 1e-12
    back = Normalization.from_dict(json.loads(json.dumps(norm.to_dict())))
    np.testing.assert_array_equal(back.apply(x), y)


def test_trim_rejects_bad_pcurve():
    s = generate_surface(0)
    bad = LoopShape("ellipse", np.array([[0.5, 0.5], [1.2, 0.5], [0.5, 0.9]]), [0])
    with pytest.raises(ValueError):
        trim_and_sample(s, [bad], 0)
    with pytest.raises(ValueError):
        trim_and_sample(s, [], 0)


def test_split_by_surface():
    recs = generate_corpus(10, 10, seed=3, library_size=16)
    assert len(recs) == 100
    tr, te = split(recs, 0.9, seed=4)
    assert len({r.surface_id for r in tr}) == 9 and len({r.surface_id for r in te}) == 1
    assert not {r.surface_id for r in tr} & {r.surface_id for r in te}
    tr2, te2 = split(recs, 0.9, seed=4)
    assert [r.record_id for r in tr] == [r.record_id for r in tr2]
    with pytest.raises(ValueError):
        split(recs[:9])


def test_corpus_is_deterministic(corpus):
    again = generate_corpus(6, 4, seed=11)
    assert len(again) == len(corpus) == 24
    for a, b in zip(corpus, again):
        np.testing.assert_array_equal(a.boundary.samples, b.boundary.samples)


def test_record_file_round_trip(tmp_path, corpus):
    path = tmp_path / "data.jsonl"
    write_records(corpus[:5], path, {"corpus_seed": 11})
    man = json.loads(manifest_path(path).read_text())
    assert man["count"] == 5 and man["corpus_seed"] == 11 and "generator_version" in man
    assert len(path.read_text().splitlines()) == 5
    back = read_records(path)
    for a, b in zip(corpus[:5], back):
        np.testing.assert_array_equal(a.boundary.samples, b.boundary.samples)
        np.testing.assert_array_equal(a.target_surface.control_points,
                                      b.target_surface.control_points)
        np.testing.assert_array_equal(a.target_labels.sub_indices, b.target_labels.sub_indices)
        np.testing.assert_array_equal(a.pcurve_gt.params, b.pcurve_gt.params)
        assert a.boundary.segment_offsets == b.boundary.segment_offsets
        assert isinstance(b, DatasetRecord) and a.provenance == b.provenance
