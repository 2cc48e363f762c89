import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splatrecon.edgemask import EdgeMask
from splatrecon.pruning import EdgeScoreTable, edge_visibility, project_point, prune, score_all
from splatrecon.scene import ImageBuffer, PipelineConfig
from splatrecon.visibility import (
    expected_depth,
    sample_depth_bilinear,
    validate_visibility,
)

from conftest import make_camera, make_primitive


def depth_buf(arr):
    return ImageBuffer.from_array(np.asarray(arr, dtype=np.float32))


def mask_of(arr, view_id=0):
    buf = ImageBuffer.from_array(np.asarray(arr, dtype=np.float32))
    return EdgeMask(view_id=view_id, mask=buf, threshold_used=0.5)


# -- bilinear sampling ----------------------------------------------------------

def test_integer_coordinates_read_single_texel():
    d = np.arange(20, dtype=np.float32).reshape(4, 5) + 1
    buf = depth_buf(d)
    assert sample_depth_bilinear(buf, (2.0, 3.0)) == pytest.approx(d[3, 2])


def test_midpoint_blend():
    d = np.array([[1.0, 3.0], [1.0, 3.0]], dtype=np.float32)
    assert sample_depth_bilinear(depth_buf(d), (0.5, 0.5)) == pytest.approx(2.0)


def test_sentinel_refusal_and_integer_exception():
    d = np.array([[1.0, 0.0], [1.0, 1.0]], dtype=np.float32)
    buf = depth_buf(d)
    assert sample_depth_bilinear(buf, (0.5, 0.0)) is None      # blends the sentinel
    assert sample_depth_bilinear(buf, (0.0, 0.5)) == pytest.approx(1.0)
    assert sample_depth_bilinear(buf, (1.0, 1.0)) == pytest.approx(1.0)


def test_out_of_bounds_rejected():
    buf = depth_buf(np.ones((4, 4)))
    with pytest.raises(ValueError, match="outside"):
        sample_depth_bilinear(buf, (4.2, 1.0))


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 9), st.floats(0, 7))
def test_linear_ramp_sampled_exactly(u, v):
    jj, ii = np.meshgrid(np.arange(10, dtype=np.float64), np.arange(8, dtype=np.float64))
    ramp = 2.0 + 0.25 * jj + 0.5 * ii
    buf = depth_buf(ramp)
    got = sample_depth_bilinear(buf, (u, v))
    assert got == pytest.approx(2.0 + 0.25 * u + 0.5 * v, abs=1e-5)


# -- expected depth --------------------------------------------------------------

def test_expected_depth_camera_space():
    cam = make_camera()
    assert expected_depth([0, 0, 5.0], cam) == pytest.approx(5.0)


def test_expected_depth_matches_manual_transform():
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    t = rng.normal(size=3)
    cam = make_camera(rotation=q, translation=t)
    for _ in range(20):
        x = rng.normal(size=3) * 3
        z = (q @ x + t)[2]
        if z <= 0:
            with pytest.raises(ValueError):
                expected_depth(x, cam)
        else:
            assert expected_depth(x, cam) == pytest.approx(z, rel=1e-12)


# -- validate_visibility ----------------------------------------------------------

def test_point_on_surface_accepted():
    cam = make_camera()
    depth = depth_buf(np.full((101, 101), 4.0))
    config = PipelineConfig()
    recs = validate_visibility([[0.1, -0.2, 4.0]], [cam], [depth], config)
    assert len(recs) == 1 and len(recs[0].visible_views) == 1
    view_id, px, d_exp, d_img = recs[0].visible_views[0]
    assert abs(d_exp - d_img) <= config.depth_eps_abs + config.depth_eps_rel * d_exp


def test_tolerance_rejects_event():
    # d_exp 10 vs d_img 10.2 with eps 0.01/0.01 -> tolerance 0.11 < 0.2
    cam = make_camera()
    depth = depth_buf(np.full((101, 101), 10.2))
    config = PipelineConfig(depth_eps_abs=0.01, depth_eps_rel=0.01)
    recs = validate_visibility([[0.0, 0.0, 10.0]], [cam], [depth], config)
    assert recs[0].visible_views == []


def test_two_wall_occlusion():
    # front wall at z=2 covers the left half of the image; rear wall at z=6
    cam = make_camera()
    d = np.full((101, 101), 6.0, dtype=np.float32)
    d[:, :50] = 2.0
    depth = depth_buf(d)
    config = PipelineConfig()
    # rear-wall point projecting into the occluded half is rejected
    pt_occluded = [-1.2, 0.0, 6.0]    # u = 100*(-1.2)/6 + 50 = 30
    pt_visible = [1.2, 0.0, 6.0]      # u = 70
    recs = validate_visibility([pt_occluded, pt_visible], [cam], [depth], config)
    assert recs[0].visible_views == []
    assert len(recs[1].visible_views) == 1


def test_acceptance_monotone_in_eps():
    rng = np.random.default_rng(1)
    cam = make_camera()
    noisy = 5.0 + rng.normal(scale=0.1, size=(101, 101)).astype(np.float32)
    depth = depth_buf(noisy)
    pts = [[rng.uniform(-1, 1), rng.uniform(-1, 1), 5.0] for _ in range(40)]
    sets = []
    for eps in (0.001, 0.01, 0.1):
        config = PipelineConfig(depth_eps_abs=eps)
        recs = validate_visibility(pts, [cam], [depth], config)
        sets.append({(r.point_id, v[0]) for r in recs for v in r.visible_views})
    assert sets[0] <= sets[1] <= sets[2]
    assert sets[0] != sets[2]


def test_records_deterministic():
    rng = np.random.default_rng(2)
    cam = make_camera()
    depth = depth_buf(5.0 + rng.normal(scale=0.05, size=(101, 101)).astype(np.float32))
    pts = [[rng.uniform(-1, 1), rng.uniform(-1, 1), 5.0] for _ in range(20)]
    config = PipelineConfig()
    a = validate_visibility(pts, [cam], [depth], config)
    b = validate_visibility(pts, [cam], [depth], config)
    assert [(r.point_id, [tuple(np.ravel(x[1])) for x in r.visible_views]) for r in a] \
        == [(r.point_id, [tuple(np.ravel(x[1])) for x in r.visible_views]) for r in b]


# -- project_point ------------------------------------------------------------------

def test_project_principal_point():
    cam = make_camera()
    px = project_point([0, 0, 2.0], cam)
    assert np.allclose(px, [50, 50])


def test_project_behind_and_bounds():
    cam = make_camera()
    assert project_point([0, 0, -2.0], cam) is None
    assert project_point([50.0, 0, 2.0], cam) is None


def test_project_matches_homogeneous_oracle():
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    cam = make_camera(rotation=q, translation=rng.normal(size=3))
    P = cam.projection
    for _ in range(50):
        x = rng.normal(size=3) * 2 + np.array([0, 0, 4.0])
        hom = P @ np.append(x, 1.0)
        got = project_point(x, cam)
        if hom[2] <= 0:
            assert got is None
            continue
        u, v = hom[0] / hom[2], hom[1] / hom[2]
        if not (0 <= u <= cam.width - 1 and 0 <= v <= cam.height - 1):
            assert got is None
        else:
            assert got is not None
            assert np.allclose(got, [u, v], atol=1e-9)


# -- edge_visibility / score_all -------------------------------------------------

def make_edge_scene():
    cam = make_camera()
    m = np.zeros((101, 101), dtype=np.float32)
    m[:, 50] = 1.0                      # masked column through the principal point
    depth = np.full((101, 101), 4.0, dtype=np.float32)
    return cam, mask_of(m), depth_buf(depth)


def test_edge_visibility_positive_case():
    cam, mask, depth = make_edge_scene()
    p = make_primitive([0.0, 0.0, 4.0])
    assert edge_visibility(p, cam, mask, depth, PipelineConfig()) == 1


def test_edge_visibility_mask_miss():
    cam, mask, depth = make_edge_scene()
    p = make_primitive([0.4, 0.0, 4.0])   # projects to u=60, unmasked
    assert edge_visibility(p, cam, mask, depth, PipelineConfig()) == 0


def test_edge_visibility_occluded():
    cam, mask, depth = make_edge_scene()
    # wall at 4.0 occludes a point at depth 6 projecting to the masked column
    p = make_primitive([0.0, 0.0, 6.0])
    assert edge_visibility(p, cam, mask, depth, PipelineConfig()) == 0


def test_score_all_matches_bruteforce_double_loop():
    rng = np.random.default_rng(4)
    views, masks, depths = [], [], []
    for i in range(6):
        ang = i * 2 * np.pi / 6
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)) + np.eye(3))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        views.append(make_camera(rotation=q, translation=[0.1 * np.cos(ang), 0.1 * np.sin(ang), 4.0], view_id=i))
        masks.append(mask_of((rng.random((101, 101)) < 0.3).astype(np.float32), view_id=i))
        d = 4.0 + rng.normal(scale=0.02, size=(101, 101))
        d[rng.random((101, 101)) < 0.05] = 0.0   # sprinkle sentinels
        depths.append(depth_buf(d))
    prims = [make_primitive(rng.normal(size=3) * 0.8, pid=i * 3) for i in range(10)]
    config = PipelineConfig()
    table = score_all(prims, views, masks, depths, config)
    for p in prims:
        hits = [edge_visibility(p, v, m, d, config) for v, m, d in zip(views, masks, depths)]
        assert table.scores[p.id] == pytest.approx(sum(hits) / len(views), abs=0)
        assert [h for _, h in table.per_view_hits[p.id]] == hits
    # order-independence: permuting views leaves scores unchanged
    perm = [3, 0, 5, 1, 4, 2]
    table2 = score_all(prims, [views[i] for i in perm], [masks[i] for i in perm],
                       [depths[i] for i in perm], config)
    for p in prims:
        assert table2.scores[p.id] == table.scores[p.id]


def test_score_all_alignment_checked():
    cam, mask, depth = make_edge_scene()
    with pytest.raises(ValueError, match="align"):
        score_all([make_primitive([0, 0, 4.0])], [cam], [mask], [], PipelineConfig())


def test_prune_partition_and_strictness():
    prims = [make_primitive([0, 0, float(i + 1)], pid=i) for i in range(6)]
    scores = {0: 0.0, 1: 0.05, 2: 0.1, 3: 0.2, 4: 1.0, 5: 0.0999999}
    table = EdgeScoreTable(scores=scores, per_view_hits={i: [] for i in range(6)}, view_count=10)
    kept, pruned = prune(prims, table, 0.1)
    assert [p.id for p in kept] == [2, 3, 4]       # e_i == tau kept
    assert [p.id for p in pruned] == [0, 1, 5]
    kept0, pruned0 = prune(prims, table, 0.0)
    assert len(pruned0) == 0 and len(kept0) == 6   # tau=0 prunes nothing


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(0, 1))
def test_prune_is_a_partition(scores, tau):
    prims = [make_primitive([0, 0, 1.0], pid=i) for i in range(len(scores))]
    table = EdgeScoreTable(scores={i: s for i, s in enumerate(scores)},
                           per_view_hits={i: [] for i in range(len(scores))},
                           view_count=5)
    kept, pruned = prune(prims, table, tau)
    assert len(kept) + len(pruned) == len(prims)
    assert {p.id for p in kept} | {p.id for p in pruned} == set(range(len(prims)))
    assert all(table.scores[p.id] < tau for p in pruned)
    assert all(table.scores[p.id] >= tau for p in kept)
