import math

import numpy as np
import pytest

from mshdg.mesh import (BOUNDARY, INTERIOR, SKELETON, NestingError, Rect,
                        build_structured, face_sets, validate, write_vtk)


def test_counts_and_scales_2_2_4():
    mesh = build_structured(n_sub=2, n_seg=2, n_fine=4)
    assert len(mesh.subdomains) == 4
    assert mesh.n_elements == 128
    L, H, h = mesh.scales
    assert L == pytest.approx(0.5)
    assert H == pytest.approx(0.25)
    assert h == pytest.approx(math.sqrt(2) / 8)


def test_degenerate_single_subdomain():
    mesh = build_structured(n_sub=1, n_seg=1, n_fine=1)
    assert len(mesh.subdomains) == 1
    assert mesh.n_elements == 2
    assert mesh.skeleton_segments == []
    per_sub, segs = face_sets(mesh)
    assert segs == []
    assert len(per_sub[0]["boundary"]) == 4
    assert len(per_sub[0]["interior"]) == 1


def test_nesting_error():
    with pytest.raises(NestingError):
        build_structured(n_sub=2, n_seg=2, n_fine=3)


def test_zero_counts_rejected():
    from mshdg.mesh import MeshError

    with pytest.raises(MeshError):
        build_structured(n_sub=0, n_seg=1, n_fine=2)
    with pytest.raises(MeshError):
        build_structured(n_sub=1, n_seg=1, n_fine=0)


def test_skeleton_counts():
    mesh = build_structured(n_sub=2, n_seg=2, n_fine=4)
    assert len(mesh.skeleton_segments) == 8  # 4 interfaces x 2 segments
    for seg in mesh.skeleton_segments:
        assert seg.length == pytest.approx(0.25)

    mesh = build_structured(n_sub=2, n_seg=1, n_fine=2)
    assert len(mesh.skeleton_segments) == 4

    mesh = build_structured(n_sub=3, n_seg=2, n_fine=4)
    assert len(mesh.skeleton_segments) == 2 * 3 * 2 * 2  # 2 n (n-1) n_seg


def test_triangle_count_formula():
    for n_sub, n_fine in [(1, 3), (2, 4), (3, 2)]:
        mesh = build_structured(n_sub=n_sub, n_seg=1, n_fine=n_fine)
        assert mesh.n_elements == 2 * n_sub ** 2 * n_fine ** 2


def test_face_classes_partition():
    mesh = build_structured(n_sub=2, n_seg=2, n_fine=4)
    per_sub, _ = face_sets(mesh)
    for sub, sets in zip(mesh.subdomains, per_sub):
        total = len(sets["interior"]) + len(sets["skeleton"]) + len(sets["boundary"])
        assert total == len(sub.face_nodes)
        # every subdomain-boundary face is in exactly one segment or on the
        # outer boundary
        for fid in sets["skeleton"]:
            assert sub.face_segment[fid] >= 0
        for fid in sets["boundary"]:
            assert sub.face_segment[fid] == -1


def test_area_partition():
    mesh = build_structured(Rect(0.0, 0.0, 2.0, 1.0), n_sub=2, n_seg=2, n_fine=4)
    area = sum(float(s.areas.sum()) for s in mesh.subdomains)
    assert area == pytest.approx(2.0, rel=1e-13)


def test_validate_clean_mesh():
    mesh = build_structured(n_sub=2, n_seg=2, n_fine=4)
    assert validate(mesh) == []


def test_validate_flags_flipped_triangle():
    mesh = build_structured(n_sub=2, n_seg=1, n_fine=2)
    tri = mesh.subdomains[0].triangles
    tri[3] = tri[3][::-1]  # clockwise now
    violations = validate(mesh)
    assert any("negative area" in v for v in violations)


def test_validate_flags_corner_element_with_two_skeleton_faces():
    # n_fine=1 forces corner triangles to touch two interior interfaces
    mesh = build_structured(n_sub=2, n_seg=1, n_fine=1)
    violations = validate(mesh)
    assert any("multiple skeleton faces" in v for v in violations)


def test_per_subdomain_fine_grids():
    mesh = build_structured(n_sub=2, n_seg=1, n_fine=[2, 4, 6, 8])
    assert [s.n_fine for s in mesh.subdomains] == [2, 4, 6, 8]
    assert validate(mesh) == []
    # nonmatching fine grids across each interface
    assert mesh.subdomains[0].n_fine != mesh.subdomains[1].n_fine


def test_normals_and_canonical_faces():
    mesh = build_structured(n_sub=1, n_seg=1, n_fine=2)
    sub = mesh.subdomains[0]
    # canonical endpoints are lexicographically ordered
    a = sub.vertices[sub.face_nodes[:, 0]]
    b = sub.vertices[sub.face_nodes[:, 1]]
    lex = (b[:, 0] > a[:, 0] + 1e-14) | (np.isclose(a[:, 0], b[:, 0]) & (b[:, 1] > a[:, 1]))
    assert lex.all()
    # outward normals have unit length and point away from the centroid
    nrm = sub.outward_normals()
    pts = sub.vertices[sub.triangles]
    for e in range(sub.n_elements):
        for lf in range(3):
            mid = 0.5 * (pts[e, lf] + pts[e, (lf + 1) % 3])
            outward = mid - sub.centroids[e]
            assert np.dot(nrm[e, lf], outward) > 0
            assert np.linalg.norm(nrm[e, lf]) == pytest.approx(1.0)


def test_locate_and_locate_batch():
    mesh = build_structured(n_sub=2, n_seg=2, n_fine=4)
    rng = np.random.default_rng(0)
    pts = rng.random((200, 2))
    sids, eids = mesh.locate_batch(pts)
    for p, sid, eid in zip(pts, sids, eids):
        s2, e2 = mesh.locate(p)
        assert (sid, eid) == (s2, e2)
        # the point is inside the reported triangle (barycentric check)
        tri = mesh.subdomains[sid].vertices[mesh.subdomains[sid].triangles[eid]]
        T = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
        lam = np.linalg.solve(T, p - tri[0])
        assert lam.min() > -1e-9 and lam.sum() < 1 + 1e-9


def test_vtk_export(tmp_path):
    mesh = build_structured(n_sub=2, n_seg=1, n_fine=2)
    path = tmp_path / "mesh.vtk"
    write_vtk(mesh, str(path))
    text = path.read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    assert "POLYGONS 32" in text
