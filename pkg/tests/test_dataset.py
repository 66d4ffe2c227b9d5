import numpy as np
import pytest

from fasthand.annotations import (
    AnnotationRecord,
    iter_annotations,
    parse_record,
    read_annotations,
    write_annotations,
)
from fasthand.dataset import (
    Intrinsics,
    MeshFrame,
    augment,
    joints_from_vertices,
    project,
    read_vertex_map,
    record_from_mesh,
    write_vertex_map,
)
from fasthand.errors import AnnotationFormatError, ContractError
from fasthand.geometry import BoundingBox
from oracles import project_homogeneous

K = Intrinsics(100.0, 100.0, 32.0, 32.0, 64, 64)


def synthetic_mesh(rng, n_vertices=400):
    verts = np.column_stack([rng.uniform(-0.1, 0.1, n_vertices), rng.uniform(-0.1, 0.1, n_vertices),
                             rng.uniform(0.5, 1.5, n_vertices)])
    vmap = np.arange(210).reshape(21, 10)
    return MeshFrame(verts, K), vmap


class TestJoints:
    def test_identical_vertices(self):
        mesh = MeshFrame(np.tile([1.0, 2.0, 3.0], (10, 1)), K)
        j = joints_from_vertices(mesh, np.zeros((21, 10), int) + np.arange(10))
        np.testing.assert_array_equal(j, np.tile([1.0, 2.0, 3.0], (21, 1)))

    def test_symmetric_mean(self):
        verts = np.array([[0, 0, 1]] * 5 + [[2, 0, 1]] * 5, float)
        j = joints_from_vertices(MeshFrame(verts, K), np.tile(np.arange(10), (21, 1)))
        np.testing.assert_array_equal(j[0], [1, 0, 1])

    def test_random_vs_mean_oracle(self, rng):
        mesh, _ = synthetic_mesh(rng)
        vmap = rng.integers(0, 400, size=(21, 10))
        j = joints_from_vertices(mesh, vmap)
        for row, idx in zip(j, vmap):
            expect = [sum(mesh.vertices[i][c] for i in idx) / 10 for c in range(3)]
            np.testing.assert_allclose(row, expect, atol=1e-9)

    def test_translation_equivariance(self, rng):
        mesh, vmap = synthetic_mesh(rng)
        t = np.array([0.3, -0.2, 0.5])
        moved = MeshFrame(mesh.vertices + t, K)
        np.testing.assert_allclose(joints_from_vertices(moved, vmap), joints_from_vertices(mesh, vmap) + t, atol=1e-12)

    def test_index_out_of_range(self, rng):
        mesh, vmap = synthetic_mesh(rng, 100)
        with pytest.raises(ContractError, match="joint 10: vertex index 100"):
            joints_from_vertices(mesh, vmap)

    def test_wrong_map_shape(self, rng):
        mesh, _ = synthetic_mesh(rng)
        with pytest.raises(ContractError):
            joints_from_vertices(mesh, np.zeros((21, 9), int))

    def test_vertex_map_file(self, tmp_path):
        vmap = np.arange(210).reshape(21, 10)
        write_vertex_map(vmap, tmp_path / "map.txt")
        np.testing.assert_array_equal(read_vertex_map(tmp_path / "map.txt"), vmap)
        (tmp_path / "bad.txt").write_text("1 2 3\n")
        with pytest.raises(AnnotationFormatError, match="line 1"):
            read_vertex_map(tmp_path / "bad.txt")


class TestProject:
    def test_closed_form(self):
        uv = project([[0.1, 0.2, 1.0]], K)
        np.testing.assert_allclose(uv, [[42.0, 52.0]], atol=1e-12)

    @pytest.mark.parametrize("z", [0.1, 1.0, 7.5])
    def test_optical_axis(self, z):
        np.testing.assert_allclose(project([[0, 0, z]], K), [[32, 32]])

    def test_depth_doubling_halves_offset(self):
        a = project([[0.1, -0.3, 1.0]], K) - 32
        b = project([[0.1, -0.3, 2.0]], K) - 32
        np.testing.assert_allclose(b, a / 2, atol=1e-12)

    def test_behind_camera(self):
        with pytest.raises(ContractError, match="behind"):
            project([[0, 0, 1], [0, 0, -1]], K)

    def test_homogeneous_oracle(self, rng):
        mesh, vmap = synthetic_mesh(rng)
        j = joints_from_vertices(mesh, vmap)
        np.testing.assert_allclose(project(j, K), project_homogeneous(j, K.fx, K.fy, K.cx, K.cy), atol=1e-6)

    def test_mesh_npz_round_trip(self, rng, tmp_path):
        mesh, vmap = synthetic_mesh(rng)
        mesh.save(tmp_path / "m.npz")
        again = MeshFrame.load(tmp_path / "m.npz")
        np.testing.assert_array_equal(again.vertices, mesh.vertices)
        assert again.intrinsics == K
        rec = record_from_mesh(again, vmap)
        assert rec.width == 64 and rec.xy.shape == (21, 2)


def _record(rng, w=200, h=200, path="hand.png"):
    return AnnotationRecord(path, w, h, rng.uniform([60, 60], [w - 60, h - 60], size=(21, 2)))


class TestAugment:
    def test_seeded_determinism(self, rng):
        rec, img = _record(rng), rng.uniform(0, 1, (200, 200, 3)).astype(np.float32)
        a, b = augment(rec, img, seed=11), augment(rec, img, seed=11)
        assert len(a) == len(b) == 10
        for x, y in zip(a, b):
            assert x.image.tobytes() == y.image.tobytes()
            assert x.record == y.record

    def test_degenerate_is_pure_resize(self, rng):
        rec, img = _record(rng), rng.uniform(0, 1, (200, 200, 3)).astype(np.float32)
        (v,) = augment(rec, img, seed=0, count=1, scale_range=(1.0, 1.0), jitter=0.0)
        ratio = 256 / 200
        # pixel-centre coordinates: the ratio applies to pixel edges
        np.testing.assert_allclose(v.record.xy, (rec.xy + 0.5) * ratio - 0.5, atol=1e-9)
        assert v.image.shape == (256, 256, 3)

    def test_transform_round_trip(self, rng):
        rec, img = _record(rng), rng.uniform(0, 1, (200, 200, 3)).astype(np.float32)
        for v in augment(rec, img, seed=5):
            np.testing.assert_allclose(v.transform.to_roi(rec.xy), v.record.xy, atol=1e-6)
            np.testing.assert_allclose(v.transform.to_image(v.record.xy), rec.xy, atol=1e-6)
            assert 0.8 <= v.scale <= 1.2
            side = v.transform.scale * 256
            assert abs(v.shift[0]) <= 0.1 * side and abs(v.shift[1]) <= 0.1 * side

    def test_marker_follows_landmark(self, rng):
        img = np.zeros((200, 200, 3), np.float32)
        xy = np.tile([100.0, 100.0], (21, 1))
        xy[0] = (80, 120)
        img[115:126, 75:86] = 1.0  # 11x11 block centred on landmark 0
        rec = AnnotationRecord("m.png", 200, 200, xy)
        for v in augment(rec, img, seed=2, count=5):
            ys, xs = np.nonzero(v.image[..., 0] > 0.5)
            centre = np.array([xs.mean(), ys.mean()])
            assert np.abs(centre - v.record.xy[0]).max() < 1.0

    def test_variant_paths(self, rng):
        vs = augment(_record(rng), np.zeros((200, 200, 3)), seed=1, count=3)
        assert [v.record.image_path for v in vs] == ["hand_aug00.png", "hand_aug01.png", "hand_aug02.png"]

    def test_landmarks_outside_image_rejected(self, rng):
        rec = AnnotationRecord("x.png", 50, 50, np.full((21, 2), 60.0))
        with pytest.raises(ContractError):
            augment(rec, np.zeros((50, 50, 3)), seed=0)

    def test_unsatisfiable_variants_skipped(self, rng, caplog):
        # landmarks near a corner and zoom so strong every crop loses most of them
        xy = np.tile([1.0, 1.0], (21, 1))
        rec = AnnotationRecord("c.png", 200, 200, xy)
        vs = augment(rec, np.zeros((200, 200, 3)), seed=0, count=2, scale_range=(4.0, 4.0), jitter=0.0, max_retries=2)
        assert vs == [] and "dropped" in caplog.text


class TestAnnotationFile:
    def test_round_trip_all_layouts(self, rng, tmp_path):
        recs = [
            _record(rng, path="a.png"),
            AnnotationRecord("b.png", 640, 480, rng.uniform(0, 400, (21, 2)), visible=rng.integers(0, 2, 21)),
            AnnotationRecord("c.ppm", 32, 16, rng.uniform(0, 10, (21, 2)), box=BoundingBox(0.5, 1.5, 9.25, 7.0)),
            AnnotationRecord("d.png", 3, 4, rng.normal(size=(21, 2)), visible=np.ones(21), box=BoundingBox(0, 0, 1, 1)),
        ]
        write_annotations(recs, tmp_path / "a.txt")
        assert read_annotations(tmp_path / "a.txt") == recs

    def test_truncated_last_line(self, rng, tmp_path):
        write_annotations([_record(rng), _record(rng)], tmp_path / "a.txt")
        text = (tmp_path / "a.txt").read_text()
        (tmp_path / "a.txt").write_text(text[: text.rstrip().rfind(" ")])
        with pytest.raises(AnnotationFormatError, match="line 2"):
            read_annotations(tmp_path / "a.txt")

    def test_bad_visibility(self):
        line = "a.png 10 10 " + " ".join(["1"] * 42) + " " + " ".join(["2"] * 21)
        with pytest.raises(AnnotationFormatError):
            parse_record(line, 1)

    def test_streams_47k_record_file(self, tmp_path):
        n = 47125
        coords = " ".join(f"{i}.5" for i in range(42))
        with open(tmp_path / "big.txt", "w") as f:
            for i in range(n):
                f.write(f"frames/{i:06d}.png 256 256 {coords}\n")
        it = iter_annotations(tmp_path / "big.txt")
        first = next(it)
        assert first.image_path == "frames/000000.png"
        assert 1 + sum(1 for _ in it) == n
