import struct

import numpy as np
import pytest

from penet.data import (AugmentConfig, PointCloud, SYNTH_CLASSES, augment,
                        farthest_point_sample, load_cloud_text,
                        load_idx_images, load_manifest, mnist_to_pointcloud,
                        sample_seed, save_cloud_text, synth_shapes,
                        zero_mean_normalize)
from penet.errors import (DataError, EmptyCloudError, FormatError,
                          SamplingError)

from oracles import naive_fps


def write_idx_pair(tmp_path, images, labels):
    images = np.asarray(images, dtype=np.uint8)
    img_path = tmp_path / "images.idx"
    lbl_path = tmp_path / "labels.idx"
    with open(img_path, "wb") as f:
        f.write(struct.pack(">iiii", 0x00000803, len(images), 28, 28))
        f.write(images.tobytes())
    with open(lbl_path, "wb") as f:
        f.write(struct.pack(">ii", 0x00000801, len(labels)))
        f.write(bytes(labels))
    return img_path, lbl_path


# -- IDX --------------------------------------------------------------------

def test_idx_single_image_roundtrip(tmp_path):
    img = np.zeros((28, 28), dtype=np.uint8)
    img[3, 4] = 200
    img[27, 0] = 13
    paths = write_idx_pair(tmp_path, img[None], [7])
    loaded = load_idx_images(*paths)
    assert len(loaded) == 1
    got, label = loaded[0]
    assert label == 7
    np.testing.assert_array_equal(got, img)


def test_idx_count_mismatch(tmp_path):
    img = np.zeros((1, 28, 28), dtype=np.uint8)
    paths = write_idx_pair(tmp_path, img, [1, 2])
    with pytest.raises(FormatError, match="count"):
        load_idx_images(*paths)


def test_idx_bad_magic(tmp_path):
    bad = tmp_path / "bad.idx"
    bad.write_bytes(struct.pack(">iiii", 0xDEAD, 1, 28, 28) + b"\x00" * 784)
    _, lbl = write_idx_pair(tmp_path, np.zeros((1, 28, 28), dtype=np.uint8), [0])
    with pytest.raises(FormatError, match="magic"):
        load_idx_images(bad, lbl)


def test_idx_truncated_reports_offset(tmp_path):
    img_path, lbl_path = write_idx_pair(
        tmp_path, np.zeros((2, 28, 28), dtype=np.uint8), [0, 1])
    img_path.write_bytes(img_path.read_bytes()[:100])
    with pytest.raises(FormatError, match="byte"):
        load_idx_images(img_path, lbl_path)


# -- MNIST conversion ---------------------------------------------------------

def test_mnist_single_pixel_forced_xy():
    img = np.zeros((28, 28), dtype=np.uint8)
    img[10, 20] = 255
    cloud = mnist_to_pointcloud(img, n_points=5, seed=0)
    assert len(cloud) == 5
    assert np.allclose(cloud.points[:, 0], (20 - 13.5) / 13.5)
    assert np.allclose(cloud.points[:, 1], (13.5 - 10) / 13.5)
    assert len(np.unique(cloud.points[:, 2])) == 5


def test_mnist_coordinate_ranges():
    rng = np.random.default_rng(0)
    img = (rng.uniform(size=(28, 28)) > 0.5).astype(np.uint8) * 100
    cloud = mnist_to_pointcloud(img, n_points=500, seed=1)
    assert (np.abs(cloud.points[:, :2]) <= 1.0).all()
    assert (np.abs(cloud.points[:, 2]) < 0.05).all()
    # x, y land on the pixel lattice map (float32 storage)
    lattice = ((np.arange(28) - 13.5) / 13.5).astype(np.float32)
    gaps = np.abs(cloud.points[:, :2, None] - lattice[None, None, :]).min(axis=2)
    assert (gaps < 1e-6).all()


def test_mnist_default_5000_points():
    img = np.zeros((28, 28), dtype=np.uint8)
    img[5:10, 5:10] = 50
    assert len(mnist_to_pointcloud(img)) == 5000


def test_mnist_all_zero_image():
    with pytest.raises(EmptyCloudError):
        mnist_to_pointcloud(np.zeros((28, 28), dtype=np.uint8))


# -- FPS ----------------------------------------------------------------------

def test_fps_identity_when_n_equals_size():
    cloud = PointCloud(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.0]]))
    out = farthest_point_sample(cloud, 3)
    assert set(map(tuple, out.points.tolist())) == \
        set(map(tuple, cloud.points.tolist()))


def test_fps_picks_farthest_first():
    cloud = PointCloud(np.array([[0, 0, 0], [10, 0, 0], [1, 0, 0.0]]))
    out = farthest_point_sample(cloud, 2, start=0)
    np.testing.assert_array_equal(out.points, [[0, 0, 0], [10, 0, 0]])


def test_fps_rejects_oversampling():
    cloud = PointCloud(np.zeros((3, 3)))
    with pytest.raises(SamplingError):
        farthest_point_sample(cloud, 4)


def test_fps_carries_normals_and_labels():
    pts = np.array([[0, 0, 0], [5, 0, 0], [0, 5, 0.0]])
    nrm = np.tile([0.0, 0.0, 1.0], (3, 1))
    cloud = PointCloud(pts, normals=nrm, part_labels=[3, 1, 2], class_label=9)
    out = farthest_point_sample(cloud, 2)
    assert out.class_label == 9
    assert out.normals.shape == (2, 3)
    assert out.part_labels.tolist() == [3, 1]


@pytest.mark.parametrize("seed", range(40))
def test_fps_matches_exhaustive_oracle(seed):
    rng = np.random.default_rng(seed)
    n_total = int(rng.integers(2, 33))
    n_keep = int(rng.integers(1, n_total + 1))
    pts = rng.normal(size=(n_total, 3)).astype(np.float32)
    cloud = PointCloud(pts)
    out = farthest_point_sample(cloud, n_keep)
    expected = naive_fps(pts.astype(np.float64), n_keep)
    np.testing.assert_array_equal(out.points, pts[expected])


# -- normalization / augmentation ----------------------------------------------

def test_zero_mean_normalize_hand_example():
    cloud = PointCloud(np.array([[0, 0, 0], [2, 0, 0.0]]))
    out = zero_mean_normalize(cloud)
    np.testing.assert_allclose(out.points, [[-1, 0, 0], [1, 0, 0]], atol=1e-6)


def test_zero_mean_normalize_idempotent():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(20, 3))
    pts -= pts.mean(axis=0)
    pts /= np.linalg.norm(pts, axis=1).max()
    out = zero_mean_normalize(PointCloud(pts.astype(np.float32)))
    np.testing.assert_allclose(out.points, pts, atol=1e-6)


def test_zero_mean_normalize_centroid_zero():
    rng = np.random.default_rng(2)
    out = zero_mean_normalize(PointCloud(rng.normal(size=(50, 3)) * 7 + 3))
    np.testing.assert_allclose(out.points.mean(axis=0), 0, atol=1e-6)
    assert np.linalg.norm(out.points, axis=1).max() == pytest.approx(1.0,
                                                                     abs=1e-6)


def test_zero_mean_normalize_degenerate_point():
    cloud = PointCloud(np.tile([3.0, 3.0, 3.0], (4, 1)))
    out = zero_mean_normalize(cloud)
    assert not out.points.any()


def test_augment_identity_config():
    rng = np.random.default_rng(3)
    cloud = PointCloud(rng.normal(size=(10, 3)).astype(np.float32))
    cfg = AugmentConfig(jitter_sigma=0.0, jitter_clip=0.0, shift_range=0.0,
                        scale_range=(1.0 - 1e-12, 1.0), seed=0)
    out = augment(cloud, cfg)
    np.testing.assert_allclose(out.points, cloud.points, atol=1e-6)


def test_augment_jitter_clipped():
    cloud = PointCloud(np.zeros((2000, 3)) + 1.0)
    cfg = AugmentConfig(jitter_sigma=0.5, jitter_clip=0.6, shift_range=0.0,
                        scale_range=(1.0 - 1e-12, 1.0), seed=4)
    out = augment(cloud, cfg)
    assert (np.abs(out.points - 1.0) <= 0.6 + 1e-6).all()


def test_augment_deterministic():
    rng = np.random.default_rng(5)
    cloud = PointCloud(rng.normal(size=(30, 3)).astype(np.float32),
                       part_labels=rng.integers(0, 4, size=30))
    cfg = AugmentConfig(seed=99)
    a = augment(cloud, cfg)
    b = augment(cloud, cfg)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.part_labels, cloud.part_labels)


def test_sample_seed_independent_of_call_order():
    s1 = sample_seed(7, 2, 5)
    s2 = sample_seed(7, 2, 6)
    assert s1 != s2
    assert s1 == sample_seed(7, 2, 5)


def test_bad_augment_config():
    with pytest.raises(DataError):
        AugmentConfig(jitter_sigma=0.1, jitter_clip=0.05)
    with pytest.raises(DataError):
        AugmentConfig(scale_range=(1.5, 0.5))


# -- text format ----------------------------------------------------------------

def test_load_cloud_text_plain(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("0 0 0\n1 0 0\n")
    cloud = load_cloud_text(path)
    assert len(cloud) == 2
    assert cloud.normals is None


def test_load_cloud_text_with_normals(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("0 0 0 0 0 1\n1 0 0 1 0 0\n")
    cloud = load_cloud_text(path)
    assert cloud.normals is not None
    assert cloud.din == 6


def test_load_cloud_text_ragged(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("0 0 0\n1 0\n")
    with pytest.raises(FormatError, match=":2"):
        load_cloud_text(path)


def test_load_cloud_text_non_numeric(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("0 0 zero\n")
    with pytest.raises(FormatError, match=":1"):
        load_cloud_text(path)


def test_seg_sidecar_roundtrip(tmp_path):
    cloud = PointCloud(np.random.default_rng(0).normal(size=(5, 3)),
                       part_labels=[0, 1, 2, 1, 0])
    save_cloud_text(cloud, tmp_path / "c.txt")
    loaded = load_cloud_text(tmp_path / "c.txt")
    assert loaded.part_labels.tolist() == [0, 1, 2, 1, 0]


def test_seg_sidecar_wrong_count(tmp_path):
    (tmp_path / "c.txt").write_text("0 0 0\n1 1 1\n")
    (tmp_path / "c.txt.seg").write_text("1\n")
    with pytest.raises(FormatError, match="labels"):
        load_cloud_text(tmp_path / "c.txt")


def test_manifest_missing_file(tmp_path):
    m = tmp_path / "train.manifest"
    m.write_text("#classes: a,b\nmissing.txt\t0\n")
    with pytest.raises(FormatError, match="missing"):
        load_manifest(m)


def test_manifest_bad_class_id(tmp_path):
    (tmp_path / "c.txt").write_text("0 0 0\n")
    m = tmp_path / "train.manifest"
    m.write_text("c.txt\tnotanumber\n")
    with pytest.raises(FormatError, match="class id"):
        load_manifest(m)


# -- synthetic shapes --------------------------------------------------------------

def test_synth_sphere_and_normals(tmp_path):
    manifest = synth_shapes(tmp_path, n_per_class=2, n_points=64, seed=0)
    assert len(manifest) == 8
    assert manifest.class_names == SYNTH_CLASSES
    sphere = load_cloud_text(tmp_path / manifest.entries[0][0])
    np.testing.assert_allclose(np.linalg.norm(sphere.points, axis=1), 1.0,
                               atol=1e-5)
    np.testing.assert_allclose(np.linalg.norm(sphere.normals, axis=1), 1.0,
                               atol=1e-3)


def test_synth_deterministic(tmp_path):
    m1 = synth_shapes(tmp_path / "a", n_per_class=2, n_points=32, seed=5)
    m2 = synth_shapes(tmp_path / "b", n_per_class=2, n_points=32, seed=5)
    for (rel1, _, _), (rel2, _, _) in zip(m1.entries, m2.entries):
        assert (m1.root / rel1).read_bytes() == (m2.root / rel2).read_bytes()


def test_pointcloud_invariants():
    with pytest.raises(EmptyCloudError):
        PointCloud(np.zeros((0, 3)))
    with pytest.raises(DataError):
        PointCloud(np.zeros((2, 3)), normals=np.zeros((2, 3)))  # not unit
    with pytest.raises(DataError):
        PointCloud(np.zeros((2, 3)), part_labels=[1])
