"""Dataset ingestion, farthest point sampling and training-time augmentation.

Point clouds live in a plain text format (one point per line, 3 or 6
columns) with an optional ``.seg`` sidecar of per-point part labels, tied
together by a manifest file. MNIST comes in via the standard IDX binaries
and is converted to 3D clouds by sampling non-zero pixels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (DataError, EmptyCloudError, FormatError, SamplingError)

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801


@dataclass
class PointCloud:
    points: np.ndarray                    # (N, 3) float32
    normals: np.ndarray | None = None     # (N, 3) unit vectors
    part_labels: np.ndarray | None = None  # (N,) int
    class_label: int | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float32)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise DataError(f"points must be (N, 3), got {self.points.shape}")
        if len(self.points) == 0:
            raise EmptyCloudError("point cloud must contain at least one point")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float32)
            if self.normals.shape != self.points.shape:
                raise DataError("normals must match points shape")
            lengths = np.linalg.norm(self.normals, axis=1)
            if np.any(np.abs(lengths - 1.0) > 1e-3):
                raise DataError("normals must be unit length (within 1e-3)")
        if self.part_labels is not None:
            self.part_labels = np.asarray(self.part_labels, dtype=np.int64)
            if self.part_labels.shape != (len(self.points),):
                raise DataError("part labels must have one entry per point")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def din(self) -> int:
        return 6 if self.normals is not None else 3

    def features(self) -> np.ndarray:
        """(N, din) network input: xyz, or xyz + normal."""
        if self.normals is None:
            return self.points
        return np.concatenate([self.points, self.normals], axis=1)


@dataclass
class AugmentConfig:
    jitter_sigma: float = 0.01
    jitter_clip: float = 0.05
    shift_range: float = 0.1
    scale_range: tuple[float, float] = (0.8, 1.25)
    seed: int = 0

    def __post_init__(self):
        if self.jitter_sigma < 0 or self.jitter_clip < self.jitter_sigma:
            raise DataError("need 0 <= jitter_sigma <= jitter_clip")
        lo, hi = self.scale_range
        if not (0 < lo < hi):
            raise DataError("scale range must satisfy 0 < low < high")


@dataclass
class DatasetManifest:
    root: Path
    entries: list[tuple[str, int, str | None]]  # (cloud path, class id, seg path)
    class_names: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)


# --------------------------------------------------------------------------
# IDX / MNIST


def _read_exact(f, n: int, path, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(
            f"{path}: truncated while reading {what} at byte {f.tell() - len(buf)}")
    return buf


def load_idx_images(images_path, labels_path) -> list[tuple[np.ndarray, int]]:
    """Parse the big-endian IDX pair into (28x28 uint8 grid, label) tuples."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    with open(images_path, "rb") as f:
        magic, count, rows, cols = struct.unpack(
            ">iiii", _read_exact(f, 16, images_path, "header"))
        if magic != IDX_MAGIC_IMAGES:
            raise FormatError(
                f"{images_path}: bad magic 0x{magic:08x} at byte 0, "
                f"expected 0x{IDX_MAGIC_IMAGES:08x}")
        raw = _read_exact(f, count * rows * cols, images_path, "pixel data")
        images = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)
    with open(labels_path, "rb") as f:
        magic, lcount = struct.unpack(
            ">ii", _read_exact(f, 8, labels_path, "header"))
        if magic != IDX_MAGIC_LABELS:
            raise FormatError(
                f"{labels_path}: bad magic 0x{magic:08x} at byte 0, "
                f"expected 0x{IDX_MAGIC_LABELS:08x}")
        labels = np.frombuffer(
            _read_exact(f, lcount, labels_path, "label data"), dtype=np.uint8)
    if count != lcount:
        raise FormatError(
            f"image count {count} != label count {lcount} "
            f"({images_path} vs {labels_path})")
    return [(images[i], int(labels[i])) for i in range(count)]


def mnist_to_pointcloud(image: np.ndarray, n_points: int = 5000,
                        seed: int = 0) -> PointCloud:
    """Sample non-zero pixels (with replacement) into a thin 3D slab.

    Pixel (r, c) maps to x = (c - 13.5)/13.5, y = (13.5 - r)/13.5 so the
    digit spans [-1, 1]^2; z is a small uniform deviate in (-0.05, 0.05)
    to give the flat image a third dimension.
    """
    rr, cc = np.nonzero(image)
    if len(rr) == 0:
        raise EmptyCloudError("image has no non-zero pixels")
    rng = np.random.default_rng(seed)
    pick = rng.integers(0, len(rr), size=n_points)
    x = (cc[pick] - 13.5) / 13.5
    y = (13.5 - rr[pick]) / 13.5
    z = rng.uniform(-0.05, 0.05, size=n_points)
    return PointCloud(np.stack([x, y, z], axis=1))


# --------------------------------------------------------------------------
# Sampling and normalization


def farthest_point_sample(cloud: PointCloud, n: int, start: int = 0
                          ) -> PointCloud:
    """Greedy FPS: repeatedly take the point farthest from the chosen set.

    Ties go to the lowest index (argmax convention), so the result is
    deterministic for a fixed start index.
    """
    total = len(cloud)
    if not 1 <= n <= total:
        raise SamplingError(f"cannot sample {n} points from a cloud of {total}")
    pts = cloud.points
    chosen = np.empty(n, dtype=np.int64)
    chosen[0] = start
    min_d2 = np.sum((pts - pts[start]) ** 2, axis=1)
    for i in range(1, n):
        idx = int(np.argmax(min_d2))
        chosen[i] = idx
        d2 = np.sum((pts - pts[idx]) ** 2, axis=1)
        np.minimum(min_d2, d2, out=min_d2)
    return PointCloud(
        pts[chosen],
        normals=None if cloud.normals is None else cloud.normals[chosen],
        part_labels=None if cloud.part_labels is None else cloud.part_labels[chosen],
        class_label=cloud.class_label)


def zero_mean_normalize(cloud: PointCloud) -> PointCloud:
    """Center on the centroid and scale the farthest point to distance 1."""
    pts = cloud.points - cloud.points.mean(axis=0)
    radius = float(np.linalg.norm(pts, axis=1).max())
    if radius > 0:
        pts = pts / radius
    return PointCloud(pts, normals=cloud.normals,
                      part_labels=cloud.part_labels,
                      class_label=cloud.class_label)


def augment(cloud: PointCloud, cfg: AugmentConfig) -> PointCloud:
    """Per-point clipped Gaussian jitter, one global shift and one global
    scale. Coordinates only; normals and labels ride along untouched."""
    rng = np.random.default_rng(cfg.seed)
    n = len(cloud)
    jitter = np.clip(rng.normal(0.0, cfg.jitter_sigma, size=(n, 3))
                     if cfg.jitter_sigma > 0 else np.zeros((n, 3)),
                     -cfg.jitter_clip, cfg.jitter_clip)
    shift = rng.uniform(-cfg.shift_range, cfg.shift_range, size=3)
    scale = rng.uniform(cfg.scale_range[0], cfg.scale_range[1])
    pts = (cloud.points + jitter) * scale + shift
    return PointCloud(pts.astype(np.float32), normals=cloud.normals,
                      part_labels=cloud.part_labels,
                      class_label=cloud.class_label)


def sample_seed(global_seed: int, epoch: int, sample_index: int) -> int:
    """Per-sample augmentation seed, independent of worker layout."""
    ss = np.random.SeedSequence(entropy=global_seed,
                                spawn_key=(epoch, sample_index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# --------------------------------------------------------------------------
# Text cloud format


def load_cloud_text(path) -> PointCloud:
    """One point per line: "x y z" or "x y z nx ny nz". A sidecar
    ``<path>.seg`` with one integer per line supplies part labels."""
    path = Path(path)
    rows = []
    ncols = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            toks = line.split()
            if not toks:
                continue
            if ncols is None:
                ncols = len(toks)
                if ncols not in (3, 6):
                    raise FormatError(
                        f"{path}:{lineno}: expected 3 or 6 columns, got {ncols}")
            elif len(toks) != ncols:
                raise FormatError(
                    f"{path}:{lineno}: ragged row, expected {ncols} columns, "
                    f"got {len(toks)}")
            try:
                rows.append([float(t) for t in toks])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric token: {exc}")
    if not rows:
        raise EmptyCloudError(f"{path}: no points")
    arr = np.asarray(rows, dtype=np.float32)
    normals = arr[:, 3:6] if ncols == 6 else None

    part_labels = None
    seg_path = path.with_suffix(path.suffix + ".seg")
    if seg_path.exists():
        labels = [int(t) for t in seg_path.read_text(encoding="utf-8").split()]
        if len(labels) != len(arr):
            raise FormatError(
                f"{seg_path}: {len(labels)} labels for {len(arr)} points")
        part_labels = np.asarray(labels, dtype=np.int64)
    return PointCloud(arr[:, :3], normals=normals, part_labels=part_labels)


def save_cloud_text(cloud: PointCloud, path):
    path = Path(path)
    cols = cloud.features()
    lines = [" ".join(f"{v:.6f}" for v in row) for row in cols]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    if cloud.part_labels is not None:
        seg = path.with_suffix(path.suffix + ".seg")
        seg.write_text("\n".join(str(int(l)) for l in cloud.part_labels) + "\n",
                       encoding="utf-8")


def load_manifest(path) -> DatasetManifest:
    """Manifest: "#classes: a,b,c" header then "<cloud>\\t<class>[\\t<seg>]"."""
    path = Path(path)
    class_names: list[str] = []
    entries: list[tuple[str, int, str | None]] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#classes:"):
                class_names = [c.strip() for c in
                               line[len("#classes:"):].split(",") if c.strip()]
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise FormatError(f"{path}:{lineno}: expected 2 or 3 fields")
            try:
                class_id = int(parts[1])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: class id not an integer")
            seg = parts[2] if len(parts) == 3 else None
            cloud_path = path.parent / parts[0]
            if not cloud_path.exists():
                raise FormatError(f"{path}:{lineno}: missing file {cloud_path}")
            if seg is not None and not (path.parent / seg).exists():
                raise FormatError(f"{path}:{lineno}: missing file {seg}")
            entries.append((parts[0], class_id, seg))
    return DatasetManifest(root=path.parent, entries=entries,
                           class_names=class_names)


def load_dataset(manifest: DatasetManifest) -> list[PointCloud]:
    clouds = []
    for rel, class_id, _seg in manifest.entries:
        cloud = load_cloud_text(manifest.root / rel)
        cloud.class_label = class_id
        clouds.append(cloud)
    return clouds


# --------------------------------------------------------------------------
# Synthetic shapes

SYNTH_CLASSES = ["sphere", "cube", "cylinder", "disc"]


def _sphere(rng, n):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v, v.copy()


def _cube(rng, n):
    # side 2 centered at origin; faces picked uniformly (equal areas)
    face = rng.integers(0, 6, size=n)
    uv = rng.uniform(-1, 1, size=(n, 2))
    pts = np.empty((n, 3))
    nrm = np.zeros((n, 3))
    axis = face // 2
    sign = np.where(face % 2 == 0, 1.0, -1.0)
    for a in range(3):
        sel = axis == a
        others = [d for d in range(3) if d != a]
        pts[sel, a] = sign[sel]
        pts[sel, others[0]] = uv[sel, 0]
        pts[sel, others[1]] = uv[sel, 1]
        nrm[sel, a] = sign[sel]
    return pts, nrm


def _cylinder(rng, n):
    # lateral surface only: radius 1, z in [-1, 1]
    theta = rng.uniform(0, 2 * np.pi, size=n)
    z = rng.uniform(-1, 1, size=n)
    pts = np.stack([np.cos(theta), np.sin(theta), z], axis=1)
    nrm = np.stack([np.cos(theta), np.sin(theta), np.zeros(n)], axis=1)
    return pts, nrm


def _disc(rng, n):
    r = np.sqrt(rng.uniform(0, 1, size=n))
    theta = rng.uniform(0, 2 * np.pi, size=n)
    pts = np.stack([r * np.cos(theta), r * np.sin(theta), np.zeros(n)], axis=1)
    nrm = np.tile(np.array([0.0, 0.0, 1.0]), (n, 1))
    return pts, nrm


_SYNTH_GEN = {"sphere": _sphere, "cube": _cube, "cylinder": _cylinder,
              "disc": _disc}


def synth_shapes(out_dir, n_per_class: int, n_points: int, seed: int,
                 split: str = "train") -> DatasetManifest:
    """Write a 4-class analytic dataset (with normals) in the text format
    and return its manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["#classes: " + ",".join(SYNTH_CLASSES)]
    for class_id, name in enumerate(SYNTH_CLASSES):
        for i in range(n_per_class):
            rng = np.random.default_rng(
                sample_seed(seed, class_id, i))
            pts, nrm = _SYNTH_GEN[name](rng, n_points)
            rel = f"{split}_{name}_{i:04d}.txt"
            save_cloud_text(
                PointCloud(pts.astype(np.float32), normals=nrm.astype(np.float32)),
                out_dir / rel)
            lines.append(f"{rel}\t{class_id}")
    manifest_path = out_dir / f"{split}.manifest"
    manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return load_manifest(manifest_path)
