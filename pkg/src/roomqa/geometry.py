"""3D primitives shared by the detector, metrics, and data pipeline.

Axis-aligned boxes with volume IoU, rigid training-time augmentation
(small rotations about the scene centroid plus translation), farthest point
sampling, and ball query grouping. All operations are pure and reentrant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Ordered manifest of optional per-point feature channels and their widths.
CHANNEL_WIDTHS = {"height": 1, "rgb": 3, "normal": 3, "multiview": 128}
CHANNEL_ORDER = ("height", "rgb", "normal", "multiview")


class InvalidBoxError(ValueError):
    pass


@dataclass
class Box3D:
    """Axis-aligned box given by center and full extents (meters)."""

    center: np.ndarray
    size: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        self.size = np.asarray(self.size, dtype=np.float64).reshape(3)
        if not np.all(self.size > 0):
            raise InvalidBoxError(f"box extents must be positive, got {self.size}")

    @property
    def min_corner(self) -> np.ndarray:
        return self.center - self.size / 2.0

    @property
    def max_corner(self) -> np.ndarray:
        return self.center + self.size / 2.0

    @property
    def volume(self) -> float:
        return float(np.prod(self.size))

    def contains(self, points: np.ndarray, eps: float = 0.0) -> np.ndarray:
        """Boolean mask of points inside the closed box (optionally padded by eps)."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        lo = self.min_corner - eps
        hi = self.max_corner + eps
        return np.all((points >= lo) & (points <= hi), axis=1)

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "size": self.size.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Box3D":
        return cls(center=np.array(d["center"]), size=np.array(d["size"]))


@dataclass
class PointCloud:
    """Point coordinates plus optional per-point feature channels.

    ``features`` concatenates the channels listed in ``channel_manifest`` in
    order; its width must equal the sum of the manifest channel widths.
    Arrays are float32, matching the on-disk format.
    """

    coords: np.ndarray
    features: np.ndarray
    channel_manifest: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float32).reshape(-1, 3)
        if self.coords.shape[0] < 1:
            raise ValueError("point cloud must contain at least one point")
        expected = sum(CHANNEL_WIDTHS[c] for c in self.channel_manifest)
        self.features = np.asarray(self.features, dtype=np.float32).reshape(
            self.coords.shape[0], expected
        )
        for name in self.channel_manifest:
            if name not in CHANNEL_WIDTHS:
                raise ValueError(f"unknown channel {name!r}")

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]

    def channel(self, name: str) -> np.ndarray:
        """View of one named feature channel block."""
        offset = 0
        for c in self.channel_manifest:
            width = CHANNEL_WIDTHS[c]
            if c == name:
                return self.features[:, offset : offset + width]
            offset += width
        raise KeyError(f"channel {name!r} not in manifest {self.channel_manifest}")


@dataclass
class AugmentConfig:
    """Bounds for random rigid augmentation."""

    max_rot_deg: float = 5.0
    max_trans_m: float = 0.5

    def __post_init__(self):
        if self.max_rot_deg < 0 or self.max_trans_m < 0:
            raise ValueError("augmentation bounds must be non-negative")


def iou_aabb(a: Box3D, b: Box3D) -> float:
    """Volume intersection-over-union of two axis-aligned boxes.

    Face-touching boxes (zero-volume intersection) score 0.
    """
    lo = np.maximum(a.min_corner, b.min_corner)
    hi = np.minimum(a.max_corner, b.max_corner)
    inter = float(np.prod(np.clip(hi - lo, 0.0, None)))
    if inter <= 0.0:
        return 0.0
    union = a.volume + b.volume - inter
    return inter / union


def iou_matrix(boxes_a: list[Box3D], boxes_b: list[Box3D]) -> np.ndarray:
    """Pairwise IoU, shape (len(a), len(b))."""
    out = np.zeros((len(boxes_a), len(boxes_b)), dtype=np.float64)
    for i, a in enumerate(boxes_a):
        for j, b in enumerate(boxes_b):
            out[i, j] = iou_aabb(a, b)
    return out


def rotation_matrix(rx: float, ry: float, rz: float) -> np.ndarray:
    """Rz @ Ry @ Rx for angles in radians (fixed composition order)."""
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    rot_x = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    rot_y = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rot_z = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rot_z @ rot_y @ rot_x


def augment(
    pc: PointCloud,
    boxes: list[Box3D],
    cfg: AugmentConfig,
    seed: int,
) -> tuple[PointCloud, list[Box3D]]:
    """Random rigid motion of a scene: rotate about the centroid, then translate.

    Rotation angles are drawn independently per axis from
    [-max_rot_deg, +max_rot_deg] and composed as Rz @ Ry @ Rx about the scene
    centroid; the translation draws each component from
    [-max_trans_m, +max_trans_m]. Box centers move with the points (extents are
    kept; the rotations are small), normal channels are rotated, and all other
    channels are untouched. Bit-identical for a fixed seed; a zero config is
    the exact identity.
    """
    rng = np.random.default_rng(seed)
    rot_rad = np.deg2rad(rng.uniform(-cfg.max_rot_deg, cfg.max_rot_deg, size=3))
    trans = rng.uniform(-cfg.max_trans_m, cfg.max_trans_m, size=3)
    if cfg.max_rot_deg == 0 and cfg.max_trans_m == 0:
        copied = PointCloud(
            coords=pc.coords.copy(),
            features=pc.features.copy(),
            channel_manifest=list(pc.channel_manifest),
        )
        return copied, [Box3D(b.center.copy(), b.size.copy()) for b in boxes]

    rot = rotation_matrix(*rot_rad)
    centroid = pc.coords.astype(np.float64).mean(axis=0)
    coords = (pc.coords.astype(np.float64) - centroid) @ rot.T + centroid + trans

    features = pc.features.copy()
    out = PointCloud(
        coords=coords.astype(np.float32),
        features=features,
        channel_manifest=list(pc.channel_manifest),
    )
    if "normal" in pc.channel_manifest:
        normals = pc.channel("normal").astype(np.float64) @ rot.T
        out.channel("normal")[:] = normals.astype(np.float32)

    new_boxes = [
        Box3D(center=(b.center - centroid) @ rot.T + centroid + trans, size=b.size.copy())
        for b in boxes
    ]
    return out, new_boxes


def farthest_point_sample(coords: np.ndarray, m: int, start_index: int = 0) -> np.ndarray:
    """Greedy max-min subsampling of m point indices, beginning at start_index.

    Ties break toward the lowest index, so the result is deterministic.
    """
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 3)
    n = coords.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"cannot sample {m} points from {n}")
    if not 0 <= start_index < n:
        raise ValueError(f"start index {start_index} out of range")
    chosen = np.empty(m, dtype=np.int64)
    chosen[0] = start_index
    dist = np.sum((coords - coords[start_index]) ** 2, axis=1)
    for i in range(1, m):
        nxt = int(np.argmax(dist))
        chosen[i] = nxt
        dist = np.minimum(dist, np.sum((coords - coords[nxt]) ** 2, axis=1))
    return chosen


def ball_query(
    coords: np.ndarray,
    centers: np.ndarray,
    radius: float,
    max_k: int,
) -> np.ndarray:
    """Per center, up to max_k point indices within radius, shape (M, max_k).

    Members are kept in ascending index order and truncated to max_k; short
    groups are padded by repeating their first member. A center with no
    in-radius point falls back to its single nearest point, so groups are
    never empty.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if max_k < 1:
        raise ValueError("max_k must be at least 1")
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 3)
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    d2 = np.sum((centers[:, None, :] - coords[None, :, :]) ** 2, axis=2)
    within = d2 <= radius * radius
    groups = np.empty((centers.shape[0], max_k), dtype=np.int64)
    for i in range(centers.shape[0]):
        idx = np.flatnonzero(within[i])
        if idx.size == 0:
            idx = np.array([int(np.argmin(d2[i]))], dtype=np.int64)
        idx = idx[:max_k]
        if idx.size < max_k:
            idx = np.concatenate([idx, np.full(max_k - idx.size, idx[0], dtype=np.int64)])
        groups[i] = idx
    return groups
