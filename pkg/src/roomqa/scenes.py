"""Synthetic desk-scale room scenes: box furniture, surface point clouds, I/O.

Each scene is a rectangular room with axis-aligned objects drawn from the
18-class benchmark palette. Points are sampled on object faces and on the
floor and walls; feature channels carry height above the floor, object
color, face normals, and a per-class pseudo multiview descriptor.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Box3D, PointCloud, iou_aabb

# The 18-class benchmark furniture palette (count is fixed; names may be
# overridden via SceneConfig).
DEFAULT_CLASSES = [
    "cabinet", "bed", "chair", "sofa", "table", "door", "window", "bookshelf",
    "picture", "counter", "desk", "curtain", "refrigerator", "shower curtain",
    "toilet", "sink", "bathtub", "garbage bin",
]

COLOR_PALETTE = {
    "red": (0.85, 0.10, 0.10),
    "green": (0.10, 0.70, 0.15),
    "blue": (0.10, 0.20, 0.85),
    "yellow": (0.90, 0.85, 0.10),
    "white": (0.95, 0.95, 0.95),
    "black": (0.05, 0.05, 0.05),
    "brown": (0.55, 0.35, 0.15),
    "gray": (0.50, 0.50, 0.50),
}

FLOOR_RGB = (0.35, 0.30, 0.25)
WALL_RGB = (0.80, 0.80, 0.75)
MULTIVIEW_DIM = 128
# pseudo-class ids for the room shell in the multiview descriptor table
_FLOOR_CLASS = 18
_WALL_CLASS = 19


class PlacementError(RuntimeError):
    """Raised when the requested object count cannot be placed."""


@dataclass
class SceneConfig:
    room_size: tuple[float, float, float] = (8.0, 8.0, 3.0)
    n_objects_min: int = 4
    n_objects_max: int = 9
    n_points: int = 2048
    classes: list[str] = field(default_factory=lambda: list(DEFAULT_CLASSES))
    channels: list[str] = field(
        default_factory=lambda: ["height", "rgb", "normal", "multiview"]
    )
    object_size_range: tuple[float, float] = (0.5, 1.6)
    max_overlap_iou: float = 0.05
    object_point_fraction: float = 0.65
    placement_retries: int = 200

    def __post_init__(self):
        if len(self.classes) != 18:
            raise ValueError("class palette must hold exactly 18 names")


@dataclass
class ScenePackage:
    scene_id: str
    point_cloud: PointCloud
    gt_boxes: list[Box3D]
    gt_classes: list[int]
    gt_object_names: list[str]
    gt_colors: list[str]
    class_palette: list[str] = field(default_factory=lambda: list(DEFAULT_CLASSES))
    room_size: tuple[float, float, float] = (8.0, 8.0, 3.0)


def multiview_descriptor(class_index: int) -> np.ndarray:
    """Fixed pseudo-random 128-vector per class, stable across runs."""
    digest = hashlib.sha256(f"multiview:{class_index}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    return rng.standard_normal(MULTIVIEW_DIM).astype(np.float32)


def _sample_box_surface(rng, box: Box3D, count: int, shrink: float = 0.995):
    """Points on box faces (area-weighted), pulled slightly inside the box."""
    half = box.size / 2.0 * shrink
    face_axes = np.repeat(np.arange(3), 2)
    face_signs = np.tile([1.0, -1.0], 3)
    areas = np.array(
        [box.size[(ax + 1) % 3] * box.size[(ax + 2) % 3] for ax in face_axes]
    )
    picks = rng.choice(6, size=count, p=areas / areas.sum())
    pts = rng.uniform(-half, half, size=(count, 3))
    normals = np.zeros((count, 3))
    for f in range(6):
        mask = picks == f
        ax, sign = face_axes[f], face_signs[f]
        pts[mask, ax] = sign * half[ax]
        normals[mask, ax] = sign
    return pts + box.center, normals


def _sample_room_shell(rng, room, count):
    """Points on the floor and the four walls, slightly inset from the bounds."""
    w, d, h = room
    inset = 1e-3
    # weights: floor area plus four wall areas
    areas = np.array([w * d, d * h, d * h, w * h, w * h])
    picks = rng.choice(5, size=count, p=areas / areas.sum())
    pts = np.zeros((count, 3))
    normals = np.zeros((count, 3))
    u = rng.uniform(0, 1, size=(count, 2))
    for f in range(5):
        mask = picks == f
        if f == 0:  # floor
            pts[mask, 0] = u[mask, 0] * w
            pts[mask, 1] = u[mask, 1] * d
            pts[mask, 2] = inset
            normals[mask, 2] = 1.0
        elif f in (1, 2):  # x = const walls
            pts[mask, 0] = inset if f == 1 else w - inset
            pts[mask, 1] = u[mask, 0] * d
            pts[mask, 2] = u[mask, 1] * h
            normals[mask, 0] = 1.0 if f == 1 else -1.0
        else:  # y = const walls
            pts[mask, 0] = u[mask, 0] * w
            pts[mask, 1] = inset if f == 3 else d - inset
            pts[mask, 2] = u[mask, 1] * h
            normals[mask, 1] = 1.0 if f == 3 else -1.0
    return pts, normals


def generate_scene(cfg: SceneConfig, seed: int, scene_id: str | None = None) -> ScenePackage:
    """Place non-overlapping furniture boxes and sample a surface point cloud.

    Deterministic per (cfg, seed). Raises PlacementError when an object
    cannot be placed within the retry budget.
    """
    rng = np.random.default_rng(seed)
    scene_id = scene_id or f"scene{seed:06d}"
    w, d, h = cfg.room_size

    n_objects = int(rng.integers(cfg.n_objects_min, cfg.n_objects_max + 1))
    boxes: list[Box3D] = []
    classes: list[int] = []
    colors: list[str] = []
    color_names = sorted(COLOR_PALETTE)
    lo, hi = cfg.object_size_range
    for _ in range(n_objects):
        placed = False
        for _attempt in range(cfg.placement_retries):
            size = rng.uniform(lo, hi, size=3)
            size[2] = min(size[2], h * 0.6)
            center = np.array(
                [
                    rng.uniform(size[0] / 2 + 0.1, w - size[0] / 2 - 0.1),
                    rng.uniform(size[1] / 2 + 0.1, d - size[1] / 2 - 0.1),
                    size[2] / 2,  # objects rest on the floor
                ]
            )
            cand = Box3D(center=center, size=size)
            if all(iou_aabb(cand, b) < cfg.max_overlap_iou for b in boxes):
                boxes.append(cand)
                classes.append(int(rng.integers(0, 18)))
                colors.append(color_names[int(rng.integers(0, len(color_names)))])
                placed = True
                break
        if not placed:
            raise PlacementError(
                f"could not place object {len(boxes) + 1}/{n_objects} "
                f"after {cfg.placement_retries} retries"
            )

    # point budget: objects share object_point_fraction, shell takes the rest
    n_obj_points = int(round(cfg.n_points * cfg.object_point_fraction)) if boxes else 0
    counts = np.zeros(len(boxes), dtype=int)
    if boxes:
        counts += 1  # every box keeps at least one point
        remaining = n_obj_points - len(boxes)
        if remaining < 0:
            raise ValueError("n_points too small for the object count")
        areas = np.array([2 * (b.size[0] * b.size[1] + b.size[1] * b.size[2] + b.size[0] * b.size[2]) for b in boxes])
        shares = rng.multinomial(remaining, areas / areas.sum())
        counts += shares
    n_shell = cfg.n_points - counts.sum()

    pts_list, normal_list, rgb_list, mv_class = [], [], [], []
    for i, box in enumerate(boxes):
        pts, normals = _sample_box_surface(rng, box, counts[i])
        pts_list.append(pts)
        normal_list.append(normals)
        rgb = np.array(COLOR_PALETTE[colors[i]])
        noise = rng.uniform(-0.02, 0.02, size=(counts[i], 3))
        rgb_list.append(np.clip(rgb + noise, 0.0, 1.0))
        mv_class.extend([classes[i]] * counts[i])
    shell_pts, shell_normals = _sample_room_shell(rng, cfg.room_size, n_shell)
    pts_list.append(shell_pts)
    normal_list.append(shell_normals)
    shell_rgb = np.where(
        shell_normals[:, 2:3] > 0.5, np.array([FLOOR_RGB]), np.array([WALL_RGB])
    )
    rgb_list.append(shell_rgb)
    mv_class.extend(
        _FLOOR_CLASS if nz > 0.5 else _WALL_CLASS for nz in shell_normals[:, 2]
    )

    coords = np.concatenate(pts_list).astype(np.float32)
    normals = np.concatenate(normal_list).astype(np.float32)
    rgbs = np.concatenate(rgb_list).astype(np.float32)
    heights = coords[:, 2:3].copy()
    mv_table = np.stack([multiview_descriptor(c) for c in range(20)])
    multiview = mv_table[np.array(mv_class)] + rng.normal(
        0, 0.05, size=(cfg.n_points, MULTIVIEW_DIM)
    ).astype(np.float32)

    blocks = {
        "height": heights,
        "rgb": rgbs,
        "normal": normals,
        "multiview": multiview.astype(np.float32),
    }
    features = np.concatenate([blocks[c] for c in cfg.channels], axis=1)
    pc = PointCloud(
        coords=coords, features=features, channel_manifest=list(cfg.channels)
    )
    return ScenePackage(
        scene_id=scene_id,
        point_cloud=pc,
        gt_boxes=boxes,
        gt_classes=classes,
        gt_object_names=[cfg.classes[c] for c in classes],
        gt_colors=colors,
        class_palette=list(cfg.classes),
        room_size=cfg.room_size,
    )


# ---------------------------------------------------------------------------
# on-disk format: <dir>/scene.json + <dir>/points.f32le
# ---------------------------------------------------------------------------

def save_scene(scene: ScenePackage, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pc = scene.point_cloud
    meta = {
        "scene_id": scene.scene_id,
        "channel_manifest": list(pc.channel_manifest),
        "n_points": pc.n_points,
        "gt_boxes": [b.to_dict() for b in scene.gt_boxes],
        "gt_classes": list(scene.gt_classes),
        "gt_object_names": list(scene.gt_object_names),
        "gt_colors": list(scene.gt_colors),
        "class_palette": list(scene.class_palette),
        "room_size": list(scene.room_size),
    }
    (directory / "scene.json").write_text(json.dumps(meta, indent=1))
    raw = np.concatenate([pc.coords, pc.features], axis=1).astype("<f4")
    (directory / "points.f32le").write_bytes(raw.tobytes(order="C"))


def load_scene(directory: str | Path) -> ScenePackage:
    directory = Path(directory)
    meta = json.loads((directory / "scene.json").read_text())
    n = meta["n_points"]
    manifest = meta["channel_manifest"]
    width = 3 + sum({"height": 1, "rgb": 3, "normal": 3, "multiview": 128}[c] for c in manifest)
    raw = np.frombuffer((directory / "points.f32le").read_bytes(), dtype="<f4")
    raw = raw.reshape(n, width)
    pc = PointCloud(coords=raw[:, :3], features=raw[:, 3:], channel_manifest=manifest)
    return ScenePackage(
        scene_id=meta["scene_id"],
        point_cloud=pc,
        gt_boxes=[Box3D.from_dict(b) for b in meta["gt_boxes"]],
        gt_classes=list(meta["gt_classes"]),
        gt_object_names=list(meta["gt_object_names"]),
        gt_colors=list(meta["gt_colors"]),
        class_palette=list(meta.get("class_palette", DEFAULT_CLASSES)),
        room_size=tuple(meta.get("room_size", (8.0, 8.0, 3.0))),
    )
