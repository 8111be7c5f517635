"""Synthetic scene generator: a desk-scale stand-in for satellite acquisitions.

Builds a deterministic scene of axis-aligned boxes on a ground plane, views it
with a handful of narrow-field skewed cameras placed kilometers above (the
near-parallel ray geometry of real satellite sensors), and renders per-camera
shaded intensity images plus reparameterized depth maps by exact ray casting.
Everything needed to run the full pipeline end to end is written to disk:
mesh, ground-truth height grid, camera files, rasters and projection sidecars.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .camera import FpcCamera, FpcIntrinsics
from .depth import (
    KIND_METRIC,
    KIND_REPARAM,
    DepthMap,
    ReparamProjection,
    build_reparam,
)
from .evaluation import GridSpec, HeightGrid, TriangleMesh
from .fileio import (
    save_camera_file,
    save_height_grid,
    save_ply,
    save_projection_sidecar,
)
from .raster import Raster, save_raster

# Box walls sit this far inside grid-cell boundaries, so resampling artifacts
# at depth discontinuities (the cubic kernel blends across silhouettes) stay
# within cells the box itself covers.
_EDGE_INSET = 0.18

_LIGHT = np.array([0.35, 0.25, -0.9])
_LIGHT_DIR = _LIGHT / np.linalg.norm(_LIGHT)


@dataclass(frozen=True)
class SynthConfig:
    """Knobs of the synthetic scene; defaults match the acceptance fixture."""

    boxes: int = 20
    cameras: int = 4
    image_size: int = 512
    # Scene coordinates are a local ENU-style frame anchored at the AOI
    # corner, the frame real satellite reconstructions work in; the UTM zone
    # anchor rides along in the height-grid sidecar.
    extent: float = 100.0
    cell: float = 0.5
    ground_z: float = 30.0
    origin_e: float = 0.0
    origin_n: float = 0.0
    zone: int = 21
    hemisphere: str = "S"
    altitude: float = 8000.0
    box_side_range: tuple[float, float] = (4.0, 16.0)
    box_height_range: tuple[float, float] = (2.0, 8.0)
    footprint_factor: float = 1.3

    def __post_init__(self):
        if self.image_size < 16:
            raise ValueError("image_size must be at least 16")
        if self.extent <= 0 or self.cell <= 0:
            raise ValueError("extent and cell must be positive")
        if self.extent / self.cell < 16:
            raise ValueError("scene must span at least 16 grid cells")
        if self.cameras < 1:
            raise ValueError("need at least one camera")


@dataclass(frozen=True)
class Bldg:
    """Axis-aligned box in world coordinates (bottom on the ground plane)."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    top: float


@dataclass
class SyntheticScene:
    """In-memory synthetic scene plus everything rendered from it."""

    config: SynthConfig
    seed: int
    boxes: list[Bldg]
    mesh: TriangleMesh
    gt_grid: HeightGrid
    cameras: list[FpcCamera] = field(default_factory=list)
    images: list[Raster] = field(default_factory=list)
    depth_maps_m: list[DepthMap] = field(default_factory=list)
    depth_maps_z: list[DepthMap] = field(default_factory=list)
    projections: list[ReparamProjection] = field(default_factory=list)

    @property
    def plane_d(self) -> float:
        return self.config.ground_z - 10.0

    def camera_id(self, index: int) -> str:
        return f"cam{index}"


def _make_boxes(config: SynthConfig, rng: np.random.Generator) -> list[Bldg]:
    """Boxes with footprints on the grid lattice, shrunk by the edge inset."""
    boxes = []
    cells = int(round(config.extent / config.cell))
    lo, hi = config.box_side_range
    hlo, hhi = config.box_height_range
    for _ in range(config.boxes):
        side_x = int(round(rng.uniform(lo, hi) / config.cell))
        side_y = int(round(rng.uniform(lo, hi) / config.cell))
        side_x = max(2, min(side_x, cells - 8))
        side_y = max(2, min(side_y, cells - 8))
        ix = int(rng.integers(4, cells - side_x - 4 + 1))
        iy = int(rng.integers(4, cells - side_y - 4 + 1))
        height = float(rng.uniform(hlo, hhi))
        boxes.append(
            Bldg(
                xmin=config.origin_e + ix * config.cell + _EDGE_INSET,
                xmax=config.origin_e + (ix + side_x) * config.cell - _EDGE_INSET,
                ymin=config.origin_n + iy * config.cell + _EDGE_INSET,
                ymax=config.origin_n + (iy + side_y) * config.cell - _EDGE_INSET,
                top=config.ground_z + height,
            )
        )
    return boxes


def _build_mesh(config: SynthConfig, boxes: list[Bldg]) -> TriangleMesh:
    """Ground quad plus closed boxes, all as triangles."""
    # the quad must cover every camera ray: rolled cameras sweep the image
    # diagonal across the footprint, plus skew and look-at perspective shift
    margin = config.extent * config.footprint_factor * 0.75
    g0e = config.origin_e - margin
    g0n = config.origin_n - margin
    g1e = config.origin_e + config.extent + margin
    g1n = config.origin_n + config.extent + margin
    z = config.ground_z
    vertices = [
        [g0e, g0n, z],
        [g1e, g0n, z],
        [g1e, g1n, z],
        [g0e, g1n, z],
    ]
    faces = [[0, 1, 2], [0, 2, 3]]
    for box in boxes:
        base = len(vertices)
        corners = [
            [box.xmin, box.ymin],
            [box.xmax, box.ymin],
            [box.xmax, box.ymax],
            [box.xmin, box.ymax],
        ]
        for e, n in corners:
            vertices.append([e, n, z])
        for e, n in corners:
            vertices.append([e, n, box.top])
        b = [base + i for i in range(4)]
        t = [base + 4 + i for i in range(4)]
        faces.extend([[t[0], t[1], t[2]], [t[0], t[2], t[3]]])  # roof
        faces.extend([[b[2], b[1], b[0]], [b[3], b[2], b[0]]])  # floor
        for i in range(4):
            j = (i + 1) % 4
            faces.extend([[b[i], b[j], t[j]], [b[i], t[j], t[i]]])  # wall
    return TriangleMesh(vertices=np.asarray(vertices, dtype=np.float64), faces=np.asarray(faces))


def _build_gt_grid(config: SynthConfig, boxes: list[Bldg]) -> HeightGrid:
    """Exact maximum surface height per cell from the box footprints."""
    n = int(round(config.extent / config.cell))
    spec = GridSpec(
        origin_e=config.origin_e,
        origin_n=config.origin_n,
        cell=config.cell,
        nx=n,
        ny=n,
        zone=config.zone,
        hemisphere=config.hemisphere,
    )
    heights = np.full((n, n), config.ground_z, dtype=np.float64)
    for box in boxes:
        i0 = int(math.floor((box.xmin - config.origin_e) / config.cell))
        i1 = int(math.floor((box.xmax - config.origin_e) / config.cell))
        j0 = int(math.floor((box.ymin - config.origin_n) / config.cell))
        j1 = int(math.floor((box.ymax - config.origin_n) / config.cell))
        i0, j0 = max(i0, 0), max(j0, 0)
        i1, j1 = min(i1, n - 1), min(j1, n - 1)
        window = heights[j0 : j1 + 1, i0 : i1 + 1]
        np.maximum(window, box.top, out=window)
    return HeightGrid(spec, heights)


def _look_at_rotation(center: np.ndarray, target: np.ndarray, roll: float) -> np.ndarray:
    """World-to-camera rotation with the optical axis through the target."""
    forward = target - center
    forward = forward / np.linalg.norm(forward)
    up_hint = np.array([math.sin(roll), math.cos(roll), 0.0])
    right = np.cross(up_hint, forward)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    return np.stack([right, down, forward])


def _make_camera(config: SynthConfig, rng: np.random.Generator) -> FpcCamera:
    center_e = config.origin_e + config.extent / 2.0
    center_n = config.origin_n + config.extent / 2.0
    target = np.array([center_e, center_n, config.ground_z])
    altitude = config.altitude * rng.uniform(0.9, 1.1)
    # small lateral offsets keep rays near-vertical (satellite-like)
    offset = rng.uniform(-30.0, 30.0, size=2)
    center = np.array([center_e + offset[0], center_n + offset[1], config.ground_z + altitude])
    roll = rng.uniform(0.0, 2.0 * math.pi)
    rotation = _look_at_rotation(center, target, roll)

    footprint = config.extent * config.footprint_factor
    fy = altitude * config.image_size / footprint
    fx = fy * rng.uniform(0.97, 1.03)
    skew = fy * rng.uniform(0.03, 0.08) * (1.0 if rng.random() < 0.5 else -1.0)
    half = config.image_size / 2.0
    intrinsics = FpcIntrinsics(
        fx=fx,
        fy=fy,
        s=skew,
        px=half + rng.uniform(-3.0, 3.0),
        py=half + rng.uniform(-3.0, 3.0),
    )
    translation = -rotation @ center
    return FpcCamera(intrinsics=intrinsics, rotation=rotation, translation=translation)


def _ray_cast(config: SynthConfig, boxes: list[Bldg], cam: FpcCamera):
    """Exact depth and surface attributes for every pixel of the camera.

    Returns (depth, height, normal_idx, box_idx): conventional depth Z,
    world height of the hit, an index into the face-normal table
    (0 +z, 1 -x, 2 +x, 3 -y, 4 +y) and the hit box (-1 for ground).
    """
    n = config.image_size
    u, v = np.meshgrid(np.arange(n, dtype=np.float64), np.arange(n, dtype=np.float64))
    kinv = np.linalg.inv(cam.intrinsics.as_matrix())
    pix = np.stack([u.ravel(), v.ravel(), np.ones(n * n)])
    dirs_cam = kinv @ pix  # third row is exactly 1, so depth equals the ray t
    dirs = cam.rotation.T @ dirs_cam
    origin = cam.center()

    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = (config.ground_z - origin[2]) / dirs[2]
    t_best = np.where(t_ground > 0, t_ground, np.inf)
    height = np.full(n * n, config.ground_z)
    normal_idx = np.zeros(n * n, dtype=np.int8)
    box_idx = np.full(n * n, -1, dtype=np.int32)

    inv_dirs = 1.0 / dirs
    for bi, box in enumerate(boxes):
        tx1 = (box.xmin - origin[0]) * inv_dirs[0]
        tx2 = (box.xmax - origin[0]) * inv_dirs[0]
        ty1 = (box.ymin - origin[1]) * inv_dirs[1]
        ty2 = (box.ymax - origin[1]) * inv_dirs[1]
        tz1 = (config.ground_z - origin[2]) * inv_dirs[2]
        tz2 = (box.top - origin[2]) * inv_dirs[2]
        t_enter = np.maximum(
            np.maximum(np.minimum(tx1, tx2), np.minimum(ty1, ty2)), np.minimum(tz1, tz2)
        )
        t_exit = np.minimum(
            np.minimum(np.maximum(tx1, tx2), np.maximum(ty1, ty2)), np.maximum(tz1, tz2)
        )
        hit = (t_enter <= t_exit) & (t_enter > 0) & (t_enter < t_best)
        if not hit.any():
            continue
        te = t_enter[hit]
        hit_z = origin[2] + te * dirs[2][hit]
        hit_x = origin[0] + te * dirs[0][hit]
        # classify the struck surface by where the entry point lies
        face = np.zeros(te.shape, dtype=np.int8)
        on_roof = np.abs(hit_z - box.top) < 1e-6
        on_xwall = (~on_roof) & (
            (np.abs(hit_x - box.xmin) < 1e-6) | (np.abs(hit_x - box.xmax) < 1e-6)
        )
        face[~on_roof] = np.where(dirs[1][hit][~on_roof] > 0, 3, 4)
        face[on_xwall] = np.where(dirs[0][hit][on_xwall] > 0, 1, 2)
        t_best[hit] = te
        height[hit] = hit_z
        normal_idx[hit] = face
        box_idx[hit] = bi

    depth = t_best.reshape(n, n)
    return (
        depth,
        height.reshape(n, n),
        normal_idx.reshape(n, n),
        box_idx.reshape(n, n),
        dirs,
        origin,
    )

_FACE_NORMALS = np.array(
    [
        [0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 1.0, 0.0],
    ]
)


def _shade(config: SynthConfig, boxes: list[Bldg], rng_albedo: np.ndarray,
           height, normal_idx, box_idx, dirs, origin) -> np.ndarray:
    """Lambertian high-dynamic-range intensity with a textured ground."""
    n = config.image_size
    lambert = np.maximum(0.0, -(_FACE_NORMALS @ _LIGHT_DIR))
    shade = lambert[normal_idx.ravel()].reshape(n, n)

    t = (height.ravel() - origin[2]) / dirs[2]
    e = origin[0] + t * dirs[0]
    nn = origin[1] + t * dirs[1]
    ground_tex = 0.75 + 0.25 * np.sin(0.9 * e) * np.sin(0.8 * nn)
    albedo = np.where(
        box_idx.ravel() >= 0,
        rng_albedo[np.clip(box_idx.ravel(), 0, None)],
        0.35 * ground_tex.ravel(),
    )
    radiance = 2800.0 * albedo * (0.15 + 0.85 * shade.ravel())
    return radiance.reshape(n, n)


def generate_synthetic_scene(config: SynthConfig, seed: int) -> SyntheticScene:
    """Deterministically build and render the synthetic scene."""
    rng = np.random.default_rng(seed)
    boxes = _make_boxes(config, rng)
    mesh = _build_mesh(config, boxes)
    gt_grid = _build_gt_grid(config, boxes)
    scene = SyntheticScene(config=config, seed=seed, boxes=boxes, mesh=mesh, gt_grid=gt_grid)

    albedos = rng.uniform(0.25, 0.9, size=max(1, len(boxes)))
    d = scene.plane_d
    for index in range(config.cameras):
        cam = _make_camera(config, rng)
        depth, height, normal_idx, box_idx, dirs, origin = _ray_cast(config, boxes, cam)
        z_bar = float(depth.mean())
        rp = build_reparam(cam.projection_3x4(), z_bar=z_bar, d=d)
        m_values = z_bar * (height - d) / depth
        image = _shade(config, boxes, albedos, height, normal_idx, box_idx, dirs, origin)

        cid = scene.camera_id(index)
        scene.cameras.append(cam)
        scene.projections.append(rp)
        scene.images.append(Raster(image.astype(np.float32)))
        scene.depth_maps_m.append(
            DepthMap(raster=Raster(m_values.astype(np.float32)), kind=KIND_REPARAM, camera_id=cid)
        )
        scene.depth_maps_z.append(
            DepthMap(raster=Raster(depth.astype(np.float32)), kind=KIND_METRIC, camera_id=cid)
        )
    return scene


def write_scene(scene: SyntheticScene, out_dir) -> dict:
    """Write every artifact of the scene; returns the path map."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    mesh_path = os.path.join(out_dir, "scene_mesh.ply")
    save_ply(scene.mesh, mesh_path)
    paths["mesh"] = mesh_path

    gt_path = os.path.join(out_dir, "gt_heights.hgrid")
    save_height_grid(scene.gt_grid, gt_path)
    paths["gt"] = gt_path

    for i, cam in enumerate(scene.cameras):
        cid = scene.camera_id(i)
        cam_path = os.path.join(out_dir, f"{cid}.yaml")
        save_camera_file(cam_path, fpc=cam)
        pan_path = os.path.join(out_dir, f"{cid}_pan.srtk")
        save_raster(scene.images[i], pan_path)
        m_path = os.path.join(out_dir, f"{cid}_depth_m.srtk")
        save_raster(scene.depth_maps_m[i].raster, m_path)
        z_path = os.path.join(out_dir, f"{cid}_depth_z.srtk")
        save_raster(scene.depth_maps_z[i].raster, z_path)
        proj_path = os.path.join(out_dir, f"{cid}_proj.yaml")
        save_projection_sidecar(scene.projections[i], proj_path, kind=KIND_REPARAM, camera_id=cid)
        paths[cid] = {
            "camera": cam_path,
            "pan": pan_path,
            "depth_m": m_path,
            "depth_z": z_path,
            "proj": proj_path,
        }

    scene_doc_path = os.path.join(out_dir, "scene.yaml")
    _write_scene_summary(scene, scene_doc_path)
    paths["summary"] = scene_doc_path
    return paths


def _write_scene_summary(scene: SyntheticScene, path) -> None:
    config = scene.config
    doc = {
        "seed": scene.seed,
        "boxes": len(scene.boxes),
        "cameras": len(scene.cameras),
        "image_size": config.image_size,
        "extent": config.extent,
        "cell": config.cell,
        "ground_z": config.ground_z,
        "plane_d": scene.plane_d,
        "origin_e": config.origin_e,
        "origin_n": config.origin_n,
        "zone": config.zone,
        "hemisphere": config.hemisphere,
        "camera_ids": [scene.camera_id(i) for i in range(len(scene.cameras))],
    }
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)
