"""Interchange formats: PLY meshes, PFM depth maps, PNG images, YAML documents.

Camera files, scene metadata, depth-map projection sidecars, height-grid
sidecars and evaluation reports are human-readable YAML; the exact field
names are documented in ``docs/file_formats.md`` and the shipped schema file.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
import yaml
from PIL import Image

from .camera import FpcCamera, FpcIntrinsics, RpcCamera
from .depth import ReparamProjection
from .errors import FileFormatError
from .evaluation import EvalReport, GridSpec, HeightGrid, TriangleMesh
from .preprocess import SceneMetadata
from .raster import Raster, load_raster, save_raster

GRID_SIDECAR_SUFFIX = ".meta"


# ---------------------------------------------------------------------------
# PLY meshes and point lists
# ---------------------------------------------------------------------------


def save_ply(mesh: TriangleMesh, path) -> None:
    """Write an ASCII PLY with float64 vertex positions and triangle faces."""
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {mesh.vertex_count}",
        "property double x",
        "property double y",
        "property double z",
        f"element face {mesh.face_count}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")
        for a, b, c in mesh.faces.tolist():
            fh.write(f"3 {a} {b} {c}\n")


def save_points_ply(points, path) -> None:
    """Write a vertex-only ASCII PLY point cloud."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    save_ply(TriangleMesh(vertices=pts, faces=np.empty((0, 3), dtype=np.int64)), path)


def load_ply(path) -> TriangleMesh:
    """Read an ASCII PLY mesh or point cloud.

    Extra vertex properties are ignored; polygon faces are fan-triangulated.
    Binary PLY files are rejected.
    """
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        first = fh.readline().strip()
        if first != "ply":
            raise FileFormatError(f"{path}: not a PLY file")
        elements = []  # (name, count, properties)
        fmt = None
        while True:
            line = fh.readline()
            if not line:
                raise FileFormatError(f"{path}: unterminated PLY header")
            tokens = line.split()
            if not tokens or tokens[0] == "comment":
                continue
            if tokens[0] == "format":
                fmt = tokens[1]
            elif tokens[0] == "element":
                elements.append([tokens[1], int(tokens[2]), []])
            elif tokens[0] == "property":
                if not elements:
                    raise FileFormatError(f"{path}: property before element")
                elements[-1][2].append(tokens[1:])
            elif tokens[0] == "end_header":
                break
        if fmt != "ascii":
            raise FileFormatError(f"{path}: only ASCII PLY is supported, got format {fmt!r}")

        vertices = np.empty((0, 3))
        faces: list[tuple[int, int, int]] = []
        for name, count, props in elements:
            if name == "vertex":
                names = [p[-1] for p in props]
                try:
                    cols = (names.index("x"), names.index("y"), names.index("z"))
                except ValueError as exc:
                    raise FileFormatError(f"{path}: vertex element lacks x/y/z") from exc
                vertices = np.empty((count, 3), dtype=np.float64)
                for i in range(count):
                    fields = fh.readline().split()
                    if len(fields) < len(names):
                        raise FileFormatError(f"{path}: truncated vertex data")
                    vertices[i] = [float(fields[c]) for c in cols]
            elif name == "face":
                for _ in range(count):
                    fields = fh.readline().split()
                    if not fields:
                        raise FileFormatError(f"{path}: truncated face data")
                    n = int(fields[0])
                    if len(fields) < 1 + n:
                        raise FileFormatError(f"{path}: truncated face row")
                    idx = [int(v) for v in fields[1 : 1 + n]]
                    if n < 3:
                        raise FileFormatError(f"{path}: face with fewer than 3 vertices")
                    for k in range(1, n - 1):
                        faces.append((idx[0], idx[k], idx[k + 1]))
            else:
                # Skip unknown elements line by line.
                for _ in range(count):
                    fh.readline()
    try:
        return TriangleMesh(
            vertices=vertices,
            faces=np.asarray(faces, dtype=np.int64).reshape(-1, 3),
        )
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# PFM depth maps
# ---------------------------------------------------------------------------


def save_pfm(raster: Raster, path) -> None:
    """Write a 1- or 3-channel raster as a little-endian PFM file."""
    if raster.channels not in (1, 3):
        raise ValueError(f"PFM supports 1 or 3 channels, got {raster.channels}")
    header = "Pf" if raster.channels == 1 else "PF"
    data = raster.data
    if raster.channels == 1:
        data = data[:, :, 0]
    with open(path, "wb") as fh:
        fh.write(f"{header}\n{raster.width} {raster.height}\n-1.0\n".encode("ascii"))
        # PFM scanlines are stored bottom-to-top.
        fh.write(np.ascontiguousarray(data[::-1]).astype("<f4", copy=False).tobytes())


def load_pfm(path, nodata: float = float("nan")) -> Raster:
    """Read a PFM file into a raster (scanlines flipped back to top-down)."""
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header == b"Pf":
            channels = 1
        elif header == b"PF":
            channels = 3
        else:
            raise FileFormatError(f"{path}: not a PFM file (header {header!r})")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise FileFormatError(f"{path}: malformed PFM dimensions")
        width, height = int(dims[0]), int(dims[1])
        scale = float(fh.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        expected = width * height * channels * 4
        payload = fh.read(expected)
        if len(payload) < expected:
            raise FileFormatError(f"{path}: truncated PFM payload")
    arr = np.frombuffer(payload, dtype=dtype).reshape(height, width, channels)
    arr = arr[::-1].astype(np.float32)
    if scale not in (-1.0, 1.0) and scale != 0:
        arr = arr * np.float32(abs(scale))
    try:
        return Raster(arr, nodata=nodata)
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# PNG images
# ---------------------------------------------------------------------------

_PNG_MODES = {1: "L", 3: "RGB", 4: "RGBA"}


def save_png(raster: Raster, path) -> None:
    """Export a display-range raster (values 0..255) as an 8-bit PNG.

    Values are clipped to [0, 255] and nodata pixels become 0.
    """
    if raster.channels not in _PNG_MODES:
        raise ValueError(f"PNG export supports 1, 3 or 4 channels, got {raster.channels}")
    values = raster.to_masked()
    values = np.where(np.isnan(values), 0.0, np.clip(values, 0.0, 255.0))
    arr = values.astype(np.uint8)
    if raster.channels == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr, mode=_PNG_MODES[raster.channels]).save(path, format="PNG")


def load_png(path) -> Raster:
    """Import a PNG as a float32 raster with NaN nodata (all pixels valid)."""
    with Image.open(path) as img:
        if img.mode not in ("L", "RGB", "RGBA", "I", "I;16"):
            img = img.convert("RGB")
        arr = np.asarray(img, dtype=np.float32)
    return Raster(arr)


# ---------------------------------------------------------------------------
# YAML documents
# ---------------------------------------------------------------------------


def _dump_yaml(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def _load_yaml(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise FileFormatError(f"{path}: expected a YAML mapping")
    return doc


def _float_list(values, n: int, what: str) -> list[float]:
    out = [float(v) for v in np.asarray(values, dtype=np.float64).reshape(-1)]
    if len(out) != n:
        raise FileFormatError(f"{what} must have {n} entries, got {len(out)}")
    return out


def fpc_to_dict(cam: FpcCamera) -> dict:
    k = cam.intrinsics
    return {
        "fx": float(k.fx),
        "fy": float(k.fy),
        "s": float(k.s),
        "px": float(k.px),
        "py": float(k.py),
        "R": [float(v) for v in cam.rotation.reshape(-1)],
        "t": [float(v) for v in cam.translation],
    }


def fpc_from_dict(doc: dict) -> FpcCamera:
    try:
        intr = FpcIntrinsics(
            fx=float(doc["fx"]),
            fy=float(doc["fy"]),
            s=float(doc.get("s", 0.0)),
            px=float(doc["px"]),
            py=float(doc["py"]),
        )
        rotation = np.asarray(_float_list(doc["R"], 9, "fpc.R")).reshape(3, 3)
        translation = np.asarray(_float_list(doc["t"], 3, "fpc.t"))
        return FpcCamera(intrinsics=intr, rotation=rotation, translation=translation)
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"bad fpc document: {exc}") from exc


_RPC_CONSTANT_KEYS = ("lat", "lon", "height", "line", "samp")


def rpc_to_dict(rpc: RpcCamera) -> dict:
    return {
        "line_num": [float(v) for v in rpc.line_num],
        "line_den": [float(v) for v in rpc.line_den],
        "samp_num": [float(v) for v in rpc.samp_num],
        "samp_den": [float(v) for v in rpc.samp_den],
        "offsets": {k: float(getattr(rpc, f"{k}_off")) for k in _RPC_CONSTANT_KEYS},
        "scales": {k: float(getattr(rpc, f"{k}_scale")) for k in _RPC_CONSTANT_KEYS},
    }


def rpc_from_dict(doc: dict) -> RpcCamera:
    try:
        offsets = doc["offsets"]
        scales = doc["scales"]
        kwargs = {}
        for key in _RPC_CONSTANT_KEYS:
            kwargs[f"{key}_off"] = float(offsets[key])
            kwargs[f"{key}_scale"] = float(scales[key])
        return RpcCamera(
            line_num=_float_list(doc["line_num"], 20, "rpc.line_num"),
            line_den=_float_list(doc["line_den"], 20, "rpc.line_den"),
            samp_num=_float_list(doc["samp_num"], 20, "rpc.samp_num"),
            samp_den=_float_list(doc["samp_den"], 20, "rpc.samp_den"),
            **kwargs,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"bad rpc document: {exc}") from exc


def save_camera_file(path, fpc: Optional[FpcCamera] = None, rpc: Optional[RpcCamera] = None) -> None:
    """Write a camera document holding an fpc section, an rpc section, or both."""
    if fpc is None and rpc is None:
        raise ValueError("camera file needs at least one of fpc, rpc")
    doc = {}
    if fpc is not None:
        doc["fpc"] = fpc_to_dict(fpc)
    if rpc is not None:
        doc["rpc"] = rpc_to_dict(rpc)
    _dump_yaml(doc, path)


def load_camera_file(path) -> dict:
    """Read a camera document; returns ``{"fpc": FpcCamera?, "rpc": RpcCamera?}``."""
    doc = _load_yaml(path)
    out = {"fpc": None, "rpc": None}
    if "fpc" in doc:
        out["fpc"] = fpc_from_dict(doc["fpc"])
    if "rpc" in doc:
        out["rpc"] = rpc_from_dict(doc["rpc"])
    if out["fpc"] is None and out["rpc"] is None:
        raise FileFormatError(f"{path}: camera file has neither fpc nor rpc section")
    return out


def save_scene_metadata(meta: SceneMetadata, path, rpc: Optional[RpcCamera] = None) -> None:
    doc = {
        "id": meta.image_id,
        "cloud_cover": float(meta.cloud_cover),
        "acquired": meta.acquired,
        "sensor": meta.sensor,
    }
    if rpc is not None:
        doc["rpc"] = rpc_to_dict(rpc)
    _dump_yaml(doc, path)


def load_scene_metadata(path) -> tuple[SceneMetadata, Optional[RpcCamera]]:
    doc = _load_yaml(path)
    try:
        meta = SceneMetadata(
            image_id=str(doc["id"]),
            cloud_cover=float(doc["cloud_cover"]),
            acquired=str(doc.get("acquired", "")),
            sensor=str(doc.get("sensor", "panchromatic")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"{path}: bad scene metadata: {exc}") from exc
    rpc = rpc_from_dict(doc["rpc"]) if "rpc" in doc else None
    return meta, rpc


def save_projection_sidecar(rp: ReparamProjection, path, kind: str = "m", camera_id: str = "") -> None:
    """Write the depth-map sidecar: kind, plane, scale factors and matrices."""
    doc = {
        "kind": kind,
        "camera_id": camera_id,
        "z_bar": float(rp.z_bar),
        "d": float(rp.d),
        "n_p": float(rp.n_p),
        "n_p_inv": float(rp.n_p_inv),
        "P": [float(v) for v in rp.p.reshape(-1)],
        "P_inv": [float(v) for v in rp.p_inv.reshape(-1)],
    }
    _dump_yaml(doc, path)


def load_projection_sidecar(path) -> tuple[ReparamProjection, str, str]:
    """Read a depth-map sidecar; returns (projection, kind, camera_id)."""
    doc = _load_yaml(path)
    try:
        rp = ReparamProjection(
            p=np.asarray(_float_list(doc["P"], 16, "P")).reshape(4, 4),
            p_inv=np.asarray(_float_list(doc["P_inv"], 16, "P_inv")).reshape(4, 4),
            n_p=float(doc["n_p"]),
            n_p_inv=float(doc["n_p_inv"]),
            z_bar=float(doc["z_bar"]),
            d=float(doc["d"]),
        )
        kind = str(doc.get("kind", "m"))
        camera_id = str(doc.get("camera_id", ""))
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"{path}: bad projection sidecar: {exc}") from exc
    return rp, kind, camera_id


def save_height_grid(grid: HeightGrid, path) -> None:
    """Write a height grid as a raster file plus a ``<path>.meta`` sidecar."""
    save_raster(Raster(grid.heights, nodata=float("nan")), path)
    doc = {
        "origin_e": float(grid.spec.origin_e),
        "origin_n": float(grid.spec.origin_n),
        "cell": float(grid.spec.cell),
        "zone": grid.spec.zone,
        "hemisphere": grid.spec.hemisphere,
    }
    _dump_yaml(doc, str(path) + GRID_SIDECAR_SUFFIX)


def load_height_grid(path) -> HeightGrid:
    raster = load_raster(path)
    if raster.channels != 1:
        raise FileFormatError(f"{path}: height grids must be single-channel")
    if not math.isnan(raster.nodata):
        raise FileFormatError(f"{path}: height grids use NaN as the empty sentinel")
    doc = _load_yaml(str(path) + GRID_SIDECAR_SUFFIX)
    try:
        zone = doc.get("zone")
        spec = GridSpec(
            origin_e=float(doc["origin_e"]),
            origin_n=float(doc["origin_n"]),
            cell=float(doc["cell"]),
            nx=raster.width,
            ny=raster.height,
            zone=None if zone is None else int(zone),
            hemisphere=doc.get("hemisphere"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"{path}: bad height-grid sidecar: {exc}") from exc
    return HeightGrid(spec, raster.data[:, :, 0])


def save_report(report: EvalReport, path) -> None:
    _dump_yaml(report.to_dict(), path)


def format_report(report: EvalReport) -> str:
    return yaml.safe_dump(report.to_dict(), sort_keys=False)
