"""Stage-per-subcommand command line front end.

Each subcommand is a thin adapter over the library: it parses flags (merged
over an optional YAML config file, flags winning), calls the corresponding
operations and writes files. Diagnostics go to stderr, data to files or
stdout. Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import yaml

from . import fileio
from .camera import FpcCamera, decompose_skew
from .depth import (
    KIND_METRIC,
    KIND_REPARAM,
    DepthMap,
    depth_map_to_points,
    recover_depth_map,
    skew_correct_depth_map,
    transform_reparam,
)
from .errors import SatreconError
from .evaluation import (
    DEFAULT_CELL,
    DEFAULT_COMPLETENESS_THRESHOLD,
    DEFAULT_POISSON_RADIUS,
    DEFAULT_SEARCH_CELLS,
    TriangleMesh,
    compute_metrics,
    error_grid,
    fill_holes,
    poisson_disk_sample,
    rasterize_height,
    vertex_sample,
)
from .preprocess import (
    DEFAULT_CLOUD_THRESHOLD,
    DEFAULT_HI_PERCENTILE,
    DEFAULT_LO_PERCENTILE,
    AoiBox,
    aoi_to_pixel_bbox,
    pansharpen_brovey,
    tonemap,
)
from .raster import AffineMap2D, Raster, load_raster, save_raster, warp_affine
from .synth import SynthConfig, generate_synthetic_scene, write_scene


@dataclass(frozen=True)
class PipelineConfig:
    """Cross-stage parameters aggregated from config file and flags."""

    aoi: Optional[AoiBox] = None
    cloud_threshold: float = DEFAULT_CLOUD_THRESHOLD
    percentiles: tuple[float, float] = (DEFAULT_LO_PERCENTILE, DEFAULT_HI_PERCENTILE)
    weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    poisson_radius: float = DEFAULT_POISSON_RADIUS
    cell: float = DEFAULT_CELL
    completeness_threshold: float = DEFAULT_COMPLETENESS_THRESHOLD
    search_cells: int = DEFAULT_SEARCH_CELLS
    seed: int = 0
    paths: dict = field(default_factory=dict)  # role -> input/output path

    def __post_init__(self):
        if not 0.0 <= self.cloud_threshold <= 1.0:
            raise ValueError("cloud threshold must be in [0, 1]")
        lo, hi = self.percentiles
        if not lo < hi:
            raise ValueError("percentiles must satisfy lo < hi")
        if min(self.weights) < 0 or sum(self.weights) <= 0:
            raise ValueError("weights must be non-negative and not all zero")
        if self.poisson_radius <= 0:
            raise ValueError("poisson radius must be positive")
        if self.cell <= 0:
            raise ValueError("cell size must be positive")
        if self.completeness_threshold <= 0:
            raise ValueError("completeness threshold must be positive")
        if self.search_cells < 0:
            raise ValueError("search window must be non-negative")


def _info(message: str) -> None:
    print(message, file=sys.stderr)


def _parse_pair(text: str, what: str) -> tuple[float, float]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 2:
        raise ValueError(f"{what} needs two comma-separated values, got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_triple(text: str, what: str) -> tuple[float, float, float]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 3:
        raise ValueError(f"{what} needs three comma-separated values, got {text!r}")
    return float(parts[0]), float(parts[1]), float(parts[2])


# ---------------------------------------------------------------------------
# Config file merging
# ---------------------------------------------------------------------------


def _merge_config(parser: argparse.ArgumentParser, args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset options from the YAML config file named by --config.

    Config keys are flag names (dashes or underscores); explicitly passed
    flags always win.
    """
    path = getattr(args, "config", None)
    if not path:
        return args
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        parser.error(f"config file {path} must be a YAML mapping")
    valid = set(vars(args))
    for key, value in doc.items():
        dest = str(key).replace("-", "_")
        if dest in ("config", "command"):
            continue
        if dest not in valid:
            parser.error(f"config file {path} has unknown key {key!r}")
        if getattr(args, dest) is None:
            setattr(args, dest, value)
    return args


def _resolved(args: argparse.Namespace, name: str, default):
    value = getattr(args, name)
    return default if value is None else value


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------


def _derived_path(source, suffix: str) -> str:
    stem, ext = os.path.splitext(str(source))
    return f"{stem}{suffix}{ext or '.srtk'}"


def _cmd_aoi_extract(args) -> int:
    threshold = float(_resolved(args, "cloud_threshold", DEFAULT_CLOUD_THRESHOLD))
    PipelineConfig(cloud_threshold=threshold)
    if args.metadata:
        meta, meta_rpc = fileio.load_scene_metadata(args.metadata)
        if meta.cloud_cover > threshold:
            _info(
                f"aoi-extract: skipping {meta.image_id or args.image}: cloud cover "
                f"{meta.cloud_cover:.2f} > {threshold:.2f}"
            )
            return 0
    cameras = fileio.load_camera_file(args.camera)
    rpc = cameras["rpc"]
    if rpc is None:
        raise SatreconError(f"{args.camera}: aoi-extract needs an rpc section")
    emin, nmin, emax, nmax = (float(v) for v in args.aoi)
    aoi = AoiBox(
        easting_min=emin,
        northing_min=nmin,
        easting_max=emax,
        northing_max=nmax,
        zone=int(args.zone),
        hemisphere=args.hemisphere,
    )
    raster = load_raster(args.image)
    height = float(_resolved(args, "height", 0.0))
    x0, y0, x1, y1 = aoi_to_pixel_bbox(
        rpc, aoi, height=height, image_width=raster.width, image_height=raster.height
    )
    crop = Raster(raster.data[y0:y1, x0:x1, :], nodata=raster.nodata)
    save_raster(crop, args.output)
    _info(f"aoi-extract: pixel bbox ({x0}, {y0}) .. ({x1}, {y1}) -> {args.output}")
    return 0


def _cmd_tonemap(args) -> int:
    lo, hi = DEFAULT_LO_PERCENTILE, DEFAULT_HI_PERCENTILE
    if args.percentiles is not None:
        lo, hi = _parse_pair(args.percentiles, "--percentiles")
    raster = load_raster(args.input)
    mapped = tonemap(raster, lo=lo, hi=hi)
    if str(args.output).lower().endswith(".png"):
        fileio.save_png(mapped, args.output)
    else:
        save_raster(mapped, args.output)
    _info(f"tonemap: {args.input} -> {args.output} (percentiles {lo}/{hi})")
    return 0


def _cmd_pansharpen(args) -> int:
    weights = (1 / 3, 1 / 3, 1 / 3)
    if args.weights is not None:
        weights = _parse_triple(args.weights, "--weights")
    config = PipelineConfig(weights=weights)
    pan = load_raster(args.pan)
    msi = load_raster(args.msi)
    out = pansharpen_brovey(pan, msi, weights=config.weights)
    save_raster(out, args.output)
    _info(f"pansharpen: {args.pan} + {args.msi} -> {args.output}")
    return 0


def _cmd_skew_correct(args) -> int:
    cameras = fileio.load_camera_file(args.camera)
    cam = cameras["fpc"]
    if cam is None:
        raise SatreconError(f"{args.camera}: skew-correct needs an fpc section")
    dec = decompose_skew(cam.intrinsics)
    if cam.intrinsics.s == 0.0:
        _info("skew-correct: skew = 0, outputs equal inputs on the interior")
    content_map = AffineMap2D(dec.t_sp_inv())

    wrote = []
    if args.image:
        output = args.output or _derived_path(args.image, "_skewfree")
        raster = load_raster(args.image)
        save_raster(warp_affine(raster, content_map), output)
        wrote.append(output)
    if args.depth:
        if not args.proj:
            raise SatreconError("--depth needs --proj")
        depth_output = args.depth_output or _derived_path(args.depth, "_skewfree")
        proj_output = args.proj_output or _derived_path(args.proj, "_skewfree")
        rp, kind, camera_id = fileio.load_projection_sidecar(args.proj)
        dm = DepthMap(raster=load_raster(args.depth), kind=kind, camera_id=camera_id)
        corrected = skew_correct_depth_map(dm, dec.t_sp)
        save_raster(corrected.raster, depth_output)
        rp_s = transform_reparam(rp, dec.t_sp_inv())
        fileio.save_projection_sidecar(rp_s, proj_output, kind=kind, camera_id=camera_id)
        wrote.extend([depth_output, proj_output])
    if args.camera_output:
        cam_s = FpcCamera(intrinsics=dec.k_s, rotation=cam.rotation, translation=cam.translation)
        fileio.save_camera_file(args.camera_output, fpc=cam_s)
        wrote.append(args.camera_output)
    if not wrote:
        raise SatreconError("skew-correct: nothing to do (give --image and/or --depth)")
    _info(f"skew-correct: shear {dec.t_sp[0, 1]:.6g}, wrote {', '.join(map(str, wrote))}")
    return 0


def _cmd_depth_recover(args) -> int:
    rp, kind, camera_id = fileio.load_projection_sidecar(args.proj)
    if kind != KIND_REPARAM:
        raise SatreconError(f"{args.proj}: expected a reparameterized ('m') sidecar, got {kind!r}")
    dm = DepthMap(raster=load_raster(args.depth), kind=kind, camera_id=camera_id)
    metric = recover_depth_map(dm, rp)
    wrote = []
    output = args.output
    if output is None and not args.points_output:
        output = _derived_path(args.depth, "_metric")
    if output:
        save_raster(metric.raster, output)
        wrote.append(output)
        if args.proj_output:
            fileio.save_projection_sidecar(rp, args.proj_output, kind=KIND_METRIC, camera_id=camera_id)
            wrote.append(args.proj_output)
    if args.points_output:
        points = depth_map_to_points(metric, rp)
        fileio.save_points_ply(points, args.points_output)
        wrote.append(args.points_output)
    _info(f"depth-recover: {args.depth} -> {', '.join(map(str, wrote))}")
    return 0


def _sample_points(mesh: TriangleMesh, method: str, radius: float, seed: int) -> np.ndarray:
    if method == "auto":
        method = "poisson" if mesh.face_count else "vertex"
    if method == "vertex":
        return vertex_sample(mesh)
    if method == "poisson":
        return poisson_disk_sample(mesh, radius=radius, seed=seed)
    raise SatreconError(f"unknown sampling method {method!r}")


def _write_points(points: np.ndarray, path) -> None:
    if str(path).lower().endswith(".xyz"):
        with open(path, "w", encoding="ascii") as fh:
            for x, y, z in points.tolist():
                fh.write(f"{x!r} {y!r} {z!r}\n")
    else:
        fileio.save_points_ply(points, path)


def _cmd_sample_mesh(args) -> int:
    config = PipelineConfig(
        poisson_radius=float(_resolved(args, "radius", DEFAULT_POISSON_RADIUS)),
        seed=int(_resolved(args, "seed", 0)),
    )
    mesh = fileio.load_ply(args.mesh)
    method = _resolved(args, "method", "auto")
    points = _sample_points(mesh, method, config.poisson_radius, config.seed)
    _write_points(points, args.output)
    _info(f"sample-mesh: {len(points)} points ({method}) -> {args.output}")
    return 0


def _cmd_evaluate(args) -> int:
    config = PipelineConfig(
        poisson_radius=float(_resolved(args, "radius", DEFAULT_POISSON_RADIUS)),
        cell=float(_resolved(args, "cell", DEFAULT_CELL)),
        completeness_threshold=float(_resolved(args, "threshold", DEFAULT_COMPLETENESS_THRESHOLD)),
        search_cells=int(_resolved(args, "search", DEFAULT_SEARCH_CELLS)),
        seed=int(_resolved(args, "seed", 0)),
        paths={"recon": list(args.recon), "gt": args.gt},
    )
    gt = fileio.load_height_grid(args.gt)
    if abs(gt.spec.cell - config.cell) > 1e-9:
        raise SatreconError(
            f"--cell {config.cell} does not match the ground-truth grid cell {gt.spec.cell}"
        )
    method = _resolved(args, "sample", "auto")
    points = []
    for path in args.recon:
        mesh = fileio.load_ply(path)
        points.append(_sample_points(mesh, method, config.poisson_radius, config.seed))
    all_points = np.vstack([p for p in points if len(p)]) if points else np.empty((0, 3))
    recon = rasterize_height(all_points, gt.spec)
    if _resolved(args, "fill_holes", False):
        recon = fill_holes(recon)
    align = _resolved(args, "align", True)
    report = compute_metrics(
        recon,
        gt,
        completeness_threshold=config.completeness_threshold,
        align=align,
        search_cells=config.search_cells,
    )
    text = fileio.format_report(report)
    sys.stdout.write(text)
    if args.report:
        fileio.save_report(report, args.report)
    if args.error_raster:
        errors = error_grid(recon, gt, report.offset)
        save_raster(Raster(errors.heights), args.error_raster)
    return 0


def _cmd_synth(args) -> int:
    config = SynthConfig(
        boxes=int(_resolved(args, "boxes", 20)),
        cameras=int(_resolved(args, "cameras", 4)),
        image_size=int(_resolved(args, "size", 512)),
        extent=float(_resolved(args, "extent", 100.0)),
        cell=float(_resolved(args, "cell", DEFAULT_CELL)),
    )
    seed = int(_resolved(args, "seed", 0))
    scene = generate_synthetic_scene(config, seed=seed)
    paths = write_scene(scene, args.output)
    _info(
        f"synth: seed {seed}, {len(scene.boxes)} boxes, {len(scene.cameras)} cameras "
        f"-> {args.output}"
    )
    _info(f"synth: ground truth grid {paths['gt']}")
    return 0


_CONVERTERS = {
    (".png", ".srtk"): lambda src, dst: save_raster(fileio.load_png(src), dst),
    (".srtk", ".png"): lambda src, dst: fileio.save_png(load_raster(src), dst),
    (".pfm", ".srtk"): lambda src, dst: save_raster(fileio.load_pfm(src), dst),
    (".srtk", ".pfm"): lambda src, dst: fileio.save_pfm(load_raster(src), dst),
    (".ply", ".xyz"): lambda src, dst: _write_points(vertex_sample(fileio.load_ply(src)), dst),
    (".xyz", ".ply"): lambda src, dst: fileio.save_points_ply(_read_xyz(src), dst),
}


def _read_xyz(path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise SatreconError(f"{path}: xyz rows need three columns")
            rows.append([float(parts[0]), float(parts[1]), float(parts[2])])
    return np.asarray(rows, dtype=np.float64).reshape(-1, 3)


def _cmd_convert(args) -> int:
    src_ext = os.path.splitext(str(args.input))[1].lower()
    dst_ext = os.path.splitext(str(args.output))[1].lower()
    converter = _CONVERTERS.get((src_ext, dst_ext))
    if converter is None:
        supported = ", ".join(f"{a}->{b}" for a, b in sorted(_CONVERTERS))
        raise SatreconError(
            f"no converter for {src_ext or '<none>'} -> {dst_ext or '<none>'} (supported: {supported})"
        )
    converter(args.input, args.output)
    _info(f"convert: {args.input} -> {args.output}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satrecon",
        description="Satellite photogrammetry toolkit: preprocessing, skew "
        "correction, depth recovery and height-map evaluation.",
    )
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")

    def add(name, help_text, configure):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML file with flag defaults (flags override)")
        configure(p)
        return p

    def conf_aoi(p):
        p.add_argument("--image", required=True, help="input raster (.srtk)")
        p.add_argument("--camera", required=True, help="camera file with an rpc section")
        p.add_argument("--aoi", nargs=4, required=True, metavar=("EMIN", "NMIN", "EMAX", "NMAX"), help="UTM bounding box, meters")
        p.add_argument("--zone", required=True, type=int, help="UTM zone (1..60)")
        p.add_argument("--hemisphere", required=True, choices=("N", "S"), help="UTM hemisphere")
        p.add_argument("--height", type=float, help="projection reference height, meters (default 0)")
        p.add_argument("--metadata", help="scene metadata sidecar for cloud filtering")
        p.add_argument("--cloud-threshold", type=float, help="skip scenes above this cloud fraction (default 0.5)")
        p.add_argument("--output", required=True, help="cropped raster path")

    def conf_tonemap(p):
        p.add_argument("--input", required=True, help="HDR raster (.srtk)")
        p.add_argument("--output", required=True, help="output raster (.srtk) or .png")
        p.add_argument("--percentiles", help="clip percentiles LO,HI (default 0.5,99.5)")

    def conf_pansharpen(p):
        p.add_argument("--pan", required=True, help="panchromatic raster, 1 channel")
        p.add_argument("--msi", required=True, help="multispectral raster, 3 channels")
        p.add_argument("--output", required=True, help="sharpened raster path")
        p.add_argument("--weights", help="Brovey band weights R,G,B (default 1/3 each)")

    def conf_skew(p):
        p.add_argument("--camera", required=True, help="camera file with an fpc section")
        p.add_argument("--image", help="image raster to correct")
        p.add_argument("--output", help="corrected image path (default <image>_skewfree)")
        p.add_argument("--depth", help="depth-map raster to correct")
        p.add_argument("--proj", help="projection sidecar of the depth map")
        p.add_argument("--depth-output", help="corrected depth-map path (default <depth>_skewfree)")
        p.add_argument("--proj-output", help="sidecar path rebuilt for the corrected map (default <proj>_skewfree)")
        p.add_argument("--camera-output", help="write the skew-free camera file here")

    def conf_recover(p):
        p.add_argument("--depth", required=True, help="reparameterized depth map (.srtk)")
        p.add_argument("--proj", required=True, help="projection sidecar")
        p.add_argument("--output", help="metric depth map path (default <depth>_metric)")
        p.add_argument("--proj-output", help="sidecar path for the metric map")
        p.add_argument("--points-output", help="back-projected point cloud (.ply)")

    def conf_sample(p):
        p.add_argument("--mesh", required=True, help="ASCII PLY mesh")
        p.add_argument("--method", choices=("auto", "poisson", "vertex"), help="sampling method (default auto)")
        p.add_argument("--radius", type=float, help="poisson disk radius, meters (default 0.25)")
        p.add_argument("--seed", type=int, help="sampling seed (default 0)")
        p.add_argument("--output", required=True, help="points output (.ply or .xyz)")

    def conf_evaluate(p):
        p.add_argument("--recon", action="append", required=True, help="reconstruction PLY (repeatable)")
        p.add_argument("--gt", required=True, help="ground-truth height grid (.hgrid + .meta)")
        p.add_argument("--cell", type=float, help="expected grid cell size, meters (default 0.5)")
        p.add_argument("--sample", choices=("auto", "poisson", "vertex"), help="surface sampling (default auto)")
        p.add_argument("--radius", type=float, help="poisson disk radius (default 0.25)")
        p.add_argument("--seed", type=int, help="sampling seed (default 0)")
        p.add_argument("--threshold", type=float, help="completeness threshold, meters (default 1.0)")
        p.add_argument("--align", action=argparse.BooleanOptionalAction, help="refine alignment before scoring (default on)")
        p.add_argument("--search", type=int, help="alignment search window, cells (default 10)")
        p.add_argument("--fill-holes", action=argparse.BooleanOptionalAction, help="fill small holes in the rasterized reconstruction")
        p.add_argument("--report", help="also write the report to this YAML file")
        p.add_argument("--error-raster", help="write the signed per-cell error raster here")

    def conf_synth(p):
        p.add_argument("--output", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="scene seed (default 0)")
        p.add_argument("--boxes", type=int, help="number of boxes (default 20)")
        p.add_argument("--cameras", type=int, help="number of cameras (default 4)")
        p.add_argument("--size", type=int, help="image size in pixels (default 512)")
        p.add_argument("--extent", type=float, help="scene extent, meters (default 100)")
        p.add_argument("--cell", type=float, help="ground-truth cell size (default 0.5)")

    def conf_convert(p):
        p.add_argument("--input", required=True, help="source file")
        p.add_argument("--output", required=True, help="destination file (format from extension)")

    add("aoi-extract", "crop a raster to a UTM area of interest via its RPC", conf_aoi)
    add("tonemap", "percentile clip + gamma map an HDR raster to 8-bit range", conf_tonemap)
    add("pansharpen", "Brovey fusion of panchromatic and multispectral rasters", conf_pansharpen)
    add("skew-correct", "resample images/depth maps into the skew-free camera", conf_skew)
    add("depth-recover", "convert reparameterized depth maps to metric depth", conf_recover)
    add("sample-mesh", "sample points from a mesh surface", conf_sample)
    add("evaluate", "score a reconstruction against a ground-truth height grid", conf_evaluate)
    add("synth", "generate the synthetic test scene", conf_synth)
    add("convert", "convert between PNG/PFM/PLY/XYZ and the internal formats", conf_convert)
    return parser


_COMMANDS = {
    "aoi-extract": _cmd_aoi_extract,
    "tonemap": _cmd_tonemap,
    "pansharpen": _cmd_pansharpen,
    "skew-correct": _cmd_skew_correct,
    "depth-recover": _cmd_depth_recover,
    "sample-mesh": _cmd_sample_mesh,
    "evaluate": _cmd_evaluate,
    "synth": _cmd_synth,
    "convert": _cmd_convert,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = _merge_config(parser, args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except OSError as exc:
        _info(f"error: {exc}")
        return 1
    try:
        return _COMMANDS[args.command](args)
    except (SatreconError, ValueError, OSError) as exc:
        _info(f"error: {exc}")
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
