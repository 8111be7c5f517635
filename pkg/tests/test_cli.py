"""Tests for the command line front end."""

import io
import os
from contextlib import redirect_stdout

import numpy as np
import pytest
import yaml

from satrecon.camera import FpcCamera, FpcIntrinsics, decompose_skew
from satrecon.cli import main
from satrecon.evaluation import GridSpec, HeightGrid
from satrecon.fileio import (
    load_camera_file,
    load_height_grid,
    load_ply,
    load_projection_sidecar,
    save_camera_file,
    save_height_grid,
)
from satrecon.preprocess import pansharpen_brovey, tonemap
from satrecon.raster import Raster, load_raster, save_raster
from satrecon.synth import SynthConfig, generate_synthetic_scene, write_scene

from test_camera import constant_rpc
from test_preprocess import linear_rpc


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    scene = generate_synthetic_scene(SynthConfig(boxes=5, cameras=1, image_size=96), seed=4)
    write_scene(scene, out)
    return out, scene


def run_cli(*argv):
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = main(list(argv))
    return code, buf.getvalue()


class TestConsoleScript:
    def test_installed_entry_point(self):
        import shutil
        import subprocess

        exe = shutil.which("satrecon")
        if exe is None:
            pytest.skip("package not installed with console scripts")
        done = subprocess.run([exe, "--help"], capture_output=True, text=True)
        assert done.returncode == 0
        assert "SUBCOMMAND" in done.stdout


class TestUsageErrors:
    def test_unknown_subcommand(self):
        code, _ = run_cli("frobnicate")
        assert code == 2

    def test_unknown_flag(self):
        code, _ = run_cli("tonemap", "--input", "x", "--output", "y", "--bogus")
        assert code == 2

    def test_no_subcommand(self):
        code, _ = run_cli()
        assert code == 2

    def test_missing_file_is_domain_error(self, tmp_path):
        code, _ = run_cli(
            "tonemap", "--input", str(tmp_path / "missing.srtk"), "--output", str(tmp_path / "o.srtk")
        )
        assert code == 1

    def test_help_exits_zero(self):
        code, _ = run_cli("--help")
        assert code == 0


class TestTonemapCommand:
    def test_matches_library(self, tmp_path):
        rng = np.random.default_rng(0)
        raster = Raster(rng.uniform(0, 4000, size=(12, 12)).astype(np.float32))
        src = tmp_path / "in.srtk"
        dst = tmp_path / "out.srtk"
        save_raster(raster, src)
        code, _ = run_cli("tonemap", "--input", str(src), "--output", str(dst))
        assert code == 0
        expected = tonemap(raster)
        assert load_raster(dst).data.tobytes() == expected.data.tobytes()

    def test_png_output(self, tmp_path):
        raster = Raster(np.linspace(0, 999, 64, dtype=np.float32).reshape(8, 8))
        src = tmp_path / "in.srtk"
        dst = tmp_path / "out.png"
        save_raster(raster, src)
        code, _ = run_cli("tonemap", "--input", str(src), "--output", str(dst))
        assert code == 0
        assert dst.exists()


class TestPansharpenCommand:
    def test_matches_library(self, tmp_path):
        rng = np.random.default_rng(1)
        pan = Raster(rng.uniform(1, 100, size=(8, 8)).astype(np.float32))
        msi = Raster(rng.uniform(1, 50, size=(4, 4, 3)).astype(np.float32))
        pan_path, msi_path, out_path = (tmp_path / n for n in ("p.srtk", "m.srtk", "o.srtk"))
        save_raster(pan, pan_path)
        save_raster(msi, msi_path)
        code, _ = run_cli(
            "pansharpen", "--pan", str(pan_path), "--msi", str(msi_path),
            "--output", str(out_path), "--weights", "0.5,0.25,0.25",
        )
        assert code == 0
        expected = pansharpen_brovey(pan, msi, weights=(0.5, 0.25, 0.25))
        assert load_raster(out_path).data.tobytes() == expected.data.tobytes()


class TestAoiExtractCommand:
    def test_crops_to_projected_box(self, tmp_path):
        from satrecon.geodesy import geodetic_to_utm

        rpc = linear_rpc()
        cam_path = tmp_path / "cam.yaml"
        save_camera_file(cam_path, rpc=rpc)
        raster = Raster(np.arange(2200 * 2200, dtype=np.float32).reshape(2200, 2200) % 991)
        img_path = tmp_path / "img.srtk"
        save_raster(raster, img_path)
        e0, n0, _, _ = geodetic_to_utm(0.001, 3.0, zone=31)
        out_path = tmp_path / "crop.srtk"
        code, _ = run_cli(
            "aoi-extract", "--image", str(img_path), "--camera", str(cam_path),
            "--aoi", str(e0), str(n0), str(e0 + 400.0), str(n0 + 300.0),
            "--zone", "31", "--hemisphere", "N", "--output", str(out_path),
        )
        assert code == 0
        crop = load_raster(out_path)
        assert 0 < crop.width < 2200 and 0 < crop.height < 2200

    def test_cloud_threshold_skips_cloudy_scene(self, tmp_path, capsys):
        from satrecon.fileio import save_scene_metadata
        from satrecon.preprocess import SceneMetadata

        rpc = linear_rpc()
        cam_path = tmp_path / "cam.yaml"
        save_camera_file(cam_path, rpc=rpc)
        img_path = tmp_path / "img.srtk"
        save_raster(Raster(np.zeros((64, 64), dtype=np.float32)), img_path)
        meta_path = tmp_path / "meta.yaml"
        save_scene_metadata(SceneMetadata(image_id="cloudy", cloud_cover=0.62), meta_path)
        out_path = tmp_path / "crop.srtk"
        code = main([
            "aoi-extract", "--image", str(img_path), "--camera", str(cam_path),
            "--aoi", "100", "100", "200", "200", "--zone", "31", "--hemisphere", "N",
            "--metadata", str(meta_path), "--output", str(out_path),
        ])
        assert code == 0
        assert not out_path.exists()
        assert "cloud cover" in capsys.readouterr().err
        # exactly at the threshold the scene is retained (and then fails on
        # geometry, which proves it was not filtered)
        save_scene_metadata(SceneMetadata(image_id="edge", cloud_cover=0.5), meta_path)
        code = main([
            "aoi-extract", "--image", str(img_path), "--camera", str(cam_path),
            "--aoi", "100", "100", "200", "200", "--zone", "31", "--hemisphere", "N",
            "--metadata", str(meta_path), "--output", str(out_path),
        ])
        assert code == 1

    def test_outside_image_fails(self, tmp_path):
        rpc = constant_rpc()  # projects everything to one far-away point
        cam_path = tmp_path / "cam.yaml"
        save_camera_file(cam_path, rpc=rpc)
        raster = Raster(np.zeros((10, 10), dtype=np.float32))
        img_path = tmp_path / "img.srtk"
        save_raster(raster, img_path)
        code, _ = run_cli(
            "aoi-extract", "--image", str(img_path), "--camera", str(cam_path),
            "--aoi", "100", "100", "200", "200",
            "--zone", "31", "--hemisphere", "N", "--output", str(tmp_path / "c.srtk"),
        )
        assert code == 1


class TestSkewCorrectCommand:
    def test_zero_skew_message_and_interior_identity(self, tmp_path, capsys):
        cam = FpcCamera(
            intrinsics=FpcIntrinsics(fx=50.0, fy=50.0, s=0.0, px=8.0, py=8.0),
            rotation=np.eye(3),
            translation=np.zeros(3),
        )
        cam_path = tmp_path / "cam.yaml"
        save_camera_file(cam_path, fpc=cam)
        rng = np.random.default_rng(2)
        raster = Raster(rng.normal(size=(16, 16)).astype(np.float32))
        img_path = tmp_path / "img.srtk"
        save_raster(raster, img_path)
        out_path = tmp_path / "img_s.srtk"
        code = main([
            "skew-correct", "--camera", str(cam_path),
            "--image", str(img_path), "--output", str(out_path),
        ])
        assert code == 0
        err = capsys.readouterr().err
        assert "skew = 0" in err
        assert load_raster(out_path).data.tobytes() == raster.data.tobytes()

    def test_full_camera_pipeline_matches_library(self, scene_dir, tmp_path):
        out, scene = scene_dir
        cid = "cam0"
        code, _ = run_cli(
            "skew-correct", "--camera", str(out / f"{cid}.yaml"),
            "--image", str(out / f"{cid}_pan.srtk"), "--output", str(tmp_path / "pan_s.srtk"),
            "--depth", str(out / f"{cid}_depth_m.srtk"), "--proj", str(out / f"{cid}_proj.yaml"),
            "--depth-output", str(tmp_path / "m_s.srtk"), "--proj-output", str(tmp_path / "proj_s.yaml"),
            "--camera-output", str(tmp_path / "cam_s.yaml"),
        )
        assert code == 0
        cam_s = load_camera_file(tmp_path / "cam_s.yaml")["fpc"]
        dec = decompose_skew(scene.cameras[0].intrinsics)
        assert cam_s.intrinsics == dec.k_s
        rp_s, kind, camera_id = load_projection_sidecar(tmp_path / "proj_s.yaml")
        assert kind == "m" and camera_id == cid
        # the rewritten sidecar projects like the transformed original
        expected = dec.t_sp_inv() @ scene.projections[0].p3x4()
        assert np.max(np.abs(rp_s.p3x4() - expected)) < 1e-6 * np.max(np.abs(expected))

    def test_nothing_to_do_is_domain_error(self, scene_dir, tmp_path):
        out, _ = scene_dir
        code, _ = run_cli("skew-correct", "--camera", str(out / "cam0.yaml"))
        assert code == 1

    def test_default_output_paths(self, scene_dir, tmp_path):
        # the bare two-flag invocation works and derives its output name
        out, _ = scene_dir
        img = tmp_path / "img.srtk"
        save_raster(Raster(np.ones((8, 8), dtype=np.float32)), img)
        code, _ = run_cli("skew-correct", "--camera", str(out / "cam0.yaml"), "--image", str(img))
        assert code == 0
        assert (tmp_path / "img_skewfree.srtk").exists()


class TestDepthRecoverCommand:
    def test_round_trips_synth_depth(self, scene_dir, tmp_path):
        # recovering the unwarped reparameterized map must reproduce the
        # renderer's metric depth to float32 precision
        out, scene = scene_dir
        code, _ = run_cli(
            "depth-recover",
            "--depth", str(out / "cam0_depth_m.srtk"),
            "--proj", str(out / "cam0_proj.yaml"),
            "--output", str(tmp_path / "z.srtk"),
        )
        assert code == 0
        recovered = load_raster(tmp_path / "z.srtk").data[:, :, 0].astype(np.float64)
        expected = scene.depth_maps_z[0].raster.data[:, :, 0].astype(np.float64)
        rel = np.abs(recovered - expected) / expected
        assert np.nanmax(rel) <= 1e-6

    def test_points_output(self, scene_dir, tmp_path):
        out, _ = scene_dir
        pts_path = tmp_path / "pts.ply"
        code, _ = run_cli(
            "depth-recover",
            "--depth", str(out / "cam0_depth_m.srtk"),
            "--proj", str(out / "cam0_proj.yaml"),
            "--points-output", str(pts_path),
        )
        assert code == 0
        cloud = load_ply(pts_path)
        assert cloud.vertex_count > 1000

    def test_default_output_path(self, scene_dir, tmp_path):
        out, _ = scene_dir
        depth = tmp_path / "m.srtk"
        proj = tmp_path / "proj.yaml"
        depth.write_bytes((out / "cam0_depth_m.srtk").read_bytes())
        proj.write_bytes((out / "cam0_proj.yaml").read_bytes())
        code, _ = run_cli("depth-recover", "--depth", str(depth), "--proj", str(proj))
        assert code == 0
        assert (tmp_path / "m_metric.srtk").exists()

    def test_metric_sidecar_rejected(self, scene_dir, tmp_path):
        out, scene = scene_dir
        from satrecon.fileio import save_projection_sidecar

        bad = tmp_path / "z_proj.yaml"
        save_projection_sidecar(scene.projections[0], bad, kind="z", camera_id="cam0")
        code, _ = run_cli(
            "depth-recover", "--depth", str(out / "cam0_depth_m.srtk"),
            "--proj", str(bad), "--output", str(tmp_path / "z.srtk"),
        )
        assert code == 1


class TestSampleMeshCommand:
    def test_vertex_sampling(self, scene_dir, tmp_path):
        out, scene = scene_dir
        dst = tmp_path / "v.xyz"
        code, _ = run_cli(
            "sample-mesh", "--mesh", str(out / "scene_mesh.ply"),
            "--method", "vertex", "--output", str(dst),
        )
        assert code == 0
        rows = dst.read_text().strip().splitlines()
        assert len(rows) == scene.mesh.vertex_count

    def test_poisson_deterministic(self, scene_dir, tmp_path):
        out, _ = scene_dir
        a = tmp_path / "a.ply"
        b = tmp_path / "b.ply"
        for dst in (a, b):
            code, _ = run_cli(
                "sample-mesh", "--mesh", str(out / "scene_mesh.ply"),
                "--method", "poisson", "--radius", "4.0", "--seed", "5",
                "--output", str(dst),
            )
            assert code == 0
        assert a.read_bytes() == b.read_bytes()


class TestEvaluateCommand:
    def test_happy_path_writes_report(self, tmp_path):
        spec = GridSpec(origin_e=0.0, origin_n=0.0, cell=0.5, nx=8, ny=8)
        heights = np.full((8, 8), 3.0, dtype=np.float32)
        gt = HeightGrid(spec, heights)
        gt_path = tmp_path / "gt.hgrid"
        save_height_grid(gt, gt_path)
        # a flat point cloud at the same height
        xs, ys = np.meshgrid(np.arange(0.25, 4.0, 0.5), np.arange(0.25, 4.0, 0.5))
        pts = np.column_stack([xs.ravel(), ys.ravel(), np.full(xs.size, 3.0)])
        recon_path = tmp_path / "recon.ply"
        from satrecon.fileio import save_points_ply

        save_points_ply(pts, recon_path)
        report_path = tmp_path / "report.yaml"
        code, out = run_cli(
            "evaluate", "--recon", str(recon_path), "--gt", str(gt_path),
            "--cell", "0.5", "--report", str(report_path),
        )
        assert code == 0
        doc = yaml.safe_load(out)
        assert doc["completeness"] == 100.0
        assert doc["median_error"] == 0.0
        assert report_path.exists()

    def test_cell_mismatch_is_domain_error(self, tmp_path):
        spec = GridSpec(origin_e=0.0, origin_n=0.0, cell=0.5, nx=4, ny=4)
        gt = HeightGrid(spec, np.zeros((4, 4), dtype=np.float32))
        gt_path = tmp_path / "gt.hgrid"
        save_height_grid(gt, gt_path)
        from satrecon.fileio import save_points_ply

        recon_path = tmp_path / "r.ply"
        save_points_ply(np.array([[0.1, 0.1, 0.0]]), recon_path)
        code, _ = run_cli(
            "evaluate", "--recon", str(recon_path), "--gt", str(gt_path), "--cell", "1.0"
        )
        assert code == 1

    def test_fill_holes_flag_rescues_missing_cells(self, tmp_path):
        from satrecon.fileio import save_points_ply

        spec = GridSpec(origin_e=0.0, origin_n=0.0, cell=0.5, nx=5, ny=5)
        gt = HeightGrid(spec, np.full((5, 5), 2.0, dtype=np.float32))
        gt_path = tmp_path / "gt.hgrid"
        save_height_grid(gt, gt_path)
        # one point per cell except the center
        xs, ys = np.meshgrid(np.arange(0.25, 2.5, 0.5), np.arange(0.25, 2.5, 0.5))
        pts = np.column_stack([xs.ravel(), ys.ravel(), np.full(xs.size, 2.0)])
        pts = pts[~((np.abs(pts[:, 0] - 1.25) < 0.1) & (np.abs(pts[:, 1] - 1.25) < 0.1))]
        recon_path = tmp_path / "r.ply"
        save_points_ply(pts, recon_path)
        base = ("evaluate", "--recon", str(recon_path), "--gt", str(gt_path), "--no-align")
        code, out = run_cli(*base)
        assert code == 0
        assert yaml.safe_load(out)["completeness"] == pytest.approx(100.0 * 24 / 25)
        code, out = run_cli(*base, "--fill-holes")
        assert code == 0
        assert yaml.safe_load(out)["completeness"] == 100.0

    def test_error_raster_output(self, tmp_path):
        spec = GridSpec(origin_e=0.0, origin_n=0.0, cell=0.5, nx=4, ny=4)
        gt = HeightGrid(spec, np.zeros((4, 4), dtype=np.float32))
        gt_path = tmp_path / "gt.hgrid"
        save_height_grid(gt, gt_path)
        from satrecon.fileio import save_points_ply

        pts = np.array([[0.25, 0.25, 0.5], [1.25, 0.25, 0.0]])
        recon_path = tmp_path / "r.ply"
        save_points_ply(pts, recon_path)
        err_path = tmp_path / "err.srtk"
        code, _ = run_cli(
            "evaluate", "--recon", str(recon_path), "--gt", str(gt_path),
            "--no-align", "--error-raster", str(err_path),
        )
        assert code == 0
        err = load_raster(err_path)
        assert err.data[0, 0, 0] == pytest.approx(0.5)
        assert err.data[0, 2, 0] == pytest.approx(0.0)


class TestSynthCommand:
    def test_writes_scene(self, tmp_path):
        out = tmp_path / "scene"
        code, _ = run_cli(
            "synth", "--output", str(out), "--seed", "1",
            "--boxes", "4", "--cameras", "1", "--size", "64",
        )
        assert code == 0
        assert (out / "scene_mesh.ply").exists()
        assert (out / "gt_heights.hgrid").exists()
        assert (out / "cam0.yaml").exists()
        grid = load_height_grid(out / "gt_heights.hgrid")
        assert grid.spec.cell == 0.5


class TestConvertCommand:
    def test_srtk_png_cycle(self, tmp_path):
        raster = Raster(np.arange(16, dtype=np.float32).reshape(4, 4) * 10.0)
        src = tmp_path / "a.srtk"
        save_raster(raster, src)
        png = tmp_path / "a.png"
        back = tmp_path / "b.srtk"
        assert run_cli("convert", "--input", str(src), "--output", str(png))[0] == 0
        assert run_cli("convert", "--input", str(png), "--output", str(back))[0] == 0
        assert np.array_equal(load_raster(back).data, raster.data)

    def test_srtk_pfm_cycle(self, tmp_path):
        raster = Raster(np.linspace(-5, 5, 24).reshape(4, 6).astype(np.float32))
        src = tmp_path / "d.srtk"
        save_raster(raster, src)
        pfm = tmp_path / "d.pfm"
        back = tmp_path / "e.srtk"
        assert run_cli("convert", "--input", str(src), "--output", str(pfm))[0] == 0
        assert run_cli("convert", "--input", str(pfm), "--output", str(back))[0] == 0
        assert load_raster(back).data.tobytes() == raster.data.tobytes()

    def test_ply_xyz_cycle(self, tmp_path):
        pts = np.array([[1.0, 2.0, 3.0], [4.5, 5.5, 6.5]])
        from satrecon.fileio import save_points_ply

        ply = tmp_path / "p.ply"
        xyz = tmp_path / "p.xyz"
        ply2 = tmp_path / "q.ply"
        save_points_ply(pts, ply)
        assert run_cli("convert", "--input", str(ply), "--output", str(xyz))[0] == 0
        assert run_cli("convert", "--input", str(xyz), "--output", str(ply2))[0] == 0
        assert np.array_equal(load_ply(ply2).vertices, pts)

    def test_unsupported_pair(self, tmp_path):
        code, _ = run_cli("convert", "--input", "a.txt", "--output", "b.bin")
        assert code == 1


class TestPipelineConfig:
    def test_valid_defaults(self):
        from satrecon.cli import PipelineConfig

        config = PipelineConfig()
        assert config.cell == 0.5
        assert config.poisson_radius == 0.25
        assert config.completeness_threshold == 1.0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"cloud_threshold": 1.5},
            {"percentiles": (99.0, 1.0)},
            {"weights": (0.0, 0.0, 0.0)},
            {"weights": (-1.0, 1.0, 1.0)},
            {"poisson_radius": 0.0},
            {"cell": -0.5},
            {"completeness_threshold": 0.0},
            {"search_cells": -1},
        ],
    )
    def test_rejects_out_of_range_parameters(self, kwargs):
        from satrecon.cli import PipelineConfig

        with pytest.raises(ValueError):
            PipelineConfig(**kwargs)


class TestConfigFile:
    def test_config_supplies_defaults_and_flags_override(self, tmp_path):
        rng = np.random.default_rng(3)
        raster = Raster(rng.uniform(0, 1000, size=(10, 10)).astype(np.float32))
        src = tmp_path / "in.srtk"
        save_raster(raster, src)
        config = tmp_path / "run.yaml"
        config.write_text("percentiles: '5,95'\n")
        out_a = tmp_path / "a.srtk"
        out_b = tmp_path / "b.srtk"
        # config alone
        code, _ = run_cli(
            "tonemap", "--config", str(config), "--input", str(src), "--output", str(out_a)
        )
        assert code == 0
        assert load_raster(out_a).data.tobytes() == tonemap(raster, lo=5.0, hi=95.0).data.tobytes()
        # explicit flag wins over the config value
        code, _ = run_cli(
            "tonemap", "--config", str(config), "--input", str(src),
            "--output", str(out_b), "--percentiles", "10,90",
        )
        assert code == 0
        assert load_raster(out_b).data.tobytes() == tonemap(raster, lo=10.0, hi=90.0).data.tobytes()

    def test_unknown_config_key_is_usage_error(self, tmp_path):
        config = tmp_path / "run.yaml"
        config.write_text("bogus_key: 1\n")
        code, _ = run_cli(
            "tonemap", "--config", str(config), "--input", "x.srtk", "--output", "y.srtk"
        )
        assert code == 2
