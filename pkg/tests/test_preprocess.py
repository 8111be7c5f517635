"""Tests for cloud filtering, AOI projection, tone mapping and PAN-sharpening."""

import math

import numpy as np
import pytest

from satrecon.errors import EmptyIntersectionError
from satrecon.geodesy import geodetic_to_utm, utm_to_geodetic
from satrecon.preprocess import (
    AoiBox,
    SceneMetadata,
    aoi_to_pixel_bbox,
    filter_by_cloud_cover,
    pansharpen_brovey,
    percentile_clip,
    tonemap,
)
from satrecon.raster import Raster

from test_camera import constant_rpc


def sorted_percentile_oracle(values, percentile):
    """Independent nearest-rank percentile on a plain sorted list."""
    ordered = sorted(values)
    idx = math.floor((len(ordered) - 1) * percentile / 100.0 + 0.5)
    return ordered[idx]


class TestCloudFilter:
    def test_above_threshold_excluded(self):
        scenes = [SceneMetadata(image_id="a", cloud_cover=0.6)]
        assert filter_by_cloud_cover(scenes) == []

    def test_exactly_at_threshold_retained(self):
        scenes = [SceneMetadata(image_id="a", cloud_cover=0.5)]
        assert filter_by_cloud_cover(scenes) == scenes

    def test_empty_input(self):
        assert filter_by_cloud_cover([]) == []

    def test_is_order_preserving_sublist(self):
        rng = np.random.default_rng(0)
        scenes = [
            SceneMetadata(image_id=f"s{i}", cloud_cover=float(rng.random()))
            for i in range(40)
        ]
        kept = filter_by_cloud_cover(scenes, threshold=0.4)
        assert all(s.cloud_cover <= 0.4 for s in kept)
        it = iter(scenes)
        assert all(s in it for s in kept)  # kept is a subsequence

    def test_rejects_bad_cloud_cover(self):
        with pytest.raises(ValueError):
            SceneMetadata(image_id="a", cloud_cover=1.5)


def linear_rpc(scale_px_per_deg=1000.0):
    """RPC that is an exact axis-aligned linear map of lon/lat."""
    samp_num = [0.0] * 20
    samp_num[1] = 1.0  # sample tracks normalized lon
    line_num = [0.0] * 20
    line_num[2] = 1.0  # line tracks normalized lat
    den = [0.0] * 20
    den[0] = 1.0
    return constant_rpc(
        samp_num=samp_num,
        samp_den=den,
        line_num=line_num,
        line_den=den,
        lat_off=0.0,
        lat_scale=1.0,
        lon_off=3.0,
        lon_scale=1.0,
        height_off=0.0,
        height_scale=100.0,
        samp_off=2000.0,
        samp_scale=scale_px_per_deg,
        line_off=2000.0,
        line_scale=-scale_px_per_deg,
    )


class TestAoiToPixelBbox:
    def setup_method(self):
        self.rpc = linear_rpc()
        # a small AOI near the zone-31 central meridian at the equator
        e0, n0, _, _ = geodetic_to_utm(0.001, 3.0, zone=31)
        self.aoi = AoiBox(
            easting_min=e0,
            northing_min=n0,
            easting_max=e0 + 500.0,
            northing_max=n0 + 400.0,
            zone=31,
            hemisphere="N",
        )

    def test_matches_hand_mapped_rectangle(self):
        samples = []
        lines = []
        for e, n in self.aoi.corners():
            lat, lon = utm_to_geodetic(e, n, 31, "N")
            samples.append(2000.0 + 1000.0 * (lon - 3.0))
            lines.append(2000.0 - 1000.0 * lat)
        expected = (
            math.floor(min(samples)),
            math.floor(min(lines)),
            math.ceil(max(samples)),
            math.ceil(max(lines)),
        )
        assert aoi_to_pixel_bbox(self.rpc, self.aoi) == expected

    def test_degenerate_point_aoi_gives_single_pixel(self):
        # off the integer pixel lattice, so the hull of a point is one pixel
        aoi = AoiBox(
            easting_min=self.aoi.easting_min + 13.7,
            northing_min=self.aoi.northing_min + 21.3,
            easting_max=self.aoi.easting_min + 13.7 + 1e-9,
            northing_max=self.aoi.northing_min + 21.3 + 1e-9,
            zone=31,
            hemisphere="N",
        )
        x0, y0, x1, y1 = aoi_to_pixel_bbox(self.rpc, aoi)
        assert x1 - x0 == 1 and y1 - y0 == 1

    def test_clamps_to_image(self):
        x0, y0, x1, y1 = aoi_to_pixel_bbox(
            self.rpc, self.aoi, image_width=2002, image_height=2002
        )
        assert (x1 <= 2002) and (y1 <= 2002) and x0 >= 0 and y0 >= 0

    def test_outside_image_raises(self):
        with pytest.raises(EmptyIntersectionError):
            aoi_to_pixel_bbox(self.rpc, self.aoi, image_width=100, image_height=100)

    def test_rejects_inverted_box(self):
        with pytest.raises(ValueError):
            AoiBox(
                easting_min=10.0,
                northing_min=0.0,
                easting_max=5.0,
                northing_max=1.0,
                zone=31,
                hemisphere="N",
            )


class TestPercentileClip:
    def test_constant_raster_unchanged(self):
        r = Raster(np.full((4, 4), 7.0, dtype=np.float32))
        out = percentile_clip(r)
        assert np.array_equal(out.data, r.data)

    def test_ramp_clips_to_expected_bounds(self):
        values = np.arange(1000, dtype=np.float32).reshape(25, 40)
        out = percentile_clip(Raster(values), lo=0.5, hi=99.5)
        assert out.data.min() == 5.0
        assert out.data.max() == 994.0
        # interior values untouched
        assert out.data[0, 10, 0] == 10.0

    def test_matches_sort_based_oracle(self):
        rng = np.random.default_rng(1)
        values = rng.normal(scale=500.0, size=(30, 30)).astype(np.float32)
        out = percentile_clip(Raster(values), lo=2.0, hi=98.0)
        lo_expected = sorted_percentile_oracle(values.ravel().tolist(), 2.0)
        hi_expected = sorted_percentile_oracle(values.ravel().tolist(), 98.0)
        expected = np.clip(values, lo_expected, hi_expected)
        assert np.max(np.abs(out.data[:, :, 0] - expected)) < 1e-6

    def test_channels_are_independent(self):
        # each channel must be clamped at its own percentile bounds, so the
        # outliers in channel 2 cannot shift channel 1's clip levels
        rng = np.random.default_rng(2)
        clean = rng.uniform(10.0, 20.0, size=(10, 10)).astype(np.float32)
        dirty = clean.copy()
        dirty[0, 0] = 1e6
        dirty[9, 9] = -1e6
        stacked = np.stack([clean, dirty], axis=-1)
        out = percentile_clip(Raster(stacked), lo=5.0, hi=95.0)
        for c, plane in ((0, clean), (1, dirty)):
            lo_c = sorted_percentile_oracle(plane.ravel().tolist(), 5.0)
            hi_c = sorted_percentile_oracle(plane.ravel().tolist(), 95.0)
            assert np.array_equal(out.data[:, :, c], np.clip(plane, lo_c, hi_c))
        assert out.data[0, 0, 1] < 1e6
        assert out.data[0, 0, 0] == clean[0, 0]

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        values = rng.normal(size=(20, 20)).astype(np.float32)
        once = percentile_clip(Raster(values))
        twice = percentile_clip(once)
        assert np.array_equal(once.data, twice.data)

    def test_nodata_ignored_and_preserved(self):
        values = np.arange(100, dtype=np.float32).reshape(10, 10)
        values[0, 0] = np.nan
        out = percentile_clip(Raster(values), lo=10.0, hi=90.0)
        assert np.isnan(out.data[0, 0, 0])

    def test_all_nodata_channel_is_an_error(self):
        values = np.full((3, 3), np.nan, dtype=np.float32)
        with pytest.raises(ValueError):
            percentile_clip(Raster(values))

    def test_rejects_bad_bounds(self):
        r = Raster(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            percentile_clip(r, lo=60.0, hi=40.0)


class TestTonemap:
    def test_anchors(self):
        # values 0..2 with full-range percentiles: normalized 0, 0.5, 1
        values = np.array([[0.0, 1.0, 2.0]], dtype=np.float32)
        out = tonemap(Raster(values), lo=0.0, hi=100.0)
        assert out.data[0, 0, 0] == 0.0
        assert out.data[0, 1, 0] == 186.0  # round(255 * 0.5 ** (1/2.2))
        assert out.data[0, 2, 0] == 255.0

    def test_output_range_and_integrality(self):
        rng = np.random.default_rng(4)
        values = rng.uniform(0.0, 4000.0, size=(16, 16, 3)).astype(np.float32)
        out = tonemap(Raster(values))
        assert out.data.min() >= 0.0
        assert out.data.max() <= 255.0
        assert np.array_equal(out.data, np.round(out.data))

    def test_monotone_within_channel(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            values = rng.uniform(0.0, 1000.0, size=(12, 12)).astype(np.float32)
            out = tonemap(Raster(values))
            flat_in = values.ravel()
            flat_out = out.data.ravel()
            order = np.argsort(flat_in, kind="stable")
            diffs = np.diff(flat_out[order])
            assert (diffs >= 0).all()

    def test_constant_channel_maps_to_zero(self):
        out = tonemap(Raster(np.full((3, 3), 42.0, dtype=np.float32)))
        assert (out.data == 0.0).all()

    def test_nodata_preserved(self):
        values = np.arange(100, dtype=np.float32).reshape(10, 10)
        values[3, 3] = np.nan
        out = tonemap(Raster(values))
        assert np.isnan(out.data[3, 3, 0])


class TestBrovey:
    def test_equal_channels_reproduce_pan(self):
        rng = np.random.default_rng(6)
        pan = rng.uniform(1.0, 100.0, size=(8, 8)).astype(np.float32)
        band = rng.uniform(1.0, 50.0, size=(8, 8)).astype(np.float32)
        msi = np.stack([band, band, band], axis=-1)
        out = pansharpen_brovey(Raster(pan), Raster(msi))
        for c in range(3):
            assert np.max(np.abs(out.data[:, :, c] - pan)) < 1e-6 * np.max(pan)

    def test_hand_computed_example(self):
        pan = Raster(np.full((2, 2), 8.0, dtype=np.float32))
        msi = Raster(
            np.stack(
                [
                    np.full((2, 2), 2.0, dtype=np.float32),
                    np.full((2, 2), 4.0, dtype=np.float32),
                    np.full((2, 2), 6.0, dtype=np.float32),
                ],
                axis=-1,
            )
        )
        out = pansharpen_brovey(pan, msi, weights=(1 / 3, 1 / 3, 1 / 3))
        assert out.data[0, 0].tolist() == pytest.approx([4.0, 8.0, 12.0], rel=1e-6)

    def test_zero_intensity_pixel_becomes_nodata(self):
        pan = Raster(np.full((2, 2), 8.0, dtype=np.float32))
        bands = np.full((2, 2, 3), 5.0, dtype=np.float32)
        bands[0, 0, :] = 0.0
        out = pansharpen_brovey(pan, Raster(bands))
        assert np.isnan(out.data[0, 0]).all()
        assert not np.isnan(out.data[1, 1]).any()

    def test_weight_rescaling_invariance(self):
        rng = np.random.default_rng(7)
        pan = Raster(rng.uniform(1.0, 10.0, size=(6, 6)).astype(np.float32))
        msi = Raster(rng.uniform(1.0, 10.0, size=(6, 6, 3)).astype(np.float32))
        a = pansharpen_brovey(pan, msi, weights=(0.2, 0.3, 0.5))
        b = pansharpen_brovey(pan, msi, weights=(2.0, 3.0, 5.0))
        assert np.max(np.abs(a.data - b.data)) < 1e-12 * np.max(np.abs(a.data))

    def test_chromatic_ratios_preserved(self):
        rng = np.random.default_rng(8)
        pan = Raster(rng.uniform(1.0, 10.0, size=(6, 6)).astype(np.float32))
        msi_values = rng.uniform(1.0, 10.0, size=(6, 6, 3)).astype(np.float32)
        out = pansharpen_brovey(pan, Raster(msi_values), weights=(0.5, 0.25, 0.25))
        ratio_in = msi_values[:, :, 0] / msi_values[:, :, 1]
        ratio_out = out.data[:, :, 0] / out.data[:, :, 1]
        assert np.max(np.abs(ratio_in - ratio_out)) < 1e-6 * np.max(np.abs(ratio_in))

    def test_upsamples_low_resolution_msi(self):
        pan = Raster(np.full((8, 8), 6.0, dtype=np.float32))
        msi = Raster(np.full((2, 2, 3), 3.0, dtype=np.float32))
        out = pansharpen_brovey(pan, msi)
        assert out.width == 8 and out.height == 8
        # constant msi upsamples exactly, so the ratio identity still holds
        assert np.max(np.abs(out.data - 6.0)) < 1e-6

    def test_rejects_all_zero_weights(self):
        pan = Raster(np.ones((4, 4), dtype=np.float32))
        msi = Raster(np.ones((4, 4, 3), dtype=np.float32))
        with pytest.raises(ValueError):
            pansharpen_brovey(pan, msi, weights=(0.0, 0.0, 0.0))

    def test_rejects_wrong_channel_counts(self):
        with pytest.raises(ValueError):
            pansharpen_brovey(
                Raster(np.ones((4, 4, 3))), Raster(np.ones((4, 4, 3)))
            )
        with pytest.raises(ValueError):
            pansharpen_brovey(Raster(np.ones((4, 4))), Raster(np.ones((4, 4))))
