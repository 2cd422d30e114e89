"""
🧪 VOLUME MODEL TESTS

Type invariants, normalization and the raw + JSON sidecar formats.
"""

import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from perfusion.exceptions import (
    InvariantViolationError,
    NonFiniteValueError,
    NormalizationError,
    PayloadLengthError,
    SidecarDecodeError,
    UnsupportedVersionError,
)
from perfusion.services.volume_model import (
    BinaryMask,
    Curve,
    MapKind,
    ParametricMap,
    TimeSeriesVolume,
    default_norm_range,
    denormalize_map,
    normalize_map,
    read_curve,
    read_labels,
    read_map,
    read_mask,
    read_volume,
    write_curve,
    write_map,
    write_mask,
    write_volume,
)


class TimeSeriesVolumeTests(SimpleTestCase):
    def test_dims_are_reported_x_fastest(self):
        vol = TimeSeriesVolume(data=np.zeros((5, 1, 3, 4)), dt=0.5)
        self.assertEqual(vol.dims, (4, 3, 1, 5))
        self.assertEqual(vol.nt, 5)

    def test_rejects_single_frame(self):
        with self.assertRaises(InvariantViolationError):
            TimeSeriesVolume(data=np.zeros((1, 1, 2, 2)))

    def test_rejects_non_positive_dt_and_spacing(self):
        with self.assertRaises(InvariantViolationError):
            TimeSeriesVolume(data=np.zeros((2, 1, 2, 2)), dt=0.0)
        with self.assertRaises(InvariantViolationError):
            TimeSeriesVolume(data=np.zeros((2, 1, 2, 2)), spacing=(1.0, 0.0, 1.0))

    def test_data_is_read_only(self):
        vol = TimeSeriesVolume(data=np.zeros((2, 1, 2, 2)))
        with self.assertRaises(ValueError):
            vol.data[0, 0, 0, 0] = 1.0

    def test_voxel_curves_order(self):
        data = np.arange(2 * 1 * 2 * 3, dtype=np.float32).reshape(2, 1, 2, 3)
        curves = TimeSeriesVolume(data=data).voxel_curves()
        self.assertEqual(curves.shape, (6, 2))
        np.testing.assert_array_equal(curves[1], [1.0, 7.0])


class MapAndMaskTests(SimpleTestCase):
    def test_negative_map_values_are_rejected(self):
        with self.assertRaises(InvariantViolationError):
            ParametricMap(kind=MapKind.CBV, data=-np.ones((1, 2, 2)))

    def test_units_follow_kind(self):
        self.assertEqual(ParametricMap(kind="CBF", data=np.zeros((1, 2, 2))).units, "ml/100g/min")
        self.assertEqual(ParametricMap(kind="TTP", data=np.zeros((1, 2, 2))).units, "s")

    def test_normalized_map_cannot_exceed_one(self):
        with self.assertRaises(InvariantViolationError):
            ParametricMap(kind=MapKind.CBV, data=np.full((1, 1, 1), 1.5), norm_range=(0, 8))

    def test_mask_values_must_be_binary(self):
        with self.assertRaises(InvariantViolationError):
            BinaryMask(data=np.full((1, 2, 2), 2))
        self.assertEqual(BinaryMask(data=np.ones((1, 2, 2))).count, 4)


class NormalizationTests(SimpleTestCase):
    def _map(self, values, kind=MapKind.CBV):
        return ParametricMap(kind=kind, data=np.asarray(values, dtype=np.float64).reshape(1, 1, -1))

    def test_endpoints_and_clamping(self):
        normalized = normalize_map(self._map([0.0, 8.0, 18.0]), (0.0, 8.0))
        np.testing.assert_array_equal(normalized.data.reshape(-1), [0.0, 1.0, 1.0])
        self.assertEqual(normalized.norm_range, (0.0, 8.0))

    def test_zero_map_stays_zero(self):
        normalized = normalize_map(self._map(np.zeros(4)))
        self.assertFalse(normalized.data.any())

    def test_reversed_range_is_rejected(self):
        with self.assertRaises(NormalizationError):
            normalize_map(self._map([1.0]), (8.0, 0.0))

    def test_denormalize(self):
        normalized = ParametricMap(kind=MapKind.CBV, data=np.full((1, 1, 1), 0.5), norm_range=(0.0, 8.0))
        self.assertAlmostEqual(float(denormalize_map(normalized).data[0, 0, 0]), 4.0)
        with self.assertRaises(NormalizationError):
            denormalize_map(self._map([1.0]))

    def test_round_trip_in_range(self):
        values = np.random.default_rng(3).uniform(0.0, 100.0, size=50)
        pmap = self._map(values, MapKind.CBF)
        restored = denormalize_map(normalize_map(pmap))
        self.assertLess(np.abs(restored.data - pmap.data).max(), 1e-5 * 100.0)

    def test_normalize_is_idempotent(self):
        once = normalize_map(self._map([1.0, 2.0, 3.0]))
        self.assertEqual(normalize_map(once), once)

    def test_default_ranges(self):
        self.assertEqual(default_norm_range(MapKind.CBV), (0.0, 8.0))
        self.assertEqual(default_norm_range(MapKind.TTP), (0.0, 40.0))


class ArtifactIOTests(SimpleTestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def test_zero_volume_round_trip(self):
        vol = TimeSeriesVolume(data=np.zeros((5, 1, 4, 4)), spacing=(1.0, 1.0, 5.0), dt=0.5)
        write_volume(vol, self.root / "vol")
        self.assertEqual(read_volume(self.root / "vol"), vol)

    def test_payload_size(self):
        vol = TimeSeriesVolume(data=np.arange(8, dtype=np.float32).reshape(2, 1, 2, 2))
        write_volume(vol, self.root / "vol")
        self.assertEqual((self.root / "vol.f32raw").stat().st_size, 32)
        sidecar = json.loads((self.root / "vol.json").read_text())
        self.assertEqual(sidecar["dims"], [2, 2, 1, 2])
        np.testing.assert_array_equal(read_volume(self.root / "vol").data.reshape(-1), np.arange(8))

    def test_nan_volume_is_not_serialized(self):
        data = np.zeros((2, 1, 2, 2))
        data[1, 0, 1, 1] = np.nan
        with self.assertRaises(NonFiniteValueError):
            write_volume(TimeSeriesVolume(data=data), self.root / "nan")

    def test_truncated_payload(self):
        write_volume(TimeSeriesVolume(data=np.ones((2, 1, 2, 2))), self.root / "vol")
        raw = (self.root / "vol.f32raw").read_bytes()
        (self.root / "vol.f32raw").write_bytes(raw[:-4])
        with self.assertRaises(PayloadLengthError):
            read_volume(self.root / "vol")

    def test_unknown_version_and_malformed_json(self):
        write_volume(TimeSeriesVolume(data=np.ones((2, 1, 2, 2))), self.root / "vol")
        sidecar = json.loads((self.root / "vol.json").read_text())
        sidecar["format_version"] = "2"
        (self.root / "vol.json").write_text(json.dumps(sidecar))
        with self.assertRaises(UnsupportedVersionError):
            read_volume(self.root / "vol")
        (self.root / "vol.json").write_text("{not json")
        with self.assertRaises(SidecarDecodeError):
            read_volume(self.root / "vol")

    def test_write_read_write_is_byte_identical(self):
        pmap = ParametricMap(kind=MapKind.TTP, data=np.linspace(0, 30, 12).reshape(1, 3, 4), spacing=(1, 1, 5))
        write_map(pmap, self.root / "a")
        write_map(read_map(self.root / "a"), self.root / "b")
        for suffix in (".f32raw", ".json"):
            self.assertEqual((self.root / f"a{suffix}").read_bytes(), (self.root / f"b{suffix}").read_bytes())

    def test_map_kind_is_checked(self):
        write_map(ParametricMap(kind=MapKind.CBV, data=np.zeros((1, 2, 2))), self.root / "cbv")
        with self.assertRaises(SidecarDecodeError):
            read_map(self.root / "cbv", kind=MapKind.CBF)

    def test_mask_and_labels(self):
        mask = BinaryMask(data=np.eye(3, dtype=bool)[None], spacing=(1, 1, 5))
        write_mask(mask, self.root / "mask")
        self.assertEqual(read_mask(self.root / "mask"), mask)

        labels = np.array([[[0, 3], [4, 5]]], dtype=np.uint8)
        write_mask(BinaryMask(data=labels > 0), self.root / "labels", kind="LABELS", values=labels)
        restored, values = read_labels(self.root / "labels")
        np.testing.assert_array_equal(values, labels)
        self.assertEqual(restored.count, 3)

    def test_curve_csv(self):
        curve = Curve(samples=[0.0, 1.5, 3.0, 1.0], dt=0.5)
        write_curve(curve, self.root / "aif.csv")
        self.assertEqual((self.root / "aif.csv").read_text().splitlines()[0], "t_s,value")
        restored = read_curve(self.root / "aif.csv")
        self.assertEqual(restored.dt, 0.5)
        np.testing.assert_allclose(restored.samples, curve.samples)
