"""
🩸 VASCULAR FUNCTION TESTS

Curve features, automatic AIF/VOF selection and partial-volume scaling.
"""

import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from perfusion.exceptions import InsufficientCandidatesError, ZeroAreaError
from perfusion.services.phantom_sim import (
    AcquisitionConfig,
    GammaVariateParams,
    NoiseMotionConfig,
    TissueLabel,
    TissueParamField,
    builtin_stroke_scene,
    generate_phantom,
    brain_mask,
)
from perfusion.services.vascular_functions import (
    VascularFunctionExtractor,
    curve_features,
    enhancement,
    feature_table,
    pvc_scale_aif,
    select_aif,
    select_vof_with_voxels,
    write_voxel_list,
)
from perfusion.services.volume_model import BinaryMask, Curve, TimeSeriesVolume

ACQ = AcquisitionConfig(nt=60, dt=0.5)
BOLUS = GammaVariateParams()


def single_artery_scene():
    label = np.full((1, 10, 10), TissueLabel.TISSUE, dtype=np.uint8)
    label[0, 6, 3] = TissueLabel.ARTERY
    cbv = np.where(label == TissueLabel.TISSUE, 4.0, 0.0)
    mtt = np.where(label == TissueLabel.TISSUE, 4.0, 0.0)
    delay = np.where(label == TissueLabel.TISSUE, 0.5, 0.0)
    return TissueParamField(label=label, cbv=cbv, mtt=mtt, delay=delay)


class CurveFeatureTests(SimpleTestCase):
    def test_triangle(self):
        tac = Curve(samples=[0, 1, 2, 1, 0, 0, 0, 0], dt=1.0)
        features = curve_features(tac, baseline=0.0)
        self.assertEqual(features.peak, 2.0)
        self.assertEqual(features.ttp, 2.0)
        self.assertAlmostEqual(features.fwhm, 2.0)
        self.assertAlmostEqual(features.auc, 4.0)

    def test_flat_curve_is_flagged(self):
        features = curve_features(Curve(samples=np.full(10, 35.0), dt=0.5))
        self.assertTrue(features.flagged)
        self.assertEqual(features.peak, 0.0)
        self.assertEqual(features.fwhm, 0.0)
        self.assertFalse(features.scorable)

    def test_baseline_is_first_four_frames(self):
        samples = np.array([30, 32, 34, 36, 80, 40, 36, 36, 36, 36], dtype=float)
        features = curve_features(Curve(samples=samples, dt=1.0))
        self.assertEqual(features.baseline, 33.0)
        self.assertEqual(features.peak, 47.0)
        np.testing.assert_allclose(enhancement(samples)[:4], [-3, -1, 1, 3])

    def test_batch_matches_single(self):
        rng = np.random.default_rng(0)
        batch = rng.uniform(0, 50, size=(6, 12))
        table = feature_table(batch, 0.5)
        for row in range(6):
            single = curve_features(Curve(samples=batch[row], dt=0.5))
            self.assertAlmostEqual(table["fwhm"][row], single.fwhm)
            self.assertEqual(table["ttp"][row], single.ttp)


class AifSelectionTests(SimpleTestCase):
    def test_builtin_scene_picks_arteries(self):
        scene = builtin_stroke_scene(seed=0)
        vol = generate_phantom(scene, ACQ, BOLUS, NoiseMotionConfig())
        aif, voxels = select_aif(vol, brain_mask(scene), n=100)
        labels = scene.label[voxels["z"], voxels["y"], voxels["x"]]
        self.assertGreaterEqual(np.mean(labels == TissueLabel.ARTERY), 0.9)
        self.assertEqual(list(voxels.columns), ["x", "y", "z", "score"])
        self.assertGreater(aif.samples.max(), 0.8 * BOLUS.amplitude)

    def test_single_dominant_voxel(self):
        vol = generate_phantom(single_artery_scene(), ACQ, BOLUS, NoiseMotionConfig())
        _, voxels = select_aif(vol, None, n=1)
        self.assertEqual((int(voxels["x"][0]), int(voxels["y"][0])), (3, 6))

    def test_too_few_candidates(self):
        vol = generate_phantom(single_artery_scene(), ACQ, BOLUS, NoiseMotionConfig())
        mask = np.zeros((1, 10, 10), dtype=bool)
        mask[0, :2, :2] = True
        with self.assertRaises(InsufficientCandidatesError):
            select_aif(vol, BinaryMask(data=mask), n=5)

    def test_flat_volume_has_no_candidates(self):
        vol = TimeSeriesVolume(data=np.full((10, 1, 4, 4), 35.0), dt=0.5)
        with self.assertRaises(InsufficientCandidatesError):
            select_aif(vol, None, n=1)

    def test_vof_picks_the_vein(self):
        scene = builtin_stroke_scene(seed=1)
        vol = generate_phantom(scene, ACQ, BOLUS, NoiseMotionConfig())
        vein_count = int(scene.region(TissueLabel.VEIN).sum())
        vof, voxels = select_vof_with_voxels(vol, brain_mask(scene), n=min(20, vein_count))
        labels = scene.label[voxels["z"], voxels["y"], voxels["x"]]
        self.assertTrue(np.isin(labels, [TissueLabel.ARTERY, TissueLabel.VEIN]).all())
        self.assertGreater(vof.samples.max(), 0.0)


class PartialVolumeTests(SimpleTestCase):
    def test_scaled_area_matches_vof(self):
        aif = Curve(samples=[0, 2, 4, 2, 0, 0, 0, 0], dt=1.0)
        vof = Curve(samples=[0, 0, 4, 8, 4, 0, 0, 0], dt=1.0)
        scaled = pvc_scale_aif(aif, vof)
        np.testing.assert_allclose(scaled.samples, 2.0 * aif.samples)

    def test_zero_area(self):
        zero = Curve(samples=np.zeros(8), dt=1.0)
        with self.assertRaises(ZeroAreaError):
            pvc_scale_aif(zero, Curve(samples=np.ones(8), dt=1.0))
        with self.assertRaises(ZeroAreaError):
            pvc_scale_aif(Curve(samples=np.ones(8), dt=1.0), zero)

    def test_extractor_applies_pvc(self):
        scene = builtin_stroke_scene(seed=2)
        vol = generate_phantom(scene, ACQ, BOLUS, NoiseMotionConfig())
        result = VascularFunctionExtractor(aif_voxels=20, vof_voxels=20, pvc=True).extract(vol, brain_mask(scene))
        self.assertIsNot(result["fit_aif"], result["aif"])
        plain = VascularFunctionExtractor(aif_voxels=20, vof_voxels=20, pvc=False).extract(vol, brain_mask(scene))
        self.assertIs(plain["fit_aif"], plain["aif"])

    def test_voxel_list_csv(self):
        voxels = pd.DataFrame({"x": [1], "y": [2], "z": [0], "score": [0.5]})
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "aif_voxels.csv"
            write_voxel_list(voxels, path)
            self.assertEqual(path.read_text().splitlines()[0], "x,y,z,score")
