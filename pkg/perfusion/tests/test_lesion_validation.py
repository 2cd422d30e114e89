"""
🎯 LESION VALIDATION TESTS

Segmentation rule, overlap and volume metrics, cohort statistics and reports.
"""

import json
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from perfusion.exceptions import (
    ArtifactIOError,
    CohortExcludedError,
    InvariantViolationError,
    ShapeMismatchError,
    UndefinedDiceError,
    ZeroVarianceError,
)
from perfusion.services.lesion_validation import (
    NORMAL_PERFUSION,
    REPORT_COLUMNS,
    CaseResult,
    CohortCase,
    LesionValidator,
    SegmentationThresholds,
    dice,
    evaluate_cohort,
    healthy_reference,
    lesion_statistics,
    pearson,
    pearson_test,
    remove_small_components,
    segment,
    volume_ml,
    write_report,
)
from perfusion.services.phantom_sim import (
    AcquisitionConfig,
    GammaVariateParams,
    TimeGrid,
    TissueLabel,
    brain_mask,
    builtin_stroke_scene,
    gamma_variate,
    ground_truth_maps,
    lesion_masks,
    parenchyma_mask,
)
from perfusion.services.volume_model import BinaryMask, MapKind, ParametricMap, write_map, write_mask

SHAPE = (1, 16, 16)


def lesion_maps(core_at=(6, 6), core_size=3, penumbra_half=3, healthy=False):
    cbv = np.full(SHAPE, 4.0)
    cbf = np.full(SHAPE, 60.0)
    ttp = np.full(SHAPE, 10.0)
    if not healthy:
        cy, cx = core_at
        centre_y, centre_x = cy + core_size // 2, cx + core_size // 2
        ttp[0, centre_y - penumbra_half - 1:centre_y + penumbra_half + 2,
            centre_x - penumbra_half - 1:centre_x + penumbra_half + 2] = 16.0
        cbv[0, cy:cy + core_size, cx:cx + core_size] = 1.0
        cbf[0, cy:cy + core_size, cx:cx + core_size] = 6.0
    return {
        MapKind.CBV: ParametricMap(kind=MapKind.CBV, data=cbv),
        MapKind.CBF: ParametricMap(kind=MapKind.CBF, data=cbf),
        MapKind.TTP: ParametricMap(kind=MapKind.TTP, data=ttp),
    }


def whole_brain():
    return BinaryMask(data=np.ones(SHAPE, dtype=bool))


def mask_from(indices, shape=(1, 4, 4)):
    data = np.zeros(shape, dtype=bool)
    for index in indices:
        data[(0,) + index] = True
    return BinaryMask(data=data)


class DiceAndVolumeTests(SimpleTestCase):
    def test_half_overlap(self):
        a = mask_from([(0, 0), (0, 1), (1, 0), (1, 1)])
        b = mask_from([(1, 0), (1, 1), (2, 0), (2, 1)])
        self.assertEqual(dice(a, b), 0.5)
        self.assertEqual(dice(b, a), 0.5)
        self.assertEqual(dice(a, a), 1.0)

    def test_disjoint_and_one_empty(self):
        a = mask_from([(0, 0)])
        self.assertEqual(dice(a, mask_from([(3, 3)])), 0.0)
        self.assertEqual(dice(a, mask_from([])), 0.0)

    def test_both_empty_is_undefined(self):
        with self.assertRaises(UndefinedDiceError):
            dice(mask_from([]), mask_from([]))

    def test_geometry_must_match(self):
        with self.assertRaises(ShapeMismatchError):
            dice(mask_from([(0, 0)]), mask_from([(0, 0)], shape=(1, 4, 5)))

    def test_volume_in_millilitres(self):
        mask = BinaryMask(data=np.ones((10, 10, 10), dtype=bool))
        self.assertEqual(volume_ml(mask), 1.0)
        self.assertEqual(volume_ml(mask, spacing=(1.0, 1.0, 5.0)), 5.0)


class PearsonTests(SimpleTestCase):
    def test_matches_two_pass_formula(self):
        xs, ys = np.array([1.0, 2.0, 3.0]), np.array([2.0, 4.0, 6.1])
        dx, dy = xs - xs.mean(), ys - ys.mean()
        oracle = (dx * dy).sum() / np.sqrt((dx * dx).sum() * (dy * dy).sum())
        self.assertAlmostEqual(pearson(xs, ys), oracle, delta=1e-12)

    def test_perfect_correlation(self):
        self.assertEqual(pearson([1, 2, 3, 4], [3, 5, 7, 9]), 1.0)
        self.assertEqual(pearson([1, 2, 3, 4], [9, 7, 5, 3]), -1.0)

    def test_affine_copies_are_exactly_unit(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            xs = rng.normal(size=int(rng.integers(3, 200)))
            scale, offset = rng.uniform(0.5, 10.0), rng.uniform(-5.0, 5.0)
            self.assertEqual(pearson(xs, xs), 1.0)
            self.assertEqual(pearson(xs, scale * xs + offset), 1.0)
            self.assertEqual(pearson(xs, -scale * xs + offset), -1.0)
        r, p = pearson_test(xs, xs)
        self.assertEqual((r, p), (1.0, 0.0))

    def test_p_value(self):
        r, p = pearson_test([1, 2, 3, 4, 5], [1.1, 1.9, 3.2, 3.9, 5.1])
        self.assertGreater(r, 0.99)
        self.assertLess(p, 0.01)

    def test_degenerate_samples(self):
        with self.assertRaises(ZeroVarianceError):
            pearson([1, 1, 1], [1, 2, 3])
        with self.assertRaises(InvariantViolationError):
            pearson([1, 2], [1, 2])
        with self.assertRaises(InvariantViolationError):
            pearson([1, 2, 3], [1, 2])


class SegmentationTests(SimpleTestCase):
    def test_synthetic_lesion(self):
        core, penumbra = segment(lesion_maps(), whole_brain(), SegmentationThresholds())
        self.assertEqual(core.count, 9)
        self.assertEqual(penumbra.count, 81 - 9)
        self.assertFalse((core.data & penumbra.data).any())

    def test_healthy_maps_give_empty_masks(self):
        core, penumbra = segment(lesion_maps(healthy=True), whole_brain())
        self.assertTrue(core.is_empty())
        self.assertTrue(penumbra.is_empty())

    def test_small_components_are_dropped(self):
        mask = np.zeros((1, 8, 8), dtype=bool)
        mask[0, 0, 0] = True
        mask[0, 4:7, 4:7] = True
        cleaned = remove_small_components(mask, 5)
        self.assertFalse(cleaned[0, 0, 0])
        self.assertEqual(int(cleaned.sum()), 9)

    def test_penumbra_cbf_qualifier(self):
        thr = SegmentationThresholds(penumbra_cbf_fraction=0.5)
        _, penumbra = segment(lesion_maps(), whole_brain(), thr)
        self.assertTrue(penumbra.is_empty())

    def test_missing_map(self):
        maps = lesion_maps()
        del maps[MapKind.TTP]
        with self.assertRaises(InvariantViolationError):
            segment(maps, whole_brain())

    def test_mask_shape_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            segment(lesion_maps(), BinaryMask(data=np.ones((1, 8, 8), dtype=bool)))

    def test_phantom_truth(self):
        scene = builtin_stroke_scene(seed=3, jitter=0.0)
        aif = gamma_variate(GammaVariateParams(), TimeGrid(AcquisitionConfig().nt, 0.5))
        truth = ground_truth_maps(scene, aif)
        core, penumbra = segment(truth, parenchyma_mask(scene))
        true_core, true_penumbra = lesion_masks(scene)
        self.assertGreaterEqual(dice(core, true_core), 0.8)
        self.assertGreaterEqual(dice(penumbra, true_penumbra), 0.8)
        self.assertFalse((core.data & penumbra.data).any())

    def test_phantom_healthy_scene(self):
        scene = builtin_stroke_scene(seed=3, healthy=True)
        aif = gamma_variate(GammaVariateParams(), TimeGrid(89, 0.5))
        core, penumbra = segment(ground_truth_maps(scene, aif), parenchyma_mask(scene))
        self.assertTrue(core.is_empty() and penumbra.is_empty())

    def test_vessels_stay_out_of_the_tissue_reference(self):
        scene = builtin_stroke_scene(seed=3, healthy=True)
        truth = ground_truth_maps(scene, gamma_variate(GammaVariateParams(), TimeGrid(89, 0.5)))
        vessels = np.isin(scene.label, [int(TissueLabel.ARTERY), int(TissueLabel.VEIN)])
        ttp = truth[MapKind.TTP].data

        whole = healthy_reference(ttp, brain_mask(scene).data, 4.0)
        tissue = healthy_reference(ttp, parenchyma_mask(scene).data, 4.0)
        self.assertTrue((whole & vessels).any())
        self.assertFalse((tissue & vessels).any())

        # vessels carry zero CBV and CBF, so a brain-mask segmentation calls them core
        core, _ = segment(truth, brain_mask(scene))
        self.assertTrue((core.data & vessels).any())
        core, _ = segment(truth, parenchyma_mask(scene))
        self.assertTrue(core.is_empty())


class CohortTests(SimpleTestCase):
    def _case(self, case_id, reference, test=None):
        return CohortCase(case_id=case_id, reference_maps=reference, test_maps=test or reference, brain_mask=whole_brain())

    def test_identical_maps_score_one(self):
        cases = [self._case(f"case_{i}", lesion_maps(penumbra_half=2 + i)) for i in range(3)]
        report = evaluate_cohort(cases)
        self.assertEqual(report.summary["core"]["dice_mean"], 1.0)
        self.assertEqual(report.summary["penumbra"]["dice_mean"], 1.0)
        self.assertEqual(report.summary["core"]["dice_sd"], 0.0)
        self.assertEqual(report.n_excluded, 0)

    def test_healthy_cases_are_excluded(self):
        cases = [self._case(f"lesion_{i}", lesion_maps(penumbra_half=2 + i)) for i in range(3)]
        cases += [self._case(f"normal_{i}", lesion_maps(healthy=True)) for i in range(3)]
        report = evaluate_cohort(cases)
        self.assertEqual(report.excluded_cases, ["normal_0", "normal_1", "normal_2"])
        self.assertTrue(all(r.reason == NORMAL_PERFUSION for r in report.cases if r.excluded))
        self.assertEqual(report.summary["core"]["n"], 3)

    def test_all_healthy_raises(self):
        cases = [self._case(f"normal_{i}", lesion_maps(healthy=True)) for i in range(3)]
        with self.assertRaises(CohortExcludedError):
            evaluate_cohort(cases)

    def test_cohort_needs_three_cases(self):
        with self.assertRaises(InvariantViolationError):
            evaluate_cohort([self._case("a", lesion_maps()), self._case("b", lesion_maps())])

    def test_duplicate_ids(self):
        with self.assertRaises(InvariantViolationError):
            evaluate_cohort([self._case("a", lesion_maps()) for _ in range(3)])

    def test_order_does_not_matter(self):
        cases = [
            self._case(f"case_{i}", lesion_maps(penumbra_half=1 + i), lesion_maps(core_at=(6, 6 + i % 2), penumbra_half=1 + i))
            for i in range(4)
        ]
        forward = evaluate_cohort(cases).to_dict()
        backward = evaluate_cohort(list(reversed(cases))).to_dict()
        self.assertEqual(forward, backward)
        self.assertLess(forward["summary"]["core"]["dice_min"], 1.0)

    def test_statistics_by_hand(self):
        results = [
            CaseResult(f"c{i}", dice_core=d, dice_penumbra=None, vol_core_gt_ml=g, vol_core_test_ml=t,
                       vol_pen_gt_ml=0.0, vol_pen_test_ml=0.0)
            for i, (d, g, t) in enumerate([(0.8, 1.0, 1.1), (0.6, 2.0, 2.0), (1.0, 3.0, 2.9), (0.6, 4.0, 4.2)])
        ]
        results.append(CaseResult("normal", None, None, 0.0, 0.0, 0.0, 0.0, excluded=True, reason=NORMAL_PERFUSION))
        block = lesion_statistics(results, "core")
        self.assertEqual(block["n"], 4)
        self.assertAlmostEqual(block["dice_mean"], 0.75)
        self.assertAlmostEqual(block["dice_sd"], np.sqrt(0.11 / 3))
        self.assertEqual((block["dice_min"], block["dice_max"]), (0.6, 1.0))
        expected_r = np.corrcoef([1.0, 2.0, 3.0, 4.0], [1.1, 2.0, 2.9, 4.2])[0, 1]
        self.assertAlmostEqual(block["pearson_r"], expected_r, places=12)

        empty = lesion_statistics(results, "penumbra")
        self.assertEqual(empty["n"], 0)
        self.assertIsNone(empty["dice_mean"])

    def test_constant_volumes_leave_pearson_empty(self):
        cases = [self._case(f"case_{i}", lesion_maps()) for i in range(3)]
        block = evaluate_cohort(cases).summary["core"]
        self.assertEqual(block["dice_mean"], 1.0)
        self.assertIsNone(block["pearson_r"])

    def test_case_result_bounds(self):
        with self.assertRaises(InvariantViolationError):
            CaseResult("x", 1.2, None, 0.0, 0.0, 0.0, 0.0)


class ReportTests(SimpleTestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def _write_case(self, root, case_id, maps):
        case_dir = root / case_id
        for kind, pmap in maps.items():
            write_map(pmap, case_dir / kind.value)
        write_mask(whole_brain(), case_dir / "brain_mask")

    def test_report_files(self):
        cases = [CohortCase(f"case_{i}", lesion_maps(penumbra_half=2 + i), lesion_maps(penumbra_half=2 + i), whole_brain())
                 for i in range(3)]
        report = evaluate_cohort(cases)
        write_report(report, self.root / "validation")
        table = pd.read_csv(self.root / "validation" / "report.csv")
        self.assertEqual(list(table.columns), REPORT_COLUMNS)
        self.assertEqual(len(table), 3)
        payload = json.loads((self.root / "validation" / "report.json").read_text())
        self.assertEqual(payload["n_cases"], 3)
        self.assertIn("thresholds", payload)

    def test_validator_reads_directories(self):
        for i in range(3):
            self._write_case(self.root / "reference", f"case_{i}", lesion_maps(penumbra_half=2 + i))
            self._write_case(self.root / "test", f"case_{i}", lesion_maps(penumbra_half=2 + i))
        report = LesionValidator().validate(self.root / "reference", self.root / "test", out_dir=self.root / "out")
        self.assertEqual(report.n_cases, 3)
        self.assertEqual(report.summary["penumbra"]["dice_mean"], 1.0)
        self.assertTrue((self.root / "out" / "report.json").exists())

    def test_missing_case_directory(self):
        for i in range(3):
            self._write_case(self.root / "reference", f"case_{i}", lesion_maps())
        self._write_case(self.root / "test", "case_9", lesion_maps())
        with self.assertRaises(ArtifactIOError):
            LesionValidator().validate(self.root / "reference", self.root / "test")
