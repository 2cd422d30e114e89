"""
🔁 PIPELINE TESTS

Stage functions over case directories, the management commands, the queued
experiment run and one small end-to-end experiment.
"""

import json
import tempfile
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase

from perfusion.exceptions import ArtifactIOError, InvariantViolationError
from perfusion.management.commands.infer import Command as InferCommand
from perfusion.models import ExperimentRun
from perfusion.services.phantom_sim import AcquisitionConfig, TissueLabel, load_scene
from perfusion.services.pipeline import (
    ExperimentConfig,
    ExperimentPipeline,
    FitOptions,
    SimulationPlan,
    case_dirs,
    case_name,
    case_seed,
    collect_samples,
    fit_case,
    healthy_indices,
    infer_case,
    load_fit_case,
    simulate_cohort,
)
from perfusion.services.map_regressor import InputNormalization, UNet, UNetConfig
from perfusion.services.volume_model import BinaryMask, MapKind, ParametricMap, read_map, read_mask, write_map, write_mask
from perfusion.tasks import run_experiment

ACQ = AcquisitionConfig(nt=50, dt=0.5)
FAST_FIT = FitOptions(threads=1, fit_overrides=(("refine", False),))


def small_plan(**overrides):
    values = dict(n_cases=3, healthy_cases=1, nx=32, ny=32, seed=7, acquisition=ACQ)
    values.update(overrides)
    return SimulationPlan(**values)


class CaseNamingTests(SimpleTestCase):
    def test_case_name(self):
        self.assertEqual(case_name(3), "case_0003")

    def test_case_seeds_are_distinct_and_stable(self):
        seeds = [case_seed(0, i) for i in range(20)]
        self.assertEqual(len(set(seeds)), 20)
        self.assertEqual(seeds, [case_seed(0, i) for i in range(20)])
        self.assertNotEqual(case_seed(0, 1), case_seed(1, 1))

    def test_healthy_indices(self):
        chosen = healthy_indices(10, 3, seed=4)
        self.assertEqual(len(chosen), 3)
        self.assertTrue(all(0 <= i < 10 for i in chosen))
        self.assertEqual(chosen, healthy_indices(10, 3, seed=4))
        with self.assertRaises(InvariantViolationError):
            healthy_indices(2, 3, seed=0)

    def test_case_dirs_missing_root(self):
        with self.assertRaises(ArtifactIOError):
            case_dirs("/nonexistent/cases")


class SimulateCohortTests(SimpleTestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def test_layout_and_healthy_count(self):
        written = simulate_cohort(small_plan(), self.root / "cases")
        self.assertEqual([p.name for p in written], ["case_0000", "case_0001", "case_0002"])
        healthy = 0
        for case_dir in written:
            self.assertTrue((case_dir / "volume.f32raw").exists())
            self.assertTrue((case_dir / "aif.csv").exists())
            scene = load_scene(case_dir / "scene.json")
            healthy += int(not (scene.label == TissueLabel.CORE).any())
        self.assertEqual(healthy, 1)

    def test_same_seed_gives_identical_volumes(self):
        first = simulate_cohort(small_plan(n_cases=2), self.root / "a")
        second = simulate_cohort(small_plan(n_cases=2), self.root / "b")
        for a, b in zip(first, second):
            self.assertEqual((a / "volume.f32raw").read_bytes(), (b / "volume.f32raw").read_bytes())

    def test_first_index_offsets_names(self):
        written = simulate_cohort(small_plan(n_cases=1, healthy_cases=0, first_index=5), self.root / "cases")
        self.assertEqual(written[0].name, "case_0005")

    def test_empty_plan(self):
        with self.assertRaises(InvariantViolationError):
            small_plan(n_cases=0)


class FitCaseTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls._tmp = tempfile.TemporaryDirectory()
        cls.root = Path(cls._tmp.name)
        cls.cases = simulate_cohort(small_plan(n_cases=2, healthy_cases=0), cls.root / "cases")
        cls.summary = fit_case(cls.cases[0], cls.root / "fit" / "case_0000", FAST_FIT)

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()
        super().tearDownClass()

    def test_outputs(self):
        out = self.root / "fit" / "case_0000"
        for name in ("preprocessed.f32raw", "brain_mask.u8raw", "shifts.csv", "aif.csv", "vof.csv",
                     "aif_voxels.csv", "vof_voxels.csv", "fit_status.u8raw", "summary.json"):
            self.assertTrue((out / name).exists(), name)
        for kind in MapKind:
            self.assertTrue((out / f"{kind.value}.f32raw").exists(), kind)

    def test_tissue_mask_leaves_out_vessels(self):
        tissue = read_mask(self.root / "fit" / "case_0000" / "tissue_mask")
        label = load_scene(self.cases[0] / "scene.json").label
        vessels = np.isin(label, [int(TissueLabel.ARTERY), int(TissueLabel.VEIN)])
        self.assertTrue(vessels.any())
        self.assertFalse((tissue.data & vessels).any())
        self.assertTrue(tissue.data[label == int(TissueLabel.TISSUE)].all())

    def test_summary(self):
        self.assertEqual(self.summary["case"], "case_0000")
        self.assertEqual(self.summary["aif_source"], "auto")
        self.assertTrue(self.summary["registered"])
        on_disk = json.loads((self.root / "fit" / "case_0000" / "summary.json").read_text())
        self.assertEqual(on_disk["voxels_total"], self.summary["voxels_total"])

    def test_shift_log_has_every_frame(self):
        shifts = pd.read_csv(self.root / "fit" / "case_0000" / "shifts.csv")
        self.assertEqual(len(shifts), ACQ.nt)

    def test_maps_are_nonnegative(self):
        for kind in (MapKind.CBV, MapKind.CBF, MapKind.MTT):
            data = read_map(self.root / "fit" / "case_0000" / kind.value).data
            self.assertTrue((data >= 0).all())

    def test_generator_aif_and_svd(self):
        options = FitOptions(threads=1, aif_source="generator", svd=True, register=False, smooth=False,
                             fit_overrides=(("refine", False),))
        out = self.root / "fit_generator"
        summary = fit_case(self.cases[1], out, options)
        self.assertEqual(summary["aif_source"], "generator")
        self.assertTrue((out / "CBV_svd.f32raw").exists())
        self.assertFalse((out / "shifts.csv").exists())

    def test_unknown_aif_source(self):
        with self.assertRaises(InvariantViolationError):
            FitOptions(aif_source="manual")

    def test_samples_and_inference(self):
        vol, maps, mask = load_fit_case(self.root / "fit" / "case_0000")
        self.assertEqual(vol.nt, ACQ.nt)
        self.assertEqual(set(maps), {MapKind.CBV, MapKind.CBF, MapKind.TTP})
        self.assertGreater(mask.count, 0)

        model = UNet(UNetConfig.for_frames(ACQ.nt, seed=0, depth=1, base_channels=2))
        samples = collect_samples([self.root / "fit" / "case_0000"], InputNormalization.for_config(model.config))
        self.assertEqual(len(samples), 1)

        predicted = infer_case(model, self.cases[0], self.root / "infer" / "case_0000")
        self.assertEqual(set(predicted), {MapKind.CBV, MapKind.CBF, MapKind.TTP, MapKind.MTT})
        self.assertTrue((self.root / "infer" / "case_0000" / "CBV.f32raw").exists())


class CommandTests(SimpleTestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def _simulate(self, out_dir, **extra):
        call_command("simulate", cases=2, nx=32, ny=32, nt=50, seed=3, threads=1, out_dir=str(out_dir), **extra)

    def test_simulate_is_reproducible(self):
        self._simulate(self.root / "a")
        self._simulate(self.root / "b")
        for name in ("case_0000", "case_0001"):
            a = (self.root / "a" / "cases" / name / "volume.f32raw").read_bytes()
            b = (self.root / "b" / "cases" / name / "volume.f32raw").read_bytes()
            self.assertEqual(a, b)
        record = json.loads((self.root / "a" / "run.json").read_text())
        self.assertEqual(record["command"], "simulate")
        self.assertEqual(record["options"]["seed"], 3)

    def test_simulate_rejects_tiny_matrix(self):
        with self.assertRaises(CommandError) as ctx:
            call_command("simulate", nx=16, ny=16, threads=1, out_dir=str(self.root))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_fit_missing_cases(self):
        with self.assertRaises(CommandError) as ctx:
            call_command("fit", threads=1, out_dir=str(self.root / "empty"))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_fit_unknown_case_name(self):
        self._simulate(self.root)
        with self.assertRaises(CommandError) as ctx:
            call_command("fit", case=["case_0042"], threads=1, out_dir=str(self.root))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_train_needs_validation_cases(self):
        with self.assertRaises(CommandError):
            call_command("train", "--train", "case_0000", threads=1, out_dir=str(self.root))

    def test_validate_needs_three_cases(self):
        for root in ("reference", "test"):
            for i in range(2):
                case_dir = self.root / root / f"case_{i}"
                for kind in (MapKind.CBV, MapKind.CBF, MapKind.TTP):
                    write_map(ParametricMap(kind=kind, data=np.full((1, 8, 8), 4.0)), case_dir / kind.value)
                write_mask(BinaryMask(data=np.ones((1, 8, 8), dtype=bool)), case_dir / "tissue_mask")
        with self.assertRaises(CommandError) as ctx:
            call_command("validate", reference=str(self.root / "reference"), test=str(self.root / "test"),
                         threads=1, out_dir=str(self.root / "out"))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_infer_takes_no_aif(self):
        parser = InferCommand().create_parser("manage.py", "infer")
        flags = [flag for action in parser._actions for flag in action.option_strings]
        self.assertIn("--model", flags)
        self.assertFalse(any("aif" in flag or "vof" in flag for flag in flags))


class ExperimentConfigTests(SimpleTestCase):
    def test_every_split_needs_a_case(self):
        with self.assertRaises(InvariantViolationError):
            ExperimentConfig(test_cases=0)

    def test_healthy_fraction_range(self):
        with self.assertRaises(InvariantViolationError):
            ExperimentConfig(healthy_fraction=1.0)
        self.assertEqual(ExperimentConfig(healthy_fraction=0.2).healthy_count(12), 2)

    def test_from_dict_ignores_unknown_keys(self):
        config = ExperimentConfig.from_dict({"seed": 9, "run_id": "x"})
        self.assertEqual(config.seed, 9)
        self.assertEqual(ExperimentConfig.from_dict(config.to_dict()), config)


class ExperimentRunTests(TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def test_status_transitions(self):
        run = ExperimentRun.objects.create(config={"seed": 5})
        self.assertEqual(run.status, "pending")
        self.assertIn("seed 5", str(run))

        run.mark_in_progress()
        self.assertIsNotNone(run.started_at)
        run.mark_completed({"final_val_mse": 0.01})
        run.refresh_from_db()
        self.assertEqual(run.status, "completed")
        self.assertEqual(run.result["final_val_mse"], 0.01)

        run.mark_failed("boom")
        self.assertEqual(run.result, {"error": "boom"})

    def test_task_with_unknown_run(self):
        self.assertIsNone(run_experiment("00000000-0000-0000-0000-000000000000"))

    def test_task_marks_invalid_config_failed(self):
        run = ExperimentRun.objects.create(config={"out_dir": str(self.root), "train_cases": 0})
        self.assertIsNone(run_experiment(str(run.id)))
        run.refresh_from_db()
        self.assertEqual(run.status, "failed")
        self.assertIn("train_cases", run.result["error"])

    @patch("perfusion.tasks.ExperimentPipeline")
    def test_task_stores_result(self, pipeline):
        pipeline.return_value.run.return_value = {"final_val_mse": 0.02}
        run = ExperimentRun.objects.create(config={"out_dir": str(self.root), "seed": 1})
        self.assertEqual(run_experiment(str(run.id)), str(run.id))
        run.refresh_from_db()
        self.assertEqual(run.status, "completed")
        self.assertEqual(run.result, {"final_val_mse": 0.02})
        self.assertEqual(pipeline.call_args.args[0].seed, 1)
        self.assertTrue((self.root / "run.json").exists())

    @patch("perfusion.management.commands.pipeline.run_experiment")
    def test_pipeline_queue(self, task):
        call_command("pipeline", queue=True, threads=1, seed=4, out_dir=str(self.root))
        run = ExperimentRun.objects.get()
        self.assertEqual(run.config["seed"], 4)
        task.delay.assert_called_once_with(str(run.id))


class ExperimentPipelineTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls._tmp = tempfile.TemporaryDirectory()
        cls.root = Path(cls._tmp.name)
        config = ExperimentConfig(
            out_dir=str(cls.root), seed=0, threads=1, train_cases=2, val_cases=1, test_cases=3,
            healthy_fraction=0.0, nx=32, ny=32, nt=50, epochs=2, depth=1, base_channels=2, refine=False,
        )
        cls.result = ExperimentPipeline(config).run()

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()
        super().tearDownClass()

    def test_splits_are_disjoint(self):
        splits = self.result["splits"]
        self.assertEqual(splits["train"], ["case_0000", "case_0001"])
        self.assertEqual(splits["val"], ["case_0002"])
        self.assertEqual(splits["test"], ["case_0003", "case_0004", "case_0005"])

    def test_artifacts(self):
        self.assertTrue((self.root / "model" / "model.json").exists())
        self.assertTrue((self.root / "model" / "history.csv").exists())
        self.assertTrue((self.root / "validation" / "report.csv").exists())
        self.assertTrue((self.root / "infer" / "case_0004" / "TTP.f32raw").exists())
        self.assertFalse((self.root / "infer" / "case_0000").exists())
        on_disk = json.loads((self.root / "result.json").read_text())
        self.assertEqual(on_disk["splits"], self.result["splits"])

    def test_result_numbers(self):
        self.assertLessEqual(self.result["final_val_mse"], self.result["initial_val_mse"])
        self.assertGreater(self.result["n_parameters"], 0)
        self.assertEqual(set(self.result["validation"]), {"core", "penumbra"})
