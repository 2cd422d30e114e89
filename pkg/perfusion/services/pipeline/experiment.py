"""
🔁 EXPERIMENT PIPELINE

simulate → fit → train → infer → validate in one seeded run. The management
command and the background task both drive this class.

    <out>/cases/      simulated cases of every split
    <out>/fit/        fitted maps, the training targets and validation reference
    <out>/model/      model.json + model.f32raw, history.csv
    <out>/infer/      maps predicted for the test split
    <out>/validation/ report.json + report.csv
    <out>/result.json headline numbers of the run
"""

import logging
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from perfusion.exceptions import InvariantViolationError
from perfusion.services.lesion_validation import LesionValidator, SegmentationThresholds
from perfusion.services.map_regressor import (
    InputNormalization,
    MapRegressorTrainer,
    TrainConfig,
    UNet,
    UNetConfig,
    save_model,
    write_history,
)
from perfusion.services.phantom_sim import AcquisitionConfig, NoiseMotionConfig

from .provenance import resolve_threads, write_json
from .stages import (
    TISSUE_MASK,
    FitOptions,
    SimulationPlan,
    case_name,
    collect_samples,
    fit_case,
    infer_case,
    simulate_cohort,
)

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class ExperimentConfig:
    out_dir: str = "runs/experiment"
    seed: int = 0
    threads: int = 1
    train_cases: int = 100
    val_cases: int = 15
    test_cases: int = 12
    healthy_fraction: float = 0.2
    nx: int = 64
    ny: int = 64
    nt: int = None
    dt: float = None
    noise_sigma_hu: float = None
    max_shift_px: int = None
    epochs: int = None
    depth: int = None
    base_channels: int = None
    time_stride: int = None
    refine: bool = None
    svd: bool = False

    def __post_init__(self):
        for split in SPLITS:
            if int(getattr(self, f"{split}_cases")) < 1:
                raise InvariantViolationError(f"{split}_cases must be >= 1")
        if not 0.0 <= self.healthy_fraction < 1.0:
            raise InvariantViolationError(f"healthy_fraction must lie in [0, 1), got {self.healthy_fraction}")

    @classmethod
    def from_dict(cls, values: dict):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in names})

    def to_dict(self):
        return asdict(self)

    def split_sizes(self):
        return {split: int(getattr(self, f"{split}_cases")) for split in SPLITS}

    def healthy_count(self, n_cases):
        return int(round(self.healthy_fraction * n_cases))


class ExperimentPipeline:
    def __init__(self, config: ExperimentConfig):
        self.service_name = "Experiment Pipeline"
        self.config = config
        self.out_dir = Path(config.out_dir)
        self.threads = resolve_threads(config.threads)

    def _plans(self):
        cfg = self.config
        acq = AcquisitionConfig.from_settings(nt=cfg.nt, dt=cfg.dt)
        noise_motion = NoiseMotionConfig.from_settings(noise_sigma_hu=cfg.noise_sigma_hu, max_shift_px=cfg.max_shift_px)
        plans, first = {}, 0
        for split, size in cfg.split_sizes().items():
            plans[split] = SimulationPlan(
                n_cases=size,
                first_index=first,
                healthy_cases=cfg.healthy_count(size),
                nx=cfg.nx,
                ny=cfg.ny,
                seed=cfg.seed,
                acquisition=acq,
                noise_motion=noise_motion,
            )
            first += size
        return acq, plans

    def simulate(self, plans):
        for plan in plans.values():
            simulate_cohort(plan, self.out_dir / "cases")
        return {split: [case_name(i) for i in plan.indices] for split, plan in plans.items()}

    def fit(self, case_ids):
        options = FitOptions(threads=self.threads, svd=self.config.svd, fit_overrides=(("refine", self.config.refine),))
        for case_id in case_ids:
            fit_case(self.out_dir / "cases" / case_id, self.out_dir / "fit" / case_id, options)
        logger.info(f"⚙️ Fitted {len(case_ids)} cases")

    def train(self, splits, acq):
        cfg = self.config
        model = UNet(UNetConfig.for_frames(
            acq.nt, seed=cfg.seed, depth=cfg.depth, base_channels=cfg.base_channels, time_stride=cfg.time_stride
        ))
        norm = InputNormalization.for_config(model.config)
        train_set = collect_samples([self.out_dir / "fit" / c for c in splits["train"]], norm)
        val_set = collect_samples([self.out_dir / "fit" / c for c in splits["val"]], norm)
        trainer = MapRegressorTrainer(TrainConfig.from_settings(max_epochs=cfg.epochs, rng_seed=cfg.seed))
        model, history = trainer.train(model, train_set, val_set)

        model_dir = self.out_dir / "model"
        save_model(model, model_dir / "model", extra={"train_cases": splits["train"], "val_cases": splits["val"]})
        write_history(history, model_dir / "history.csv")
        return model, history

    def infer(self, model, case_ids):
        for case_id in case_ids:
            infer_case(model, self.out_dir / "cases" / case_id, self.out_dir / "infer" / case_id)
        logger.info(f"🔮 Inferred maps for {len(case_ids)} test cases")

    def validate(self, case_ids):
        validator = LesionValidator(SegmentationThresholds.from_settings(), mask_name=TISSUE_MASK)
        return validator.validate(
            self.out_dir / "fit", self.out_dir / "infer", out_dir=self.out_dir / "validation", case_ids=case_ids
        )

    def run(self) -> dict:
        started = time.perf_counter()
        logger.info(f"🔁 Starting experiment in {self.out_dir} (seed={self.config.seed}, threads={self.threads})")
        acq, plans = self._plans()
        splits = self.simulate(plans)
        self.fit([case_id for split in SPLITS for case_id in splits[split]])
        model, history = self.train(splits, acq)
        self.infer(model, splits["test"])
        report = self.validate(splits["test"])

        result = {
            "splits": splits,
            "epochs": history.epochs[-1],
            "best_epoch": history.best_epoch,
            "initial_val_mse": history.val_mse[0],
            "final_val_mse": min(history.val_mse),
            "n_parameters": model.n_parameters,
            "validation": report.summary,
            "n_excluded": report.n_excluded,
            "excluded_cases": report.excluded_cases,
        }
        write_json(result, self.out_dir / "result.json")
        logger.info(f"✅ Experiment finished in {time.perf_counter() - started:.0f}s")
        return result

