"""
🏋️ TRAINING

Mini-batch SGD with momentum (v ← μv − lr·g, w ← w + v). The learning rate
halves when the validation MSE has not improved by at least
`min_improvement` for `patience` epochs; training stops once `max_decays`
decays have passed without an improvement, or after `max_epochs`. The
weights of the best validation epoch are restored at the end.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

import numpy as np
import pandas as pd

from perfusion.conf import perfusion_section, perfusion_settings
from perfusion.exceptions import ArtifactIOError, InvariantViolationError, TrainingDivergenceError

from .dataset import stack_samples
from .loss import mse_loss
from .model import UNet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.05
    momentum: float = 0.9
    batch_size: int = 4
    max_epochs: int = 200
    patience: int = 10
    min_improvement: float = 1e-5
    max_decays: int = 3
    rng_seed: int = 0

    def __post_init__(self):
        if not self.lr0 > 0:
            raise InvariantViolationError("lr0 must be > 0")
        if int(self.patience) < 1:
            raise InvariantViolationError("patience must be >= 1")
        if int(self.batch_size) < 1 or int(self.max_epochs) < 1:
            raise InvariantViolationError("batch_size and max_epochs must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise InvariantViolationError("momentum must lie in [0, 1)")

    @classmethod
    def from_settings(cls, **overrides):
        section = perfusion_section("train")
        names = cls.__dataclass_fields__
        values = {k: v for k, v in section.items() if k in names}
        values.setdefault("rng_seed", perfusion_settings().get("seed", 0))
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class TrainingHistory:
    """Row 0 holds the losses before the first update."""

    epochs: List[int] = field(default_factory=list)
    train_mse: List[float] = field(default_factory=list)
    val_mse: List[float] = field(default_factory=list)
    lr: List[float] = field(default_factory=list)
    decay_epochs: List[int] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def record(self, epoch, train_mse, val_mse, lr):
        self.epochs.append(int(epoch))
        self.train_mse.append(float(train_mse))
        self.val_mse.append(float(val_mse))
        self.lr.append(float(lr))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"epoch": self.epochs, "train_mse": self.train_mse, "val_mse": self.val_mse, "lr": self.lr})


def write_history(history: TrainingHistory, path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        history.to_frame().to_csv(path, index=False)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write training history: {exc}", path) from exc


def evaluate(model: UNet, samples, batch_size=8):
    """MSE over all channels × masked pixels of a sample set."""
    total, count = 0.0, 0.0
    for start in range(0, len(samples), batch_size):
        x, y, mask = stack_samples(samples[start:start + batch_size])
        pred = model.forward(x)
        loss, _ = mse_loss(pred, y, mask)
        weight = y.size if mask is None else float(mask.sum()) * y.shape[1]
        total += loss * weight
        count += weight
    return total / count if count else 0.0


def _check_finite(value, epoch, what):
    if not np.all(np.isfinite(value)):
        raise TrainingDivergenceError(epoch, f"{what} is not finite")


class MapRegressorTrainer:
    """🏋️ Trains a UNet on slice samples with validation-driven lr decay."""

    def __init__(self, config: TrainConfig = None):
        self.service_name = "Map Regressor Trainer"
        self.config = config or TrainConfig.from_settings()

    def train(self, model: UNet, train_set, val_set):
        cfg = self.config
        if not train_set or not val_set:
            raise InvariantViolationError("training needs at least one training and one validation sample")

        rng = np.random.default_rng(cfg.rng_seed)
        params = model.parameters()
        velocity = [np.zeros_like(p.values) for p in params]
        lr = float(cfg.lr0)
        history = TrainingHistory()

        val = evaluate(model, val_set)
        _check_finite(val, 0, "validation loss")
        history.record(0, evaluate(model, train_set), val, lr)
        best_val, best_weights = val, model.get_flat().copy()
        waited, decays_without_gain = 0, 0

        for epoch in range(1, int(cfg.max_epochs) + 1):
            order = rng.permutation(len(train_set))
            batch_losses = []
            for start in range(0, len(order), int(cfg.batch_size)):
                batch = [train_set[i] for i in order[start:start + int(cfg.batch_size)]]
                x, y, mask = stack_samples(batch)
                model.zero_grad()
                loss, grad = mse_loss(model.forward(x), y, mask)
                _check_finite(loss, epoch, "training loss")
                model.backward(grad)
                for p in params:
                    _check_finite(p.grad, epoch, "gradient")
                for p, v in zip(params, velocity):
                    v *= cfg.momentum
                    v -= lr * p.grad
                    p.values += v
                batch_losses.append(loss)

            val = evaluate(model, val_set)
            _check_finite(val, epoch, "validation loss")
            history.record(epoch, float(np.mean(batch_losses)), val, lr)

            if val < best_val - cfg.min_improvement:
                best_val, best_weights = val, model.get_flat().copy()
                history.best_epoch = epoch
                waited, decays_without_gain = 0, 0
            else:
                waited += 1
                if waited >= int(cfg.patience):
                    lr /= 2.0
                    waited = 0
                    decays_without_gain += 1
                    history.decay_epochs.append(epoch)
                    logger.info(f"📉 Epoch {epoch}: lr halved to {lr:.3g}")
                    if decays_without_gain >= int(cfg.max_decays):
                        history.stopped_early = True
                        break
            logger.debug(f"🏋️ Epoch {epoch}: train={history.train_mse[-1]:.5f} val={val:.5f} lr={lr:.3g}")

        model.set_flat(best_weights)
        logger.info(
            f"🏋️ Training finished after {history.epochs[-1]} epochs, best val MSE {best_val:.5f} at epoch {history.best_epoch}"
        )
        return model, history


def train(model: UNet, train_set, val_set, cfg: TrainConfig = None):
    """Return (model with best validation weights, TrainingHistory)."""
    return MapRegressorTrainer(cfg).train(model, train_set, val_set)
