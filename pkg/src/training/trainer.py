"""
Training loop: sampling, forward/backward, scheduled updates, checkpoints
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from tqdm import tqdm

from src.autograd.tensor import Tape, Tensor
from src.data.augment import AugmentPolicy
from src.data.sampler import BatchSpec, sample_batch
from src.data.silhouette import GaitDataset
from src.models.losses import LossConfig, combined_loss
from src.models.recognizer import GaitRecognizer, recognizer_meta
from src.training.optim import Optimizer, OptimizerConfig, build_optimizer
from src.training.schedule import ScheduleConfig, lr_at
from src.utils.checkpoint import save_checkpoint
from src.utils.exceptions import ConfigurationError, TrainingDivergedError
from src.utils.logger import TRAIN_LOGGER_NAME, get_logger, log_execution_time

logger = get_logger(__name__)
step_logger = get_logger(TRAIN_LOGGER_NAME)

CHECKPOINT_SUFFIX = '.gfckpt'


@dataclass
class StepRecord:
    """Per-step training record"""
    step: int
    lr: float
    triplet_loss: float
    ce_loss: float
    nonzero_triplet_count: int

    def fields(self) -> Dict[str, Any]:
        return {
            'step': self.step,
            'lr': f"{self.lr:.6g}",
            'l_tri': f"{self.triplet_loss:.6f}",
            'l_ce': f"{self.ce_loss:.6f}",
            'nzt': self.nonzero_triplet_count,
        }


@dataclass
class TrainResult:
    """Trained model with its record stream and written checkpoints"""
    model: GaitRecognizer
    records: List[StepRecord] = field(default_factory=list)
    checkpoints: List[Path] = field(default_factory=list)

    @property
    def final_checkpoint(self) -> Optional[Path]:
        return self.checkpoints[-1] if self.checkpoints else None


def checkpoint_path(out_dir: Path, step: int) -> Path:
    return Path(out_dir) / f"step-{step:06d}{CHECKPOINT_SUFFIX}"


def _save(model: GaitRecognizer, out_dir: Path, step: int, meta: Dict[str, Any]) -> Path:
    config = recognizer_meta(model, step=step, **meta)
    return save_checkpoint(checkpoint_path(out_dir, step), model.state_dict(), config)


def apply_schedule(optimizer: Optimizer, step: int, schedule: ScheduleConfig) -> float:
    """Set every group's learning rate for ``step``; returns the main group's rate"""
    for group in optimizer.groups:
        group.lr = lr_at(step, schedule, optimizer.base_lrs[group.name], optimizer.config.lr_min)
    return optimizer.groups[0].lr


def train_step(
    model: GaitRecognizer,
    optimizer: Optimizer,
    clips: np.ndarray,
    labels: np.ndarray,
    loss_config: LossConfig,
    step: int
) -> StepRecord:
    """
    One forward/backward/update on a prepared batch

    Raises:
        TrainingDivergedError: If the loss is not finite (parameters untouched)
    """
    model.train()
    optimizer.zero_grad()
    with Tape() as tape:
        output = model(Tensor(clips))
        losses = combined_loss(output.embeddings, output.logits, labels, loss_config)
    total = losses.total.item()
    if not math.isfinite(total):
        raise TrainingDivergedError(f"Loss became non-finite ({total}) at step {step}")
    tape.backward(losses.total)
    optimizer.step()
    return StepRecord(
        step=step,
        lr=optimizer.groups[0].lr,
        triplet_loss=losses.triplet.item(),
        ce_loss=losses.cross_entropy.item(),
        nonzero_triplet_count=losses.nonzero_triplet_count,
    )


@log_execution_time(logger)
def train(
    model: GaitRecognizer,
    dataset: GaitDataset,
    batch_spec: BatchSpec,
    optimizer_config: OptimizerConfig,
    schedule: ScheduleConfig,
    loss_config: LossConfig,
    total_steps: int,
    rng: np.random.Generator,
    out_dir: Optional[Path] = None,
    checkpoint_every: int = 1000,
    augment: Optional[AugmentPolicy] = None,
    run_meta: Optional[Dict[str, Any]] = None,
    progress: bool = True
) -> TrainResult:
    """
    Train a recognizer on (q, k) batches

    An initial checkpoint is written before the first step, then one every
    ``checkpoint_every`` steps and one after the last step. Every step emits
    a ``step= lr= l_tri= l_ce= nzt=`` record on the training logger.

    Args:
        model: Recognizer (optionally warm-started)
        dataset: Training sequences
        batch_spec: Batch structure
        optimizer_config: Optimizer and learning rates
        schedule: Learning-rate schedule (its total_steps must cover total_steps)
        loss_config: Loss hyperparameters
        total_steps: Number of updates
        rng: Generator for batch sampling and augmentation
        out_dir: Checkpoint directory (no checkpoints when None)
        checkpoint_every: Checkpoint period in steps
        augment: Optional spatial augmentation policy
        run_meta: Extra configuration embedded in every checkpoint
        progress: Show a progress bar

    Returns:
        TrainResult

    Raises:
        TrainingDivergedError: When the loss becomes non-finite
    """
    if total_steps < 0:
        raise ConfigurationError(f"total_steps must be >= 0, got {total_steps}")
    if total_steps > schedule.total_steps:
        raise ConfigurationError(f"Schedule covers {schedule.total_steps} steps, training asks for {total_steps}")
    if checkpoint_every < 1:
        raise ConfigurationError(f"checkpoint_every must be >= 1, got {checkpoint_every}")

    label_index = dataset.label_index()
    if len(label_index) > model.num_classes:
        raise ConfigurationError(f"Dataset has {len(label_index)} subjects, head has {model.num_classes} classes")
    optimizer = build_optimizer(model, optimizer_config)
    meta = dict(run_meta or {})
    result = TrainResult(model)

    logger.info(
        f"Training {model.config.family.value} for {total_steps} steps on {len(dataset)} sequences "
        f"(q={batch_spec.q}, k={batch_spec.k}, T={batch_spec.frames_per_seq}, schedule={schedule.kind.value})"
    )
    if out_dir is not None:
        result.checkpoints.append(_save(model, out_dir, 0, meta))

    bar = tqdm(range(total_steps), desc="train", unit="step", disable=not progress)
    for step in bar:
        apply_schedule(optimizer, step, schedule)
        batch = sample_batch(dataset, batch_spec, rng, augment, label_index)
        record = train_step(model, optimizer, batch.clips, batch.labels, loss_config, step)
        result.records.append(record)
        step_logger.info(" ".join(f"{k}={v}" for k, v in record.fields().items()), extra={'fields': record.fields()})
        bar.set_postfix(l_tri=f"{record.triplet_loss:.4f}", l_ce=f"{record.ce_loss:.4f}", nzt=record.nonzero_triplet_count)

        done = step + 1
        if out_dir is not None and (done % checkpoint_every == 0 or done == total_steps):
            result.checkpoints.append(_save(model, out_dir, done, meta))

    model.eval()
    return result
