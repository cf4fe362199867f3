import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

import hsdacs
from hsdacs.data.batching import Batch, pad_batch
from hsdacs.data.synthetic import SyntheticDataset
from hsdacs.models.transformer import Seq2SeqModel
from hsdacs.training.checkpoint import (
    Checkpoint,
    load_checkpoint,
    pack_rng_state,
    save_checkpoint,
    snap_to_float32,
    unpack_rng_state,
)
from hsdacs.training.loss import label_smoothed_ce
from hsdacs.training.optimizer import Adam, clip_grad_norm
from hsdacs.training.schedule import noam_lr
from hsdacs.types import CheckpointError, DivergenceError, ShapeError


class TrainConfig(BaseModel):
    """
    Optimisation settings. Defaults are desk scale; the published recipe used a
    25000-step warm-up.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    epochs: int = Field(default=30, ge=1)
    batch_size: int = Field(default=16, ge=1)
    base_lr: float = Field(default=1.0, ge=0.0)
    warmup_steps: int = Field(default=400, ge=1)
    label_smoothing: float = Field(default=0.1, ge=0.0, lt=1.0)
    grad_clip_norm: float = Field(default=5.0, gt=0.0)
    checkpoint_path: str = "checkpoints/model.ckpt"
    seed: int = 0
    max_steps: int | None = Field(default=None, ge=1)


@dataclass
class TrainReport:
    checkpoint: Checkpoint
    checkpoint_path: Path | None
    losses: pd.DataFrame


def loss_log_path(checkpoint_path: str | Path) -> Path:
    return Path(f"{checkpoint_path}.loss.tsv")


class Trainer:
    """
    Teacher-forced training loop.

    Batches are a pure function of the global step: epoch e visits the dataset in
    the order drawn from a generator seeded with (seed, e). The trainer's own RNG
    only feeds dropout and is saved in checkpoints, so a resumed run continues
    exactly where the saved one left off.
    """

    def __init__(
        self,
        model: Seq2SeqModel,
        config: TrainConfig,
        dataset: SyntheticDataset,
        rng: np.random.Generator | None = None,
    ):
        self.model = model
        self.config = config
        self.dataset = dataset
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.optimizer = Adam(list(model.named_parameters()))
        self.step = 0

    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(len(self.dataset) / self.config.batch_size)

    def epoch_order(self, epoch: int) -> NDArray[np.int64]:
        return np.random.default_rng([self.config.seed, epoch]).permutation(len(self.dataset))

    def batch_for(self, step: int) -> Batch:
        epoch, offset = divmod(step, self.steps_per_epoch)
        size = self.config.batch_size
        indices = self.epoch_order(epoch)[offset * size : (offset + 1) * size]
        return pad_batch([self.dataset[int(i)] for i in indices])

    def learning_rate(self, step: int) -> float:
        return noam_lr(step, self.config.warmup_steps, self.model.config.d_model, self.config.base_lr)

    def train_step(self, batch: Batch) -> float:
        """One forward/backward/update; returns the batch loss."""
        self.model.train()
        dropout_rng = self.rng if self.model.config.dropout > 0 else None
        out = self.model(batch.features, batch.feature_lengths, batch.targets, batch.target_mask, dropout_rng)
        loss = label_smoothed_ce(out.logits, out.targets, self.config.label_smoothing, out.mask)
        value = loss.item()
        if not math.isfinite(value):
            raise DivergenceError(f"loss became {value} at step {self.step + 1}")

        self.optimizer.zero_grad()
        loss.backward()
        clip_grad_norm(self.model.parameters(), self.config.grad_clip_norm)
        self.step += 1
        self.optimizer.step(self.learning_rate(self.step))
        return value

    def fit(self, max_steps: int | None = None) -> pd.DataFrame:
        """
        Train until `config.epochs` epochs (or `max_steps` global steps) are done.

        Returns:
            pd.DataFrame: One row per epoch touched: epoch, mean_loss, steps, lr.
        """
        total = self.config.epochs * self.steps_per_epoch
        limit = max_steps if max_steps is not None else self.config.max_steps
        if limit is not None:
            total = min(total, limit)

        rows: list[dict[str, float | int]] = []
        epoch_losses: list[float] = []
        pbar = tqdm(
            total=max(total - self.step, 0),
            desc="Training",
            disable=not hsdacs.settings.show_progress_bar,
            bar_format="{l_bar}{bar} {n}/{total} steps [{elapsed}<{remaining}, {postfix}]",
        )
        while self.step < total:
            epoch = self.step // self.steps_per_epoch
            loss = self.train_step(self.batch_for(self.step))
            epoch_losses.append(loss)
            pbar.set_postfix(loss=f"{loss:.4f}")
            pbar.update(1)
            if self.step % self.steps_per_epoch == 0 or self.step == total:
                mean_loss = float(np.mean(epoch_losses))
                rows.append(
                    {
                        "epoch": epoch + 1,
                        "mean_loss": mean_loss,
                        "steps": len(epoch_losses),
                        "lr": self.learning_rate(self.step),
                    }
                )
                hsdacs.logger.info(f"Epoch {epoch + 1}: mean loss {mean_loss:.4f} over {len(epoch_losses)} steps")
                epoch_losses = []
        pbar.close()
        return pd.DataFrame(rows, columns=["epoch", "mean_loss", "steps", "lr"])

    def round_to_float32(self) -> None:
        """
        Round parameters and moments in place to the precision a checkpoint stores,
        so continuing this run and resuming from the written file produce identical updates.
        """
        for _, p in self.model.named_parameters():
            p.data = snap_to_float32(p.data)
        for store in (self.optimizer.m, self.optimizer.v):
            for name in store:
                store[name] = snap_to_float32(store[name])

    def checkpoint(self) -> Checkpoint:
        """Snapshot of the training state; the live parameters are left as they are."""
        return Checkpoint(
            config=self.model.config,
            params=self.model.state_dict(),
            moments={name: value.copy() for name, value in self.optimizer.moments().items()},
            rng_state=pack_rng_state(self.rng),
            step=self.step,
        )

    def save(self, path: str | Path | None = None) -> Path:
        self.round_to_float32()
        return save_checkpoint(path if path is not None else self.config.checkpoint_path, self.checkpoint())

    @classmethod
    def from_checkpoint(
        cls, checkpoint: Checkpoint | str | Path, config: TrainConfig, dataset: SyntheticDataset
    ) -> "Trainer":
        if not isinstance(checkpoint, Checkpoint):
            checkpoint = load_checkpoint(checkpoint)
        trainer = cls(model_from_checkpoint(checkpoint), config, dataset, rng=unpack_rng_state(checkpoint.rng_state))
        try:
            trainer.optimizer.load_moments(checkpoint.moments, checkpoint.step)
        except ShapeError as e:
            raise CheckpointError(f"checkpoint moments do not match its parameters: {e}") from e
        trainer.step = checkpoint.step
        return trainer


def model_from_checkpoint(checkpoint: Checkpoint) -> Seq2SeqModel:
    """Model rebuilt from a checkpoint's config and parameters."""
    model = Seq2SeqModel(checkpoint.config)
    try:
        model.load_state_dict(checkpoint.params)
    except ShapeError as e:
        raise CheckpointError(f"checkpoint parameters do not match its config: {e}") from e
    return model


def train(
    model: Seq2SeqModel,
    dataset: SyntheticDataset,
    config: TrainConfig,
    save: bool = True,
) -> TrainReport:
    """
    Train `model` on `dataset` and persist the result.

    With `save`, the checkpoint goes to `config.checkpoint_path` and the per-epoch
    loss table next to it as `<checkpoint>.loss.tsv`.

    Raises:
        DivergenceError: If the loss stops being finite.
    """
    trainer = Trainer(model, config, dataset)
    losses = trainer.fit()
    if not save:
        return TrainReport(trainer.checkpoint(), None, losses)
    path = trainer.save()
    losses.to_csv(loss_log_path(path), sep="\t", index=False)
    return TrainReport(load_checkpoint(path), path, losses)
