from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator

from hsdacs.models.config import FIRST_TOKEN


class DataConfig(BaseModel):
    """
    Synthetic monotonic transduction task.

    Each target token is rendered as a run of identical codebook frames plus
    Gaussian noise, so the ground-truth alignment is monotonic by construction.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    vocab_size: int = Field(default=30, ge=FIRST_TOKEN + 1)
    min_length: int = Field(default=5, ge=2)
    max_length: int = 20
    min_duration: int = Field(default=2, ge=1)
    max_duration: int = 5
    d_feat: int = Field(default=16, ge=1)
    noise: float = Field(default=0.3, ge=0.0)
    codebook_seed: int = 0
    sample_seed: int = 0
    eval_seed: int = 1
    train_size: int = Field(default=2000, ge=1)
    eval_size: int = Field(default=200, ge=1)

    @model_validator(mode="after")
    def _check_ranges(self) -> "DataConfig":
        if self.max_length < self.min_length:
            raise ValueError(f"max_length={self.max_length} < min_length={self.min_length}")
        if self.max_duration < self.min_duration:
            raise ValueError(f"max_duration={self.max_duration} < min_duration={self.min_duration}")
        return self


@dataclass
class SyntheticSample:
    target: NDArray[np.int64]
    features: NDArray[np.float64]
    # (start frame, duration) per target token
    alignment: list[tuple[int, int]]

    @property
    def num_frames(self) -> int:
        return int(self.features.shape[0])


def make_codebook(config: DataConfig) -> NDArray[np.float64]:
    """One fixed embedding row per token id, `[V, d_feat]`; reserved rows are never rendered."""
    rng = np.random.default_rng(config.codebook_seed)
    return rng.standard_normal((config.vocab_size, config.d_feat))


def generate_sample(
    config: DataConfig,
    index: int,
    seed: int | None = None,
    codebook: NDArray[np.float64] | None = None,
) -> SyntheticSample:
    """
    Deterministic sample number `index` of the stream identified by `seed`
    (the config's sample seed by default).
    """
    if codebook is None:
        codebook = make_codebook(config)
    rng = np.random.default_rng([config.sample_seed if seed is None else seed, index])
    length = int(rng.integers(config.min_length, config.max_length + 1))
    target = rng.integers(FIRST_TOKEN, config.vocab_size, size=length).astype(np.int64)
    durations = rng.integers(config.min_duration, config.max_duration + 1, size=length)
    frames = np.repeat(codebook[target], durations, axis=0)
    features = frames + config.noise * rng.standard_normal(frames.shape)
    starts = np.concatenate([[0], np.cumsum(durations)[:-1]])
    alignment = [(int(s), int(d)) for s, d in zip(starts, durations)]
    return SyntheticSample(target, features, alignment)


def nearest_codebook_decode(features: NDArray[np.float64], codebook: NDArray[np.float64]) -> NDArray[np.int64]:
    """Per-frame nearest non-reserved codebook id."""
    candidates = codebook[FIRST_TOKEN:]
    distances = ((features[:, None, :] - candidates[None, :, :]) ** 2).sum(axis=-1)
    return np.argmin(distances, axis=1).astype(np.int64) + FIRST_TOKEN


class SyntheticDataset:
    """
    Indexable view of `size` generated samples.

    Samples are produced on demand from (codebook seed, stream seed, index); the
    dataset holds no files.
    """

    def __init__(self, config: DataConfig, size: int, seed: int | None = None):
        self.config = config
        self.size = size
        self.seed = config.sample_seed if seed is None else seed

    @classmethod
    def train(cls, config: DataConfig) -> "SyntheticDataset":
        return cls(config, config.train_size, config.sample_seed)

    @classmethod
    def eval(cls, config: DataConfig, size: int | None = None, seed: int | None = None) -> "SyntheticDataset":
        return cls(config, config.eval_size if size is None else size, config.eval_seed if seed is None else seed)

    @cached_property
    def codebook(self) -> NDArray[np.float64]:
        return make_codebook(self.config)

    def __len__(self) -> int:
        return self.size

    def __getitem__(self, index: int) -> SyntheticSample:
        if not 0 <= index < self.size:
            raise IndexError(f"sample {index} outside [0, {self.size})")
        return generate_sample(self.config, index, self.seed, self.codebook)

    def __iter__(self) -> Iterator[SyntheticSample]:
        for index in range(self.size):
            yield self[index]
