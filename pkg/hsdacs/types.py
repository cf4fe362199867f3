from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.typing import NDArray


################################################################################
# Halting related
################################################################################
class HaltingMode(Enum):
    OFFLINE = "offline"
    DACS = "dacs"
    HSDACS = "hsdacs"


class HaltReason(Enum):
    THRESHOLD = "threshold"
    WINDOW = "window"


@dataclass
class HaltingProbs:
    """Halting probabilities of one decoder layer at one output step.

    Both arrays are `[H, J]` where J is the length of the examined window.
    """

    p: NDArray[np.float64]
    e: NDArray[np.float64]

    @property
    def num_heads(self) -> int:
        return int(self.p.shape[0])

    @property
    def window(self) -> int:
        return int(self.p.shape[-1])


@dataclass
class HaltResult:
    # 1-based count of consumed encoder frames
    n_steps: int
    reason: HaltReason
    truncated_weights: NDArray[np.float64]


################################################################################
# Evaluation related
################################################################################
@dataclass
class EditOps:
    distance: int
    substitutions: int = 0
    insertions: int = 0
    deletions: int = 0


@dataclass
class SweepRow:
    threshold: float
    error_rate: float
    ratio: float


@dataclass
class DecodeOutput:
    hypotheses: list[list[int]]
    references: list[list[int]]
    error_rate: float
    mean_ratio: float


################################################################################
# Exception related
################################################################################
class HSDACSException(Exception):
    """Base class for all hsdacs exceptions."""

    pass


class ShapeError(HSDACSException, ValueError):
    """Exception raised when tensor dimensions do not agree."""

    pass


class ContractError(HSDACSException, ValueError):
    """Exception raised when an operation's precondition is violated."""

    pass


class ConfigError(HSDACSException, ValueError):
    """Exception raised for invalid or unknown configuration values."""

    pass


class DataError(HSDACSException, ValueError):
    """Exception raised for malformed inputs such as out-of-range token ids."""

    pass


class DivergenceError(HSDACSException, RuntimeError):
    """Exception raised when the training loss stops being finite."""

    pass


class CheckpointError(HSDACSException, IOError):
    """Exception raised when a checkpoint file cannot be decoded."""

    pass
