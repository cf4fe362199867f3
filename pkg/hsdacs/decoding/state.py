from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from hsdacs.models.config import SOS_ID
from hsdacs.types import HaltingMode, HaltReason


@dataclass(frozen=True)
class HaltingState:
    """
    Decoder bookkeeping carried from one output step to the next.

    Attributes:
        t_prev (int): Exposed boundary t_{i-1}, in encoder frames.
        layer_positions (tuple[int, ...]): Furthest halting position of each layer at the last step.
        step (int): Number of completed output steps.
    """

    t_prev: int = 0
    layer_positions: tuple[int, ...] = ()
    step: int = 0


@dataclass(frozen=True)
class DecoderCache:
    """Per-layer normalised self-attention inputs `[i, d_model]` of the positions decoded so far."""

    rows: tuple[NDArray[np.float64], ...] = ()

    def __len__(self) -> int:
        return 0 if not self.rows else int(self.rows[0].shape[0])


@dataclass
class StepTrace:
    """
    Record of one output step.

    `probs[l]` is `[H, W]` for monotonic layers (halting probabilities over the
    window) and `[H, T]` softmax weights in offline mode. `n_steps` is
    `[N_d, H]`; in offline mode every entry is T.
    """

    step: int
    t_prev: int
    t: int
    window: int
    token: int
    log_probs: NDArray[np.float64]
    probs: list[NDArray[np.float64]]
    n_steps: NDArray[np.int64]
    reasons: list[list[HaltReason]]


@dataclass
class DecodeTrace:
    mode: HaltingMode
    num_layers: int
    num_heads: int
    num_frames: int
    steps: list[StepTrace] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def boundaries(self) -> list[int]:
        return [s.t for s in self.steps]

    @property
    def coverage_steps(self) -> NDArray[np.int64]:
        """Consumed frames s for every (step, layer, head), `[L, N_d, H]`."""
        if not self.steps:
            return np.zeros((0, self.num_layers, self.num_heads), dtype=np.int64)
        return np.stack([s.n_steps for s in self.steps])

    def applied_weights(self, layer: int) -> NDArray[np.float64]:
        """
        Attention weights actually applied at `layer`, `[H, L, T]`.

        Entries beyond each head's halting position are exactly zero.
        """
        grid = np.zeros((self.num_heads, len(self.steps), self.num_frames))
        for i, s in enumerate(self.steps):
            probs = s.probs[layer]
            for h in range(self.num_heads):
                n = int(s.n_steps[layer, h])
                grid[h, i, :n] = probs[h, :n]
        return grid


@dataclass(frozen=True)
class Hypothesis:
    """A partial output sequence with its own halting state, decoder cache and trace."""

    tokens: tuple[int, ...] = (SOS_ID,)
    log_score: float = 0.0
    halting: HaltingState = field(default_factory=HaltingState)
    cache: DecoderCache = field(default_factory=DecoderCache)
    steps: tuple[StepTrace, ...] = ()

    @property
    def output(self) -> list[int]:
        """Emitted tokens without the leading sos."""
        return list(self.tokens[1:])

    def normalized_score(self, length_penalty: float = 1.0) -> float:
        """Log-probability divided by (emitted tokens) ** length_penalty."""
        return self.log_score / max(len(self.tokens) - 1, 1) ** length_penalty
