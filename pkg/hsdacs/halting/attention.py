from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from hsdacs.halting.halting import TrainHaltingTrace, dacs_halt, hs_dacs_halt, ma_energy, train_attention
from hsdacs.models.layers import MultiHeadAttention
from hsdacs.tensor import Tensor
from hsdacs.tensor import functional as F
from hsdacs.types import ContractError, HaltingMode, HaltingProbs, HaltReason


@dataclass
class LayerHalting:
    """Halting record of one monotonic layer at one output step."""

    probs: HaltingProbs
    n_steps: NDArray[np.int64]
    reasons: list[HaltReason]

    @property
    def furthest(self) -> int:
        return int(self.n_steps.max())


class MonotonicAttention(MultiHeadAttention):
    """
    Multi-head monotonic cross-attention with DACS or HS-DACS halting.

    Heads share the projections of ordinary multi-head attention; energies may carry
    a fixed offset before the sigmoid and contexts are raw weighted sums
    of the retained values.
    """

    def __init__(
        self,
        d_model: int,
        num_heads: int,
        rng: np.random.Generator,
        energy_offset: float = 0.0,
    ):
        super().__init__(d_model, num_heads, rng)
        self.energy_offset = float(energy_offset)

    def forward_train(
        self,
        query: Tensor,
        memory: Tensor,
        memory_lengths: NDArray[np.int64],
        mode: HaltingMode,
        threshold: float,
    ) -> tuple[Tensor, TrainHaltingTrace]:
        """Teacher-forced cross-attention, `[B, L, d_model]` over `[B, T, d_model]`."""
        q = self.split_heads(self.w_q(query))
        k = self.split_heads(self.w_k(memory))
        v = self.split_heads(self.w_v(memory))
        ctx, trace = train_attention(q, k, v, mode, threshold, memory_lengths, self.energy_offset)
        return self.w_o(self.merge_heads(ctx)), trace

    def step(
        self,
        query_row: NDArray[np.float64],
        keys: NDArray[np.float64],
        values: NDArray[np.float64],
        window: int,
        mode: HaltingMode,
        threshold: float,
    ) -> tuple[NDArray[np.float64], LayerHalting]:
        """
        One streaming output step over the first `window` encoder frames.

        Args:
            query_row (NDArray[np.float64]): `[d_model]` normalised decoder state.
            keys, values (NDArray[np.float64]): `[H, T, d_k]` projected encoder states.
            window (int): min(t_prev + M, T).

        Returns:
            tuple[NDArray[np.float64], LayerHalting]: Output row `[d_model]` and the halting record.
        """
        if window < 1:
            raise ContractError("monotonic attention over an empty window")
        q = self.split_heads(self.w_q(Tensor(query_row[None, :])))
        e = ma_energy(q, Tensor(keys[:, :window]), self.energy_offset)
        p = F.sigmoid(e)
        e_rows, p_rows = e.data[:, 0, :], p.data[:, 0, :]

        num_heads = p_rows.shape[0]
        if mode == HaltingMode.HSDACS:
            shared = hs_dacs_halt(p_rows, threshold, window)
            results = [shared] * num_heads
        elif mode == HaltingMode.DACS:
            results = [dacs_halt(p_rows[h], threshold, window) for h in range(num_heads)]
        else:
            raise ContractError(f"no halting in {mode.value} mode")

        n_steps = np.array([r.n_steps for r in results], dtype=np.int64)
        keep = np.arange(window) < n_steps[:, None]
        weights = Tensor(np.where(keep, p_rows, 0.0)[:, None, :])
        ctx = F.ordered_weighted_sum(weights, Tensor(values[:, :window]))
        out = self.w_o(self.merge_heads(ctx))
        halting = LayerHalting(HaltingProbs(p=p_rows, e=e_rows), n_steps, [r.reason for r in results])
        return out.data[0], halting
