"""Single output steps of streaming decoding.

Each step computes only the newest decoder position: self-attention reads the
cached normalised inputs of earlier positions, so earlier positions keep the
cross-attention contexts they were given at their own step.
"""

import numpy as np
from numpy.typing import NDArray

import hsdacs
from hsdacs.decoding.state import DecoderCache, HaltingState, StepTrace
from hsdacs.halting.attention import MonotonicAttention
from hsdacs.models.transformer import Seq2SeqModel
from hsdacs.tensor import Tensor, no_grad
from hsdacs.tensor import functional as F
from hsdacs.types import ConfigError, ContractError, HaltingMode, HaltReason


class DecodingSession:
    """
    Decoding context of one utterance.

    Holds the encoder states `[T, d_model]` and the per-layer projected keys and
    values, computed once through the model's projection cache and shared by
    every step and every beam hypothesis.

    Args:
        model (Seq2SeqModel): Trained model.
        enc (NDArray[np.float64]): Encoder states of one utterance.
        mode (HaltingMode | None): Cross-attention used for decoding; defaults to the model's.
        threshold (float | None): θ (DACS) or Θ (HS-DACS); defaults from the model config.
        max_lookahead (int | None): M; defaults from the model config.
    """

    def __init__(
        self,
        model: Seq2SeqModel,
        enc: NDArray[np.float64],
        mode: HaltingMode | None = None,
        threshold: float | None = None,
        max_lookahead: int | None = None,
    ):
        cfg = model.config
        self.model = model
        self.enc = np.ascontiguousarray(enc, dtype=np.float64)
        self.mode = mode if mode is not None else cfg.halting_mode
        if self.mode != HaltingMode.OFFLINE and cfg.halting_mode == HaltingMode.OFFLINE:
            raise ConfigError(f"a model trained in offline mode cannot decode in {self.mode.value} mode")
        if self.mode == HaltingMode.OFFLINE and cfg.halting_mode != HaltingMode.OFFLINE:
            raise ConfigError("a monotonic model has no softmax cross-attention for offline decoding")
        self.threshold = threshold if threshold is not None else cfg.threshold_for(self.mode)
        self.max_lookahead = max_lookahead if max_lookahead is not None else cfg.max_lookahead
        if self.max_lookahead < 1:
            raise ConfigError(f"max_lookahead must be >= 1, got {self.max_lookahead}")
        if self.threshold <= 0:
            raise ConfigError(f"threshold must be > 0, got {self.threshold}")
        with no_grad():
            self.memory = [layer.cross_attn.project_memory(self.enc) for layer in model.layers]

    @property
    def num_frames(self) -> int:
        return int(self.enc.shape[0])

    def window(self, state: HaltingState) -> int:
        if self.mode == HaltingMode.OFFLINE:
            return self.num_frames
        return min(state.t_prev + self.max_lookahead, self.num_frames)

    def step(
        self, prefix: tuple[int, ...], state: HaltingState, cache: DecoderCache
    ) -> tuple[NDArray[np.float64], HaltingState, DecoderCache, StepTrace]:
        """
        Produce the next-token distribution for `prefix`.

        Args:
            prefix (tuple[int, ...]): Tokens so far, starting with sos.
            state (HaltingState): Boundary bookkeeping after the previous step.
            cache (DecoderCache): Cached decoder rows for `prefix[:-1]`.

        Returns:
            tuple: Log-probabilities `[V]`, the new halting state, the extended cache and
            the step record (its `token` field is filled in by the search).
        """
        if not prefix:
            raise ContractError("empty prefix: decoding starts from sos")
        if len(cache) != len(prefix) - 1:
            raise ContractError(f"decoder cache holds {len(cache)} positions for a prefix of {len(prefix)}")
        if state.t_prev > self.num_frames:
            raise ContractError(f"boundary {state.t_prev} beyond the {self.num_frames} encoder frames")

        model = self.model
        window = self.window(state)
        position = len(prefix) - 1
        new_rows: list[NDArray[np.float64]] = []
        probs: list[NDArray[np.float64]] = []
        n_steps: list[NDArray[np.int64]] = []
        reasons: list[list[HaltReason]] = []

        with no_grad():
            x = model.embed_tokens(np.array([prefix[-1]], dtype=np.int64), start=position)
            for index, layer in enumerate(model.layers):
                h = layer.norm_self(x)
                rows = h.data if not cache.rows else np.concatenate([cache.rows[index], h.data], axis=0)
                new_rows.append(rows)
                attn, _ = layer.self_attn(h, Tensor(rows))
                x = x + attn

                query_row = layer.norm_cross(x).data[0]
                keys, values = self.memory[index]
                if isinstance(layer.cross_attn, MonotonicAttention):
                    cross, halting = layer.cross_attn.step(query_row, keys, values, window, self.mode, self.threshold)
                    probs.append(halting.probs.p)
                    n_steps.append(halting.n_steps)
                    reasons.append(halting.reasons)
                else:
                    cross, weights = layer.cross_attn.attend_row(query_row, keys, values)
                    probs.append(weights)
                    n_steps.append(np.full(weights.shape[0], self.num_frames, dtype=np.int64))
                    reasons.append([HaltReason.WINDOW] * weights.shape[0])
                x = x + Tensor(cross[None, :])
                x = x + layer.ffn(layer.norm_ffn(x))
            log_probs = F.log_softmax(model.output(model.final_norm(x))).data[0]

        positions = np.stack(n_steps)
        layer_positions = tuple(int(n) for n in positions.max(axis=1))
        t_new = max(state.t_prev, *layer_positions)
        hsdacs.logger.debug(
            f"step {state.step + 1}: window={window} layer positions={layer_positions} t={t_new}"
        )
        new_state = HaltingState(t_prev=t_new, layer_positions=layer_positions, step=state.step + 1)
        trace = StepTrace(
            step=state.step + 1,
            t_prev=state.t_prev,
            t=t_new,
            window=window,
            token=-1,
            log_probs=log_probs,
            probs=probs,
            n_steps=positions,
            reasons=reasons,
        )
        return log_probs, new_state, DecoderCache(tuple(new_rows)), trace


def decode_step_hsdacs(
    session: DecodingSession, prefix: tuple[int, ...], state: HaltingState, cache: DecoderCache
) -> tuple[NDArray[np.float64], HaltingState, DecoderCache, StepTrace]:
    """One HS-DACS step: every layer halts all of its heads at one shared position."""
    if session.mode != HaltingMode.HSDACS:
        raise ContractError(f"session decodes in {session.mode.value} mode")
    return session.step(prefix, state, cache)


def decode_step_dacs(
    session: DecodingSession, prefix: tuple[int, ...], state: HaltingState, cache: DecoderCache
) -> tuple[NDArray[np.float64], HaltingState, DecoderCache, StepTrace]:
    """One DACS step: heads halt independently; the furthest position becomes the next boundary."""
    if session.mode != HaltingMode.DACS:
        raise ContractError(f"session decodes in {session.mode.value} mode")
    return session.step(prefix, state, cache)


def decode_step_offline(
    session: DecodingSession, prefix: tuple[int, ...], state: HaltingState, cache: DecoderCache
) -> tuple[NDArray[np.float64], HaltingState, DecoderCache, StepTrace]:
    if session.mode != HaltingMode.OFFLINE:
        raise ContractError(f"session decodes in {session.mode.value} mode")
    return session.step(prefix, state, cache)
