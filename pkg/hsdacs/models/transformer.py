import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from hsdacs.cache import default_cache
from hsdacs.halting.attention import MonotonicAttention
from hsdacs.halting.halting import TrainHaltingTrace
from hsdacs.models.config import EOS_ID, SOS_ID, ModelConfig
from hsdacs.models.encoder import ChunkedEncoder, EncoderStates
from hsdacs.models.layers import (
    Embedding,
    FeedForward,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    causal_mask,
    dropout,
    length_mask,
    sinusoidal_positions,
)
from hsdacs.tensor import Tensor
from hsdacs.types import HaltingMode


@dataclass
class ForwardOutput:
    logits: Tensor
    targets: NDArray[np.int64]
    mask: NDArray[np.bool_]
    halting: list[TrainHaltingTrace] = field(default_factory=list)
    cross_weights: list[NDArray[np.float64]] = field(default_factory=list)


def shift_targets(
    targets: NDArray[np.int64], target_mask: NDArray[np.bool_]
) -> tuple[NDArray[np.int64], NDArray[np.int64], NDArray[np.bool_]]:
    """
    Decoder inputs (sos-prefixed) and outputs (eos-terminated) of a padded target batch.

    Returns:
        tuple: `ys_in [B, L+1]`, `ys_out [B, L+1]` and the mask of real positions `[B, L+1]`.
    """
    batch, length = targets.shape
    lengths = target_mask.sum(axis=1)
    ys_in = np.concatenate([np.full((batch, 1), SOS_ID, dtype=np.int64), targets], axis=1)
    ys_out = np.concatenate([targets, np.zeros((batch, 1), dtype=np.int64)], axis=1)
    ys_out[np.arange(batch), lengths] = EOS_ID
    mask = length_mask(lengths + 1, length + 1)
    ys_in = np.where(mask, ys_in, SOS_ID)
    ys_out = np.where(mask, ys_out, EOS_ID)
    return ys_in, ys_out, mask


class DecoderLayer(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        d = config.d_model
        self.norm_self = LayerNorm(d, config.layer_norm_eps)
        self.self_attn = MultiHeadAttention(d, config.num_heads, rng, config.dropout)
        self.norm_cross = LayerNorm(d, config.layer_norm_eps)
        self.cross_attn: MultiHeadAttention
        if config.halting_mode == HaltingMode.OFFLINE:
            self.cross_attn = MultiHeadAttention(d, config.num_heads, rng, config.dropout)
        else:
            self.cross_attn = MonotonicAttention(d, config.num_heads, rng, config.energy_offset)
        self.norm_ffn = LayerNorm(d, config.layer_norm_eps)
        self.ffn = FeedForward(d, config.d_ffn, rng, config.dropout)
        self.dropout_rate = config.dropout

    @property
    def monotonic(self) -> bool:
        return isinstance(self.cross_attn, MonotonicAttention)


class Seq2SeqModel(Module):
    """
    Streaming encoder-decoder Transformer.

    The decoder is a stack of pre-norm layers (causal self-attention, cross-attention,
    feed-forward). Cross-attention is full softmax attention in offline mode and
    monotonic attention with DACS or HS-DACS halting otherwise.
    """

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.encoder = ChunkedEncoder(config, rng)
        self.embed = Embedding(config.vocab_size, config.d_model, rng)
        self.layers = [DecoderLayer(config, rng) for _ in range(config.num_decoder_layers)]
        self.final_norm = LayerNorm(config.d_model, config.layer_norm_eps)
        self.output = Linear(config.d_model, config.vocab_size, rng)

        self.cache = default_cache()
        for layer in self.layers:
            layer.cross_attn.cache = self.cache

    @property
    def mode(self) -> HaltingMode:
        return self.config.halting_mode

    def encode(
        self,
        features: NDArray[np.float64],
        feature_lengths: NDArray[np.int64] | None = None,
        rng: np.random.Generator | None = None,
    ) -> EncoderStates:
        return self.encoder(features, feature_lengths, rng)

    def embed_tokens(self, ids: NDArray[np.int64], start: int = 0) -> Tensor:
        x = self.embed(ids) * math.sqrt(self.config.d_model)
        positions = sinusoidal_positions(start + ids.shape[-1], self.config.d_model)[start:]
        return x + Tensor(positions)

    def decode_teacher_forced(
        self,
        enc: EncoderStates,
        ys_in: NDArray[np.int64],
        in_mask: NDArray[np.bool_],
        threshold: float | None = None,
        rng: np.random.Generator | None = None,
    ) -> tuple[Tensor, list[TrainHaltingTrace], list[NDArray[np.float64]]]:
        """
        Vectorised decoder pass with ground-truth prefixes.

        Monotonic layers truncate with the threshold only; the look-ahead cap
        does not apply here.

        Returns:
            tuple: Logits `[B, L, V]`, one halting trace per monotonic layer and the
            softmax cross-attention weights of offline layers.
        """
        cfg = self.config
        if threshold is None:
            threshold = cfg.threshold_for(cfg.halting_mode)
        length = ys_in.shape[1]
        self_mask = causal_mask(length)[None] & in_mask[:, None, :]
        self_mask = self_mask | np.eye(length, dtype=bool)[None]
        memory_valid = length_mask(enc.lengths, enc.states.shape[1])[:, None, :]

        x = self.embed_tokens(ys_in)
        traces: list[TrainHaltingTrace] = []
        cross_weights: list[NDArray[np.float64]] = []
        for layer in self.layers:
            h = layer.norm_self(x)
            attn, _ = layer.self_attn(h, h, self_mask, rng)
            x = x + dropout(attn, layer.dropout_rate, rng)

            h = layer.norm_cross(x)
            if isinstance(layer.cross_attn, MonotonicAttention):
                cross, trace = layer.cross_attn.forward_train(h, enc.states, enc.lengths, cfg.halting_mode, threshold)
                traces.append(trace)
            else:
                cross, weights = layer.cross_attn(h, enc.states, memory_valid, rng)
                cross_weights.append(weights.data)
            x = x + dropout(cross, layer.dropout_rate, rng)

            x = x + dropout(layer.ffn(layer.norm_ffn(x), rng), layer.dropout_rate, rng)
        return self.output(self.final_norm(x)), traces, cross_weights

    def __call__(
        self,
        features: NDArray[np.float64],
        feature_lengths: NDArray[np.int64],
        targets: NDArray[np.int64],
        target_mask: NDArray[np.bool_],
        rng: np.random.Generator | None = None,
    ) -> ForwardOutput:
        enc = self.encode(features, feature_lengths, rng)
        ys_in, ys_out, mask = shift_targets(targets, target_mask)
        logits, traces, cross_weights = self.decode_teacher_forced(enc, ys_in, mask, rng=rng)
        return ForwardOutput(logits, ys_out, mask, traces, cross_weights)
