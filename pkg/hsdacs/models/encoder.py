from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from hsdacs.models.config import ModelConfig
from hsdacs.models.layers import (
    FeedForward,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    build_chunk_mask,
    dropout,
    length_mask,
    sinusoidal_positions,
)
from hsdacs.tensor import Tensor
from hsdacs.types import DataError, ShapeError


def subsampled_length(num_frames: int, factor: int) -> int:
    return -(-num_frames // factor)


def stack_frames(features: NDArray[np.float64], factor: int) -> NDArray[np.float64]:
    """
    Stack `factor` consecutive frames, zero-padding the last group.

    `[..., F, d_feat] -> [..., ceil(F / factor), factor * d_feat]`
    """
    num_frames = features.shape[-2]
    if num_frames == 0:
        raise DataError("empty input: an utterance needs at least one frame")
    target = subsampled_length(num_frames, factor)
    pad = target * factor - num_frames
    if pad:
        widths = [(0, 0)] * (features.ndim - 2) + [(0, pad), (0, 0)]
        features = np.pad(features, widths)
    return features.reshape(features.shape[:-2] + (target, factor * features.shape[-1]))


@dataclass
class EncoderStates:
    """Encoder output of a batch: `states` is `[B, T, d_model]`, `lengths` the valid T per utterance."""

    states: Tensor
    lengths: NDArray[np.int64]

    def utterance(self, index: int) -> NDArray[np.float64]:
        return self.states.data[index, : int(self.lengths[index])]


class SubsampleFrontend(Module):
    def __init__(self, d_feat: int, factor: int, d_model: int, rng: np.random.Generator):
        self.factor = factor
        self.d_feat = d_feat
        self.proj = Linear(factor * d_feat, d_model, rng)

    def __call__(self, features: NDArray[np.float64]) -> Tensor:
        if features.shape[-1] != self.d_feat:
            raise ShapeError(f"expected {self.d_feat} features per frame, got {features.shape[-1]}")
        x = self.proj(Tensor(stack_frames(features, self.factor)))
        return x + Tensor(sinusoidal_positions(x.shape[-2], x.shape[-1]))


class EncoderLayer(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.norm_attn = LayerNorm(config.d_model, config.layer_norm_eps)
        self.self_attn = MultiHeadAttention(config.d_model, config.num_heads, rng, config.dropout)
        self.norm_ffn = LayerNorm(config.d_model, config.layer_norm_eps)
        self.ffn = FeedForward(config.d_model, config.d_ffn, rng, config.dropout)
        self.dropout_rate = config.dropout

    def __call__(self, x: Tensor, mask: NDArray[np.bool_], rng: np.random.Generator | None = None) -> Tensor:
        h = self.norm_attn(x)
        attn, _ = self.self_attn(h, h, mask, rng)
        x = x + dropout(attn, self.dropout_rate, rng)
        return x + dropout(self.ffn(self.norm_ffn(x), rng), self.dropout_rate, rng)


class ChunkedEncoder(Module):
    """
    Streaming Transformer encoder: subsampling front-end, chunk-masked pre-norm
    layers and a final layer norm. Every output frame depends only on input
    frames up to the right edge of its chunk plus the right context, compounded
    over layers.
    """

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        self.frontend = SubsampleFrontend(config.d_feat, config.subsample_factor, config.d_model, rng)
        self.layers = [EncoderLayer(config, rng) for _ in range(config.num_encoder_layers)]
        self.final_norm = LayerNorm(config.d_model, config.layer_norm_eps)

    def attention_mask(self, lengths: NDArray[np.int64], num_frames: int) -> NDArray[np.bool_]:
        cfg = self.config
        chunk = build_chunk_mask(num_frames, cfg.chunk_central, cfg.chunk_left, cfg.chunk_right)
        valid = length_mask(lengths, num_frames)
        # padded query rows see their whole chunk so no row is empty
        return chunk[None] & (valid[:, None, :] | ~valid[:, :, None])

    def __call__(
        self,
        features: NDArray[np.float64],
        feature_lengths: NDArray[np.int64] | None = None,
        rng: np.random.Generator | None = None,
    ) -> EncoderStates:
        """
        Encode a padded batch `[B, F, d_feat]` (or one utterance `[F, d_feat]`).

        Raises:
            DataError: If any utterance has no frames.
        """
        features = np.asarray(features, dtype=np.float64)
        if features.ndim == 2:
            features = features[None]
        if feature_lengths is None:
            feature_lengths = np.full(features.shape[0], features.shape[1], dtype=np.int64)
        feature_lengths = np.asarray(feature_lengths, dtype=np.int64)
        if (feature_lengths <= 0).any():
            raise DataError("empty input: an utterance needs at least one frame")

        x = self.frontend(features)
        lengths = np.array([subsampled_length(int(n), self.frontend.factor) for n in feature_lengths])
        mask = self.attention_mask(lengths, x.shape[1])
        for layer in self.layers:
            x = layer(x, mask, rng)
        return EncoderStates(self.final_norm(x), lengths)


def lookahead_reach(frame: int, config: ModelConfig) -> int:
    """Last subsampled input frame that encoder output `frame` can depend on."""
    reach = frame
    for _ in range(config.num_encoder_layers):
        reach = (reach // config.chunk_central + 1) * config.chunk_central - 1 + config.chunk_right
    return reach
