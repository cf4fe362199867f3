from hsdacs.models.config import EOS_ID, FIRST_TOKEN, SOS_ID, ModelConfig
from hsdacs.models.encoder import ChunkedEncoder, EncoderStates, lookahead_reach, stack_frames, subsampled_length
from hsdacs.models.layers import (
    Module,
    MultiHeadAttention,
    build_chunk_mask,
    causal_mask,
    scaled_dot_attention,
    sinusoidal_positions,
)
from hsdacs.models.transformer import DecoderLayer, ForwardOutput, Seq2SeqModel, shift_targets

__all__ = [
    "EOS_ID",
    "FIRST_TOKEN",
    "SOS_ID",
    "ModelConfig",
    "ChunkedEncoder",
    "EncoderStates",
    "lookahead_reach",
    "stack_frames",
    "subsampled_length",
    "Module",
    "MultiHeadAttention",
    "build_chunk_mask",
    "causal_mask",
    "scaled_dot_attention",
    "sinusoidal_positions",
    "DecoderLayer",
    "ForwardOutput",
    "Seq2SeqModel",
    "shift_targets",
]
