from typing import Any

from pydantic import BaseModel, ConfigDict, Field, model_validator

from hsdacs.types import HaltingMode

# Reserved token ids; the vocabulary proper starts at FIRST_TOKEN.
SOS_ID = 0
EOS_ID = 1
FIRST_TOKEN = 2


class ModelConfig(BaseModel):
    """
    Architecture and halting hyperparameters.

    Defaults are desk scale. `configs/paper.conf` holds the published sizes
    (d_model 256, 4 heads, FFN 2048, 6 encoder and 12 decoder layers, chunks of 64).

    Attributes:
        d_model (int): Attention dimension d_m.
        num_heads (int): Heads per attention sublayer, H.
        num_encoder_layers (int): N_e.
        num_decoder_layers (int): N_d.
        d_ffn (int): Hidden size of the position-wise feed-forward blocks.
        vocab_size (int): Output classes, reserved ids included.
        d_feat (int): Input feature dimension.
        max_lookahead (int): Maximum look-ahead step M (inference only).
        halting_mode (HaltingMode): Cross-attention used for training and, by default, decoding.
        dacs_threshold (float): Per-head threshold for DACS halting.
        joint_threshold (float): Layer threshold for HS-DACS halting; defaults to H.
        chunk_central, chunk_left, chunk_right (int): Encoder chunk sizes, in subsampled frames.
        subsample_factor (int): Frames stacked by the front-end.
        energy_offset (float): Constant added to monotonic energies; 0 leaves the plain scaled dot product.
        dropout (float): Dropout on attention weights and sublayer outputs while training.
        seed (int): Parameter initialisation seed.
    """

    model_config = ConfigDict(extra="forbid", frozen=True, use_enum_values=False)

    d_model: int = Field(default=64, ge=1)
    num_heads: int = Field(default=4, ge=1)
    num_encoder_layers: int = Field(default=2, ge=0)
    num_decoder_layers: int = Field(default=2, ge=1)
    d_ffn: int = Field(default=256, ge=1)
    vocab_size: int = Field(default=30, ge=3)
    d_feat: int = Field(default=16, ge=1)
    max_lookahead: int = Field(default=16, ge=1)
    halting_mode: HaltingMode = HaltingMode.HSDACS
    dacs_threshold: float = Field(default=1.0, gt=0)
    joint_threshold: float = Field(default=4.0, gt=0)
    chunk_central: int = Field(default=4, ge=1)
    chunk_left: int = Field(default=4, ge=0)
    chunk_right: int = Field(default=4, ge=0)
    subsample_factor: int = Field(default=4, ge=1)
    energy_offset: float = 0.0
    dropout: float = Field(default=0.0, ge=0.0, lt=1.0)
    layer_norm_eps: float = Field(default=1e-6, gt=0)
    seed: int = 0

    @model_validator(mode="before")
    @classmethod
    def _default_joint_threshold(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("joint_threshold") in (None, ""):
            data = dict(data)
            data["joint_threshold"] = float(data.get("num_heads", 4))
        return data

    @model_validator(mode="after")
    def _check_head_split(self) -> "ModelConfig":
        if self.d_model % self.num_heads != 0:
            raise ValueError(f"d_model={self.d_model} is not divisible by num_heads={self.num_heads}")
        return self

    @property
    def d_k(self) -> int:
        return self.d_model // self.num_heads

    def threshold_for(self, mode: HaltingMode) -> float:
        return self.joint_threshold if mode == HaltingMode.HSDACS else self.dacs_threshold

    def to_pairs(self) -> list[tuple[str, str]]:
        return [(key, str(value)) for key, value in self.model_dump(mode="json").items()]
