from hsdacs.halting.attention import LayerHalting, MonotonicAttention
from hsdacs.halting.halting import (
    TrainHaltingTrace,
    dacs_halt,
    halting_positions,
    head_sum,
    hs_dacs_halt,
    ma_energy,
    train_attention,
    truncated_context,
)

__all__ = [
    "LayerHalting",
    "MonotonicAttention",
    "TrainHaltingTrace",
    "dacs_halt",
    "halting_positions",
    "head_sum",
    "hs_dacs_halt",
    "ma_energy",
    "train_attention",
    "truncated_context",
]
