import numpy as np
from numpy.typing import ArrayLike

from hsdacs.decoding.state import DecodeTrace
from hsdacs.types import ContractError


def coverage_ratio(
    trace: DecodeTrace | ArrayLike,
    num_layers: int | None = None,
    num_heads: int | None = None,
    num_steps: int | None = None,
    num_frames: int | None = None,
) -> float:
    """
    Computation-step coverage: consumed frames summed over every (layer, head,
    output step), divided by N_d * H * L * T.

    `trace` is a DecodeTrace (dimensions default to its own) or a raw array of
    consumed-frame counts s.
    """
    if isinstance(trace, DecodeTrace):
        steps = trace.coverage_steps
        num_layers = trace.num_layers if num_layers is None else num_layers
        num_heads = trace.num_heads if num_heads is None else num_heads
        num_steps = len(trace) if num_steps is None else num_steps
        num_frames = trace.num_frames if num_frames is None else num_frames
    else:
        steps = np.asarray(trace)
    if None in (num_layers, num_heads, num_steps, num_frames):
        raise ContractError("coverage_ratio needs N_d, H, L and T for a raw array")
    if not num_steps or not num_frames or not num_layers or not num_heads:
        raise ContractError("coverage ratio over zero output steps or zero frames")
    return float(np.sum(steps)) / (num_layers * num_heads * num_steps * num_frames)
