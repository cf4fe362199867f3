"""Monotonic energies, halting rules and truncated contexts.

The step-wise rules (`dacs_halt`, `hs_dacs_halt`) scan the window one encoder
frame at a time, the way a streaming decoder consumes it. `train_attention` is
the vectorised form over whole sequences; both accumulate left to right, so
they agree exactly on identical probabilities.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from hsdacs.tensor import Tensor
from hsdacs.tensor import functional as F
from hsdacs.types import ContractError, HaltingMode, HaltReason, HaltResult, ShapeError


def ma_energy(q_prev: Tensor, k: Tensor, offset: float = 0.0) -> Tensor:
    """
    Monotonic energies of a query against keys, `q k^T / sqrt(d_k) + offset`.

    Accepts one query `[d_k]` against `[J, d_k]` keys (returns `[J]`) or batched
    `[..., L, d_k]` against `[..., J, d_k]` (returns `[..., L, J]`).
    """
    single = q_prev.ndim == 1
    if single:
        q_prev = F.reshape(q_prev, (1, q_prev.shape[0]))
    if q_prev.shape[-1] != k.shape[-1]:
        raise ShapeError(f"ma_energy: query {q_prev.shape} and keys {k.shape} differ in d_k")
    e = F.ordered_scores(q_prev, k) * (1.0 / math.sqrt(k.shape[-1]))
    if offset:
        e = e + offset
    if single:
        e = F.reshape(e, (k.shape[0],))
    return e


def _check_window(num_frames: int, window: int) -> None:
    if window < 1 or num_frames < 1:
        raise ContractError("halting over an empty window")
    if window > num_frames:
        raise ContractError(f"window end {window} exceeds the {num_frames} available probabilities")


def dacs_halt(p: NDArray[np.float64], threshold: float, window: int) -> HaltResult:
    """
    Per-head halting: stop at the first frame where the running sum of halting
    probabilities strictly exceeds `threshold`, otherwise at the window end.

    Args:
        p (NDArray[np.float64]): `[J]` halting probabilities of one head.
        threshold (float): Halting threshold.
        window (int): Window end W; only `p[:W]` is examined.

    Returns:
        HaltResult: 1-based halting position, the reason and `p[:N]`.
    """
    p = np.asarray(p, dtype=np.float64)
    _check_window(p.shape[-1], window)
    acc = 0.0
    for j in range(window):
        acc = acc + float(p[j])
        if acc > threshold:
            return HaltResult(j + 1, HaltReason.THRESHOLD, p[: j + 1].copy())
    return HaltResult(window, HaltReason.WINDOW, p[:window].copy())


def hs_dacs_halt(p: NDArray[np.float64], joint_threshold: float, window: int) -> HaltResult:
    """
    Head-synchronous halting: one position for all heads of a layer, where the
    running sum of the head-summed probabilities strictly exceeds `joint_threshold`.

    Args:
        p (NDArray[np.float64]): `[H, J]` halting probabilities of one layer.

    Returns:
        HaltResult: Shared halting position; `truncated_weights` is `p[:, :N]`.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise ShapeError(f"hs_dacs_halt expects [H, J] probabilities, got {p.shape}")
    _check_window(p.shape[-1], window)
    acc = 0.0
    for j in range(window):
        layer = float(p[0, j])
        for h in range(1, p.shape[0]):
            layer = layer + float(p[h, j])
        acc = acc + layer
        if acc > joint_threshold:
            return HaltResult(j + 1, HaltReason.THRESHOLD, p[:, : j + 1].copy())
    return HaltResult(window, HaltReason.WINDOW, p[:, :window].copy())


def truncated_context(p: Tensor, v: Tensor) -> Tensor:
    """Unnormalised context `sum_j p_j v_j` over the retained frames, `[N] x [N, d_k] -> [d_k]`."""
    if p.shape[0] != v.shape[0]:
        raise ShapeError(f"truncated_context: {p.shape[0]} weights for {v.shape[0]} values")
    w = F.reshape(p, (1, p.shape[0]))
    return F.reshape(F.ordered_weighted_sum(w, v), (v.shape[1],))


################################################################################
# Vectorised training-time form
################################################################################
def head_sum(p: NDArray[np.float64], head_axis: int = -3) -> NDArray[np.float64]:
    """Sum over heads taken left to right, matching `hs_dacs_halt`."""
    p = np.moveaxis(p, head_axis, 0)
    acc = p[0].copy()
    for h in range(1, p.shape[0]):
        acc = acc + p[h]
    return acc


def halting_positions(
    p: NDArray[np.float64],
    mode: HaltingMode,
    threshold: float,
    lengths: NDArray[np.int64] | None = None,
) -> NDArray[np.int64]:
    """
    Halting positions for every (head, output step) from full probability rows.

    Args:
        p (NDArray[np.float64]): `[..., H, L, T]` halting probabilities.
        mode (HaltingMode): DACS halts each head, HS-DACS each layer.
        threshold (float): θ or Θ.
        lengths (NDArray[np.int64] | None): Valid frames per leading batch item (`[B]`); the
            window end W is the utterance length.

    Returns:
        NDArray[np.int64]: `[..., H, L]` 1-based positions (HS-DACS values repeat over H).
    """
    num_frames = p.shape[-1]
    if lengths is None:
        window = np.full(p.shape[:-3], num_frames, dtype=np.int64)
    else:
        window = np.asarray(lengths, dtype=np.int64)
    valid = np.arange(num_frames) < window[..., None, None, None]
    masked = np.where(valid, p, 0.0)

    if mode == HaltingMode.HSDACS:
        cum = np.cumsum(head_sum(masked), axis=-1)[..., None, :, :]
    elif mode == HaltingMode.DACS:
        cum = np.cumsum(masked, axis=-1)
    else:
        raise ContractError(f"no halting in {mode.value} mode")
    crossed = cum > threshold
    first = np.argmax(crossed, axis=-1) + 1
    limit = np.broadcast_to(window[..., None, None], first.shape)
    n = np.where(crossed.any(axis=-1), first, limit)
    return np.broadcast_to(n, p.shape[:-1]).astype(np.int64)


@dataclass
class TrainHaltingTrace:
    """Probabilities `[B, H, L, T]` and halting positions `[B, H, L]` of one monotonic layer."""

    p: NDArray[np.float64]
    n_steps: NDArray[np.int64]


def train_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    mode: HaltingMode,
    threshold: float,
    lengths: NDArray[np.int64] | None = None,
    offset: float = 0.0,
) -> tuple[Tensor, TrainHaltingTrace]:
    """
    Truncated monotonic attention over full sequences (training, no look-ahead cap).

    Every probability row is computed at once, the halting position is found with
    the threshold alone, and weights beyond it are zeroed. Gradients reach only
    the retained probabilities.

    Args:
        q (Tensor): `[B, H, L, d_k]` queries (decoder states entering cross-attention).
        k (Tensor): `[B, H, T, d_k]` keys.
        v (Tensor): `[B, H, T, d_k]` values.
        mode (HaltingMode): DACS or HS-DACS.
        threshold (float): θ or Θ; `math.inf` disables truncation.
        lengths (NDArray[np.int64] | None): Valid encoder frames per utterance.
        offset (float): Constant added to every energy.

    Returns:
        tuple[Tensor, TrainHaltingTrace]: Contexts `[B, H, L, d_k]` and the halting record.
    """
    p = F.sigmoid(ma_energy(q, k, offset))
    n_steps = halting_positions(p.data, mode, threshold, lengths)
    keep = np.arange(p.shape[-1]) < n_steps[..., None]
    weights = p * Tensor(keep.astype(np.float64))
    return F.ordered_weighted_sum(weights, v), TrainHaltingTrace(p.data, n_steps)
