import numpy as np
from numpy.typing import NDArray

from hsdacs.tensor import Tensor
from hsdacs.tensor import functional as F
from hsdacs.types import ContractError, DataError


def smoothed_targets(targets: NDArray[np.int64], vocab_size: int, epsilon: float) -> NDArray[np.float64]:
    """Target distributions: 1 - epsilon on the target id, epsilon / (V - 1) elsewhere."""
    dist = np.full(targets.shape + (vocab_size,), epsilon / (vocab_size - 1))
    np.put_along_axis(dist, targets[..., None], 1.0 - epsilon, axis=-1)
    return dist


def label_smoothed_ce(
    logits: Tensor,
    targets: NDArray[np.int64],
    epsilon: float,
    mask: NDArray[np.bool_] | None = None,
) -> Tensor:
    """
    Label-smoothed cross-entropy.

    For `[L, V]` logits the loss is the mean over unmasked positions. For a batch
    `[B, L, V]` it is the mean over samples of each sample's position mean, so
    padding never changes a sample's weight.

    Raises:
        DataError: If a target id lies outside `[0, V)`.
    """
    vocab_size = logits.shape[-1]
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != logits.shape[:-1]:
        raise ContractError(f"targets {targets.shape} do not match logits {logits.shape}")
    if vocab_size < 2:
        raise ContractError("label smoothing needs at least two classes")
    if mask is None:
        mask = np.ones(targets.shape, dtype=bool)
    if (mask & ((targets < 0) | (targets >= vocab_size))).any():
        raise DataError(f"target id outside [0, {vocab_size})")
    if not mask.any(axis=-1).all():
        raise ContractError("a sample without any unmasked position")

    safe = np.where(mask, targets, 0)
    per_position = -F.sum(F.log_softmax(logits) * Tensor(smoothed_targets(safe, vocab_size, epsilon)), axis=-1)
    weights = mask / mask.sum(axis=-1, keepdims=True)
    if weights.ndim == 2:
        weights = weights / weights.shape[0]
    return F.sum(per_position * Tensor(weights))
