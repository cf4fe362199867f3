from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from hsdacs.data.synthetic import SyntheticSample
from hsdacs.types import ContractError


@dataclass
class Batch:
    features: NDArray[np.float64]
    feature_lengths: NDArray[np.int64]
    targets: NDArray[np.int64]
    target_mask: NDArray[np.bool_]

    def __len__(self) -> int:
        return int(self.features.shape[0])


def pad_batch(samples: Sequence[SyntheticSample]) -> Batch:
    """
    Zero-pad samples to the longest feature and target lengths.

    Raises:
        ContractError: If `samples` is empty.
    """
    if not samples:
        raise ContractError("cannot batch zero samples")
    num_frames = max(s.num_frames for s in samples)
    length = max(len(s.target) for s in samples)
    d_feat = samples[0].features.shape[1]

    features = np.zeros((len(samples), num_frames, d_feat))
    targets = np.zeros((len(samples), length), dtype=np.int64)
    target_mask = np.zeros((len(samples), length), dtype=bool)
    for b, sample in enumerate(samples):
        features[b, : sample.num_frames] = sample.features
        targets[b, : len(sample.target)] = sample.target
        target_mask[b, : len(sample.target)] = True
    feature_lengths = np.array([s.num_frames for s in samples], dtype=np.int64)
    return Batch(features, feature_lengths, targets, target_mask)
