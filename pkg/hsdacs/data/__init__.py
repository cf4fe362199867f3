from hsdacs.data.batching import Batch, pad_batch
from hsdacs.data.synthetic import (
    DataConfig,
    SyntheticDataset,
    SyntheticSample,
    generate_sample,
    make_codebook,
    nearest_codebook_decode,
)

__all__ = [
    "Batch",
    "pad_batch",
    "DataConfig",
    "SyntheticDataset",
    "SyntheticSample",
    "generate_sample",
    "make_codebook",
    "nearest_codebook_decode",
]
