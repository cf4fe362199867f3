import numpy as np
import pytest

import hsdacs
from hsdacs.data import DataConfig, SyntheticDataset
from hsdacs.models import ModelConfig, Seq2SeqModel


def tiny_model_config(**overrides) -> ModelConfig:
    values = dict(
        d_model=8,
        num_heads=2,
        num_encoder_layers=1,
        num_decoder_layers=2,
        d_ffn=16,
        vocab_size=6,
        d_feat=4,
        subsample_factor=2,
        chunk_central=2,
        chunk_left=2,
        chunk_right=2,
        max_lookahead=4,
        seed=3,
    )
    values.update(overrides)
    return ModelConfig(**values)


def tiny_data_config(**overrides) -> DataConfig:
    values = dict(
        vocab_size=6,
        d_feat=4,
        min_length=2,
        max_length=4,
        min_duration=2,
        max_duration=3,
        train_size=8,
        eval_size=4,
    )
    values.update(overrides)
    return DataConfig(**values)


class BaseTest:
    @pytest.fixture(autouse=True)
    def setup(self):
        yield
        # Reset global settings so tests stay independent
        hsdacs.settings.configure(enable_cache=True, cache_max_size=256, show_progress_bar=False, max_workers=1)

    def make_model(self, **overrides) -> Seq2SeqModel:
        return Seq2SeqModel(tiny_model_config(**overrides))

    def make_dataset(self, size: int = 8, seed: int = 0, **overrides) -> SyntheticDataset:
        return SyntheticDataset(tiny_data_config(**overrides), size, seed)

    @staticmethod
    def assert_close(actual, expected, atol: float = 1e-12):
        np.testing.assert_allclose(np.asarray(actual), np.asarray(expected), rtol=0, atol=atol)
