import numpy as np
import pytest
from pydantic import ValidationError

from hsdacs.models import ModelConfig
from hsdacs.models.encoder import ChunkedEncoder, lookahead_reach, stack_frames, subsampled_length
from hsdacs.models.layers import (
    Embedding,
    Module,
    MultiHeadAttention,
    build_chunk_mask,
    parameter,
    scaled_dot_attention,
    sinusoidal_positions,
)
from hsdacs.models.transformer import shift_targets
from hsdacs.tensor import Tensor, no_grad
from hsdacs.types import ContractError, DataError, ShapeError
from tests.base_test import BaseTest, tiny_model_config


def softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class TestScaledDotAttention(BaseTest):
    def test_single_key_returns_its_value(self):
        rng = np.random.default_rng(0)
        q, k, v = rng.standard_normal((2, 4)), rng.standard_normal((1, 4)), rng.standard_normal((1, 3))
        ctx, weights = scaled_dot_attention(Tensor(q), Tensor(k), Tensor(v))
        assert np.array_equal(weights.data, np.ones((2, 1)))
        self.assert_close(ctx.data, np.repeat(v, 2, axis=0))

    def test_orthogonal_query_averages_values(self):
        v = np.random.default_rng(1).standard_normal((4, 3))
        k = np.random.default_rng(2).standard_normal((4, 2))
        ctx, _ = scaled_dot_attention(Tensor(np.zeros((1, 2))), Tensor(k), Tensor(v))
        self.assert_close(ctx.data[0], v.mean(axis=0))

    def test_fully_masked_row_rejected(self):
        mask = np.array([[True, False], [False, False]])
        with pytest.raises(ContractError):
            scaled_dot_attention(Tensor(np.ones((2, 2))), Tensor(np.ones((2, 2))), Tensor(np.ones((2, 2))), mask)

    def test_masked_keys_get_zero_weight(self):
        rng = np.random.default_rng(3)
        mask = np.array([[True, True, False]])
        _, weights = scaled_dot_attention(
            Tensor(rng.standard_normal((1, 2))), Tensor(rng.standard_normal((3, 2))), Tensor(np.eye(3)), mask
        )
        assert weights.data[0, 2] == 0.0
        self.assert_close(weights.data.sum(), 1.0)


class TestMultiHeadAttention(BaseTest):
    def test_single_head_is_attention_then_output_projection(self):
        rng = np.random.default_rng(4)
        mha = MultiHeadAttention(6, 1, rng)
        x, mem = rng.standard_normal((3, 6)), rng.standard_normal((5, 6))
        out, _ = mha(Tensor(x), Tensor(mem))
        q, k, v = x @ mha.w_q.weight.data, mem @ mha.w_k.weight.data, mem @ mha.w_v.weight.data
        ctx, _ = scaled_dot_attention(Tensor(q), Tensor(k), Tensor(v))
        self.assert_close(out.data, ctx.data @ mha.w_o.weight.data)

    def test_identity_projections_split_into_halves(self):
        rng = np.random.default_rng(5)
        mha = MultiHeadAttention(4, 2, rng)
        for proj in (mha.w_q, mha.w_k, mha.w_v, mha.w_o):
            proj.weight.data = np.eye(4)
        x, mem = rng.standard_normal((3, 4)), rng.standard_normal((6, 4))
        out, _ = mha(Tensor(x), Tensor(mem))
        halves = [
            scaled_dot_attention(Tensor(x[:, s]), Tensor(mem[:, s]), Tensor(mem[:, s]))[0].data
            for s in (slice(0, 2), slice(2, 4))
        ]
        self.assert_close(out.data, np.concatenate(halves, axis=1))

    def test_matches_manual_per_head_computation(self):
        rng = np.random.default_rng(6)
        mha = MultiHeadAttention(8, 4, rng)
        x, mem = rng.standard_normal((2, 5, 8)), rng.standard_normal((2, 7, 8))
        out, _ = mha(Tensor(x), Tensor(mem))

        q, k, v = x @ mha.w_q.weight.data, mem @ mha.w_k.weight.data, mem @ mha.w_v.weight.data
        heads = []
        for h in range(4):
            s = slice(2 * h, 2 * h + 2)
            w = softmax(q[..., s] @ k[..., s].transpose(0, 2, 1) / np.sqrt(2.0))
            heads.append(w @ v[..., s])
        expected = np.concatenate(heads, axis=-1) @ mha.w_o.weight.data
        assert np.abs(out.data - expected).max() < 1e-12

    def test_zero_output_projection(self):
        rng = np.random.default_rng(7)
        mha = MultiHeadAttention(4, 2, rng)
        mha.w_o.weight.data = np.zeros((4, 4))
        out, _ = mha(Tensor(rng.standard_normal((3, 4)) * 100), Tensor(rng.standard_normal((2, 4))))
        assert np.array_equal(out.data, np.zeros((3, 4)))

    def test_indivisible_heads_rejected_by_config(self):
        with pytest.raises(ValidationError):
            ModelConfig(d_model=10, num_heads=4)

    def test_project_memory_matches_split_heads(self):
        rng = np.random.default_rng(8)
        mha = MultiHeadAttention(4, 2, rng)
        enc = rng.standard_normal((5, 4))
        keys, values = mha.project_memory(enc)
        assert keys.shape == values.shape == (2, 5, 2)
        self.assert_close(keys[1], (enc @ mha.w_k.weight.data)[:, 2:])


class TestChunkMask(BaseTest):
    def test_no_context_is_block_diagonal(self):
        mask = build_chunk_mask(6, 2, 0, 0)
        expected = np.kron(np.eye(3, dtype=bool), np.ones((2, 2), dtype=bool))
        assert np.array_equal(mask, expected)

    def test_enumerated_rows(self):
        mask = build_chunk_mask(6, 2, 2, 2)
        assert np.flatnonzero(mask[0]).tolist() == [0, 1, 2, 3]
        assert np.flatnonzero(mask[2]).tolist() == [0, 1, 2, 3, 4, 5]
        assert np.flatnonzero(mask[4]).tolist() == [2, 3, 4, 5]

    @pytest.mark.parametrize("left,right", [(0, 0), (3, 1), (10, 10)])
    def test_central_covering_sequence_is_full(self, left, right):
        assert build_chunk_mask(5, 8, left, right).all()

    def test_invalid_central_rejected(self):
        with pytest.raises(ContractError):
            build_chunk_mask(4, 0, 1, 1)


class TestSubsampling(BaseTest):
    def test_ten_frames_by_four(self):
        stacked = stack_frames(np.ones((10, 3)), 4)
        assert stacked.shape == (3, 12)
        # last group holds frames 8 and 9 and two zero frames
        assert np.array_equal(stacked[2], np.r_[np.ones(6), np.zeros(6)])

    def test_lengths_are_ceiling(self):
        for factor in (1, 2, 4):
            for num_frames in range(1, 101):
                assert subsampled_length(num_frames, factor) == -(-num_frames // factor)
                assert stack_frames(np.zeros((num_frames, 2)), factor).shape[0] == -(-num_frames // factor)

    def test_factor_one_identity_projection(self):
        config = tiny_model_config(subsample_factor=1, d_feat=8, num_encoder_layers=1)
        encoder = ChunkedEncoder(config, np.random.default_rng(0))
        encoder.frontend.proj.weight.data = np.eye(8)
        features = np.random.default_rng(1).standard_normal((5, 8))
        out = encoder.frontend(features[None])
        self.assert_close(out.data[0], features + sinusoidal_positions(5, 8))

    def test_empty_input_rejected(self):
        with pytest.raises(DataError):
            stack_frames(np.zeros((0, 4)), 2)


class TestEncoder(BaseTest):
    def test_zero_weights_give_normalised_positions(self):
        config = tiny_model_config()
        encoder = ChunkedEncoder(config, np.random.default_rng(0))
        for name, p in encoder.named_parameters():
            if not name.endswith("gain"):
                p.data = np.zeros_like(p.data)
        with no_grad():
            out = encoder(np.random.default_rng(1).standard_normal((9, config.d_feat)))
        pe = sinusoidal_positions(5, config.d_model)
        centred = pe - pe.mean(axis=-1, keepdims=True)
        expected = centred / np.sqrt(centred.var(axis=-1, keepdims=True) + config.layer_norm_eps)
        self.assert_close(out.states.data[0], expected, atol=1e-12)

    def test_full_chunk_equals_offline_encoder(self):
        config = tiny_model_config(chunk_central=64, num_encoder_layers=2)
        encoder = ChunkedEncoder(config, np.random.default_rng(0))
        features = np.random.default_rng(2).standard_normal((2, 20, config.d_feat))
        lengths = np.array([20, 20])
        with no_grad():
            chunked = encoder(features, lengths).states.data
            encoder.attention_mask = lambda lens, t: np.ones((len(lens), t, t), dtype=bool)
            offline = encoder(features, lengths).states.data
        assert np.abs(chunked - offline).max() < 1e-12

    def test_output_ignores_frames_beyond_lookahead(self):
        config = tiny_model_config(num_encoder_layers=2)
        encoder = ChunkedEncoder(config, np.random.default_rng(0))
        rng = np.random.default_rng(3)
        features = rng.standard_normal((40, config.d_feat))
        with no_grad():
            base = encoder(features).states.data[0]
            for t in (0, 3, 6, 9):
                cutoff = (lookahead_reach(t, config) + 1) * config.subsample_factor
                perturbed = features.copy()
                perturbed[cutoff:] = rng.standard_normal(perturbed[cutoff:].shape) * 10
                out = encoder(perturbed).states.data[0]
                assert np.array_equal(out[: t + 1], base[: t + 1])

    def test_lookahead_bound_is_within_conservative_bound(self):
        config = tiny_model_config(num_encoder_layers=3, chunk_central=2, chunk_left=2, chunk_right=2)
        c, r = 2, 2
        for t in range(30):
            conservative = ((t // c + 1) * c + r) + 2 * (c + r)
            assert lookahead_reach(t, config) < conservative

    def test_padded_utterance_matches_unpadded(self):
        config = tiny_model_config()
        encoder = ChunkedEncoder(config, np.random.default_rng(0))
        features = np.random.default_rng(4).standard_normal((12, config.d_feat))
        padded = np.concatenate([features, np.zeros((6, config.d_feat))])[None]
        with no_grad():
            alone = encoder(features).states.data[0]
            batch = encoder(padded, np.array([12]))
        assert batch.lengths.tolist() == [6]
        self.assert_close(batch.utterance(0), alone, atol=1e-12)

    def test_wrong_feature_width_rejected(self):
        config = tiny_model_config()
        encoder = ChunkedEncoder(config, np.random.default_rng(0))
        with pytest.raises(ShapeError):
            encoder(np.zeros((6, config.d_feat + 1)))

    def test_zero_length_rejected(self):
        config = tiny_model_config()
        encoder = ChunkedEncoder(config, np.random.default_rng(0))
        with pytest.raises(DataError):
            encoder(np.zeros((1, 6, config.d_feat)), np.array([0]))


class TestDecoderSelfAttention(BaseTest):
    def test_position_ignores_later_tokens(self):
        model = self.make_model(halting_mode="offline")
        features = np.random.default_rng(5).standard_normal((1, 10, 4))
        targets = np.array([[2, 3, 4, 5]])
        mask = np.ones((1, 4), dtype=bool)
        with no_grad():
            enc = model.encode(features)
            ys_in, _, in_mask = shift_targets(targets, mask)
            base, _, _ = model.decode_teacher_forced(enc, ys_in, in_mask)
            changed_in = ys_in.copy()
            changed_in[0, 3:] = [5, 2]
            changed, _, _ = model.decode_teacher_forced(enc, changed_in, in_mask)
        assert np.array_equal(base.data[0, :3], changed.data[0, :3])
        assert not np.array_equal(base.data[0, 3:], changed.data[0, 3:])

    def test_shift_targets(self):
        targets = np.array([[2, 3, 4], [5, 6, 0]])
        mask = np.array([[True, True, True], [True, True, False]])
        ys_in, ys_out, out_mask = shift_targets(targets, mask)
        assert ys_in.tolist() == [[0, 2, 3, 4], [0, 5, 6, 0]]
        assert ys_out.tolist() == [[2, 3, 4, 1], [5, 6, 1, 1]]
        assert out_mask.tolist() == [[True] * 4, [True, True, True, False]]


class TestEmbedding(BaseTest):
    def test_out_of_range_id_rejected(self):
        emb = Embedding(5, 4, np.random.default_rng(0))
        with pytest.raises(ContractError):
            emb(np.array([0, 5]))


class Scaled(Module):
    def __init__(self):
        self.gain = parameter(np.asarray(1.0))
        self.weight = parameter(np.ones((2, 2)))


class TestStateDict(BaseTest):
    def test_zero_dimensional_parameter_round_trip(self):
        module = Scaled()
        state = {"gain": np.asarray(3.0), "weight": np.full((2, 2), 2.0)}
        module.load_state_dict(state)
        assert module.gain.shape == ()
        assert float(module.gain.data) == 3.0
        assert module.state_dict()["gain"].shape == ()

    def test_shape_mismatch_rejected(self):
        module = Scaled()
        with pytest.raises(ShapeError):
            module.load_state_dict({"gain": np.asarray([3.0]), "weight": np.ones((2, 2))})

    def test_missing_entry_rejected(self):
        with pytest.raises(ShapeError):
            Scaled().load_state_dict({"gain": np.asarray(1.0)})
