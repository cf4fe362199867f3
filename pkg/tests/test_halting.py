import math

import numpy as np
import pytest

from hsdacs.halting import (
    dacs_halt,
    halting_positions,
    hs_dacs_halt,
    ma_energy,
    train_attention,
    truncated_context,
)
from hsdacs.tensor import Tensor
from hsdacs.types import ContractError, HaltingMode, HaltReason, ShapeError
from tests.base_test import BaseTest


def first_crossing(cumulative: np.ndarray, threshold: float, window: int) -> int:
    crossed = np.flatnonzero(cumulative[:window] > threshold)
    return int(crossed[0]) + 1 if crossed.size else window


def random_case(rng: np.random.Generator, num_heads: int | None = None) -> tuple[np.ndarray, int, float]:
    length = int(rng.integers(1, 65))
    shape = (length,) if num_heads is None else (num_heads, length)
    p = rng.random(shape) * rng.choice([0.05, 0.1, 0.5, 1.0])
    window = int(rng.integers(1, length + 1))
    return p, window, float(rng.choice([0.25, 0.5, 1.0, 2.0, 4.0]))


class TestEnergy(BaseTest):
    def test_orthogonal_query_gives_even_odds(self):
        q = Tensor([1.0, 0.0, 0.0, 0.0])
        k = Tensor([[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 3.0, -1.0]])
        e = ma_energy(q, k)
        assert np.array_equal(e.data, np.zeros(2))
        assert np.array_equal(1.0 / (1.0 + np.exp(-e.data)), [0.5, 0.5])

    def test_scaled_dot_product(self):
        k1 = np.array([1.0, 1.0, 1.0, 1.0])
        q = 2.0 * k1 / (k1 @ k1)
        e = ma_energy(Tensor(q), Tensor(k1[None, :]))
        assert e.data[0] == 1.0

    def test_offset_added(self):
        rng = np.random.default_rng(0)
        q, k = rng.standard_normal(4), rng.standard_normal((3, 4))
        e = ma_energy(Tensor(q), Tensor(k), offset=-2.5)
        self.assert_close(e.data, k @ q / 2.0 - 2.5)

    def test_monotonic_layers_have_no_trained_offset(self):
        model = self.make_model(halting_mode="dacs")
        assert not any("offset" in name for name, _ in model.named_parameters())
        assert all(layer.cross_attn.energy_offset == 0.0 for layer in model.layers)

    def test_batched_shape(self):
        rng = np.random.default_rng(1)
        e = ma_energy(Tensor(rng.standard_normal((2, 3, 4))), Tensor(rng.standard_normal((2, 5, 4))))
        assert e.shape == (2, 3, 5)

    def test_width_mismatch(self):
        with pytest.raises(ShapeError):
            ma_energy(Tensor(np.ones(3)), Tensor(np.ones((2, 4))))


class TestDacsHalt(BaseTest):
    def test_crosses_at_second_frame(self):
        result = dacs_halt(np.full(8, 0.6), 1.0, 8)
        assert (result.n_steps, result.reason) == (2, HaltReason.THRESHOLD)
        assert result.truncated_weights.tolist() == [0.6, 0.6]

    def test_equal_to_threshold_does_not_halt(self):
        result = dacs_halt(np.array([0.5, 0.5, 0.5]), 1.0, 3)
        assert (result.n_steps, result.reason) == (3, HaltReason.THRESHOLD)

    def test_window_halt(self):
        result = dacs_halt(np.full(40, 0.01), 1.0, 16)
        assert (result.n_steps, result.reason) == (16, HaltReason.WINDOW)
        assert len(result.truncated_weights) == 16

    @pytest.mark.parametrize("window", [0, 5])
    def test_bad_window(self, window):
        with pytest.raises(ContractError):
            dacs_halt(np.full(4, 0.3), 1.0, window)

    def test_matches_cumulative_sum_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(10_000):
            p, window, threshold = random_case(rng)
            result = dacs_halt(p, threshold, window)
            assert result.n_steps == first_crossing(np.cumsum(p), threshold, window)

    def test_mass_bound(self):
        rng = np.random.default_rng(3)
        for _ in range(500):
            p = rng.random(12)
            result = dacs_halt(p, 1.0, 12)
            n, cum = result.n_steps, np.concatenate([[0.0], np.cumsum(p)])
            if result.reason == HaltReason.THRESHOLD:
                assert cum[n - 1] <= 1.0 < cum[n]
            else:
                assert cum[n] <= 1.0

    def test_threshold_and_window_monotone(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            p = rng.random(10) * 0.6
            thresholds = sorted(rng.random(2) * 3)
            assert dacs_halt(p, thresholds[0], 10).n_steps <= dacs_halt(p, thresholds[1], 10).n_steps
            w1, w2 = sorted(rng.integers(1, 11, size=2))
            assert dacs_halt(p, 1.0, int(w1)).n_steps <= dacs_halt(p, 1.0, int(w2)).n_steps


class TestHsDacsHalt(BaseTest):
    def test_layer_sum_crosses(self):
        p = np.array([[0.9, 0.9], [0.2, 0.2]])
        result = hs_dacs_halt(p, 2.0, 2)
        assert (result.n_steps, result.reason) == (2, HaltReason.THRESHOLD)
        assert result.truncated_weights.shape == (2, 2)

    def test_near_zero_heads_window_halt(self):
        result = hs_dacs_halt(np.full((4, 30), 1e-6), 4.0, 16)
        assert (result.n_steps, result.reason) == (16, HaltReason.WINDOW)

    def test_single_head_equals_dacs(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            length = int(rng.integers(1, 25))
            p = rng.random(length)
            window = int(rng.integers(1, length + 1))
            single = dacs_halt(p, 1.0, window)
            shared = hs_dacs_halt(p[None, :], 1.0, window)
            assert (shared.n_steps, shared.reason) == (single.n_steps, single.reason)
            assert np.array_equal(shared.truncated_weights[0], single.truncated_weights)

    def test_joint_mass_may_exceed_one_per_head(self):
        p = np.array([[0.9, 0.9, 0.9], [0.0, 0.0, 0.0]])
        result = hs_dacs_halt(p, 2.0, 3)
        assert result.n_steps == 3
        assert result.truncated_weights[0].sum() > 1.0

    def test_matches_cumulative_sum_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(10_000):
            p, window, threshold = random_case(rng, num_heads=int(rng.integers(1, 9)))
            layer = p[0].copy()
            for row in p[1:]:
                layer = layer + row
            result = hs_dacs_halt(p, threshold, window)
            assert result.n_steps == first_crossing(np.cumsum(layer), threshold, window)

    def test_joint_threshold_monotone(self):
        rng = np.random.default_rng(6)
        for _ in range(1000):
            p = rng.random((4, 12)) * 0.4
            lo, hi = sorted(rng.random(2) * 6)
            assert hs_dacs_halt(p, lo, 12).n_steps <= hs_dacs_halt(p, hi, 12).n_steps

    def test_needs_two_axes(self):
        with pytest.raises(ShapeError):
            hs_dacs_halt(np.full(4, 0.5), 1.0, 4)


class TestTruncatedContext(BaseTest):
    def test_unnormalised_sum(self):
        ctx = truncated_context(Tensor([0.5, 0.25]), Tensor([[1.0, 0.0], [0.0, 1.0]]))
        assert ctx.data.tolist() == [0.5, 0.25]

    def test_vanishing_probabilities(self):
        rng = np.random.default_rng(7)
        q, k, v = rng.standard_normal(4), rng.standard_normal((5, 4)), rng.standard_normal((5, 4))
        e = ma_energy(Tensor(q), Tensor(k), offset=-1e4)
        p = 1.0 / (1.0 + np.exp(-e.data))
        assert np.array_equal(truncated_context(Tensor(p), Tensor(v)).data, np.zeros(4))

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            truncated_context(Tensor([0.5]), Tensor(np.ones((2, 2))))


class TestTrainAttention(BaseTest):
    @pytest.fixture
    def qkv(self):
        rng = np.random.default_rng(8)
        return (
            Tensor(rng.standard_normal((1, 2, 3, 4))),
            Tensor(rng.standard_normal((1, 2, 8, 4))),
            Tensor(rng.standard_normal((1, 2, 8, 4))),
        )

    def test_infinite_threshold_keeps_everything(self, qkv):
        q, k, v = qkv
        ctx, trace = train_attention(q, k, v, HaltingMode.DACS, math.inf)
        assert (trace.n_steps == 8).all()
        self.assert_close(ctx.data, trace.p @ v.data, atol=1e-12)

    @pytest.mark.parametrize("mode,threshold", [(HaltingMode.DACS, 1.0), (HaltingMode.HSDACS, 2.0)])
    def test_matches_step_wise_rules(self, qkv, mode, threshold):
        q, k, v = qkv
        ctx, trace = train_attention(q, k, v, mode, threshold)
        for i in range(3):
            if mode == HaltingMode.HSDACS:
                shared = hs_dacs_halt(trace.p[0, :, i], threshold, 8)
                results = [shared, shared]
            else:
                results = [dacs_halt(trace.p[0, h, i], threshold, 8) for h in range(2)]
            for h, result in enumerate(results):
                n = result.n_steps
                assert trace.n_steps[0, h, i] == n
                expected = truncated_context(Tensor(trace.p[0, h, i, :n]), Tensor(v.data[0, h, :n]))
                assert np.array_equal(ctx.data[0, h, i], expected.data)

    def test_hand_built_row(self):
        p_logits = np.log(np.array([0.5, 0.25, 0.8, 0.1]) / (1 - np.array([0.5, 0.25, 0.8, 0.1])))
        # unit query against keys scaled so the energies equal the logits
        q = Tensor(np.ones((1, 1, 1, 1)))
        k = Tensor(p_logits.reshape(1, 1, 4, 1))
        v = Tensor(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 2.0]]).reshape(1, 1, 4, 2))
        ctx, trace = train_attention(q, k, v, HaltingMode.DACS, 1.0)
        # 0.5 + 0.25 + 0.8 crosses 1.0 at the third frame
        assert trace.n_steps[0, 0, 0] == 3
        self.assert_close(ctx.data[0, 0, 0], [0.5 + 0.8, 0.25 + 0.8], atol=1e-12)

    def test_lengths_cap_window(self):
        p = np.full((2, 1, 1, 6), 0.01)
        n = halting_positions(p, HaltingMode.DACS, 1.0, np.array([6, 3]))
        assert n[:, 0, 0].tolist() == [6, 3]

    def test_hsdacs_positions_shared_across_heads(self):
        p = np.random.default_rng(9).random((2, 4, 5, 10)) * 0.3
        n = halting_positions(p, HaltingMode.HSDACS, 4.0)
        assert (n == n[:, :1]).all()

    def test_offline_has_no_halting(self):
        with pytest.raises(ContractError):
            halting_positions(np.full((1, 1, 1, 2), 0.5), HaltingMode.OFFLINE, 1.0)

    def test_gradient_stops_at_truncation(self, qkv):
        q, _, v = qkv
        k = Tensor(np.random.default_rng(10).standard_normal((1, 2, 8, 4)), requires_grad=True)
        v = Tensor(v.data, requires_grad=True)
        ctx, trace = train_attention(q, k, v, HaltingMode.DACS, 0.5)
        ctx.sum().backward()
        last = int(trace.n_steps.max())
        assert last < 8
        assert np.array_equal(v.grad[..., last:, :], np.zeros_like(v.grad[..., last:, :]))
