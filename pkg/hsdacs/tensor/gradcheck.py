"""Central finite-difference checks of the reverse-mode gradients."""

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

import hsdacs
from hsdacs.tensor import functional as F
from hsdacs.tensor.tensor import Tensor


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    max_abs_error: float
    coordinates: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_gradients(
    name: str,
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    tolerance: float = 1e-4,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckResult:
    """
    Compare autodiff gradients of `loss_fn()` with central differences.

    Args:
        loss_fn (Callable[[], Tensor]): Rebuilds the scalar loss from the current parameter values.
        params (Sequence[Tensor]): Tensors to check; perturbed in place and restored.
        max_coords (int | None): Check at most this many random coordinates per tensor.
    """
    for p in params:
        p.zero_grad()
    loss_fn().backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]

    rng = rng if rng is not None else np.random.default_rng(0)
    worst_rel, worst_abs, count = 0.0, 0.0, 0
    for p, grad in zip(params, analytic):
        coords = np.arange(p.size)
        if max_coords is not None and p.size > max_coords:
            coords = np.sort(rng.choice(p.size, size=max_coords, replace=False))
        flat = p.data.reshape(-1)
        for c in coords:
            original = flat[c]
            flat[c] = original + h
            plus = loss_fn().item()
            flat[c] = original - h
            minus = loss_fn().item()
            flat[c] = original
            numeric = (plus - minus) / (2.0 * h)
            a = float(grad.reshape(-1)[c])
            worst_rel = max(worst_rel, relative_error(a, numeric))
            worst_abs = max(worst_abs, abs(a - numeric))
            count += 1
    return GradCheckResult(name, worst_rel, worst_abs, count, tolerance)


################################################################################
# Suite
################################################################################
def _op_cases(rng: np.random.Generator) -> list[tuple[str, Callable[[], Tensor], list[Tensor]]]:
    def leaf(*shape: int, positive: bool = False) -> Tensor:
        data = rng.standard_normal(shape)
        return Tensor(np.abs(data) + 0.5 if positive else data, requires_grad=True)

    def const(shape: tuple[int, ...]) -> Tensor:
        return Tensor(rng.standard_normal(shape))

    a, b, bias = leaf(3, 4), leaf(3, 4), leaf(4)
    denom = leaf(3, 4, positive=True)
    m1, m2, batched = leaf(3, 4), leaf(4, 2), leaf(2, 3, 4)
    x, gain, beta = leaf(2, 5), leaf(5), leaf(5)
    q, k, v = leaf(2, 3, 4), leaf(2, 5, 4), leaf(2, 5, 3)
    w = Tensor(np.abs(rng.standard_normal((2, 3, 5))), requires_grad=True)
    table, ids = leaf(6, 3), np.array([[0, 2, 2], [5, 1, 0]])
    keep = (rng.random((3, 4)) > 0.3) | np.eye(3, 4, dtype=bool)

    w34, w32, w25 = const((3, 4)), const((3, 2)), const((2, 5))
    w232, w62, w22, w64 = const((2, 3, 2)), const((6, 2)), const((2, 2)), const((6, 4))
    w233, w235 = const((2, 3, 3)), const((2, 3, 5))
    return [
        ("add", lambda: F.sum((a + b + bias) * w34), [a, b, bias]),
        ("sub", lambda: F.sum((a - bias) * w34), [a, bias]),
        ("mul", lambda: F.sum(a * b * w34), [a, b]),
        ("div", lambda: F.sum(a / denom * w34), [a, denom]),
        ("relu", lambda: F.sum(F.relu(a) * w34), [a]),
        ("sigmoid", lambda: F.sum(F.sigmoid(a) * w34), [a]),
        ("softmax", lambda: F.sum(F.softmax_rows(a) * w34), [a]),
        ("log_softmax", lambda: F.sum(F.log_softmax(a) * w34), [a]),
        ("layer_norm", lambda: F.sum(F.layer_norm(x, gain, beta, 1e-6) * w25), [x, gain, beta]),
        ("matmul", lambda: F.sum(F.matmul(m1, m2) * w32), [m1, m2]),
        ("batched_matmul", lambda: F.sum(F.matmul(batched, m2) * w232), [batched, m2]),
        ("mean", lambda: F.mean(a * a, axis=0).sum(), [a]),
        ("reshape_transpose", lambda: F.sum(F.transpose(F.reshape(a, (2, 6))) * w62), [a]),
        ("getitem", lambda: F.sum(a[1:, ::2] * w22), [a]),
        ("concat", lambda: F.sum(F.concat([a, b], axis=0) * w64), [a, b]),
        ("embedding", lambda: F.sum(F.embedding(table, ids) * w233), [table]),
        ("masked_fill", lambda: F.sum(F.softmax_rows(F.masked_fill(a, keep, -np.inf)) * w34), [a]),
        ("ordered_scores", lambda: F.sum(F.ordered_scores(q, k) * w235), [q, k]),
        ("ordered_weighted_sum", lambda: F.sum(F.ordered_weighted_sum(w, v) * w233), [w, v]),
    ]


def _model_case(mode: str, rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    from hsdacs.data.batching import pad_batch
    from hsdacs.data.synthetic import DataConfig, SyntheticDataset
    from hsdacs.models.config import ModelConfig
    from hsdacs.models.transformer import Seq2SeqModel
    from hsdacs.training.loss import label_smoothed_ce
    from hsdacs.types import HaltingMode

    config = ModelConfig(
        d_model=8,
        num_heads=2,
        num_encoder_layers=2,
        num_decoder_layers=2,
        d_ffn=16,
        vocab_size=6,
        d_feat=4,
        subsample_factor=2,
        chunk_central=2,
        chunk_left=2,
        chunk_right=2,
        halting_mode=HaltingMode(mode),
        dacs_threshold=1.0,
        joint_threshold=2.0,
        seed=int(rng.integers(1 << 31)),
    )
    data = DataConfig(vocab_size=6, min_length=2, max_length=3, min_duration=2, max_duration=3, d_feat=4)
    batch = pad_batch([SyntheticDataset(data, 2)[i] for i in range(2)])
    model = Seq2SeqModel(config)

    def loss() -> Tensor:
        out = model(batch.features, batch.feature_lengths, batch.targets, batch.target_mask)
        return label_smoothed_ce(out.logits, out.targets, 0.1, out.mask)

    return loss, model.parameters()


def run_suite(h: float = 1e-5, seed: int = 0, model_coords: int = 6) -> list[GradCheckResult]:
    """
    Check every differentiable op (tolerance 1e-4) and a 2-layer, 2-head miniature
    model in DACS and HS-DACS modes, truncation path included (tolerance 1e-3).
    """
    rng = np.random.default_rng(seed)
    results = []
    for name, loss_fn, params in _op_cases(rng):
        results.append(check_gradients(name, loss_fn, params, h=h, tolerance=1e-4))
    for mode in ("dacs", "hsdacs"):
        loss_fn, params = _model_case(mode, rng)
        results.append(
            check_gradients(f"model[{mode}]", loss_fn, params, h=h, tolerance=1e-3, max_coords=model_coords, rng=rng)
        )
    for r in results:
        hsdacs.logger.debug(f"gradcheck {r.name}: max rel {r.max_rel_error:.2e} over {r.coordinates} coordinates")
    return results
