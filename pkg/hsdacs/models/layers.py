import math
from typing import Iterator

import numpy as np
from numpy.typing import NDArray

from hsdacs.cache import Cache, projection_cache
from hsdacs.tensor import Tensor
from hsdacs.tensor import functional as F
from hsdacs.types import ContractError, ShapeError


def parameter(data: NDArray[np.float64]) -> Tensor:
    return Tensor(data, requires_grad=True)


def last_two(ndim: int) -> tuple[int, ...]:
    return tuple(range(ndim - 2)) + (ndim - 1, ndim - 2)


class Module:
    """
    Container of parameters and submodules.

    Parameters are discovered from instance attributes in definition order:
    tensors that require a gradient, nested modules and lists of modules. The
    resulting dotted names are the keys used by checkpoints and the optimizer.
    """

    training: bool = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{full}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def state_dict(self) -> dict[str, NDArray[np.float64]]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, NDArray[np.float64]]) -> None:
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise ShapeError(f"state dict mismatch: missing={missing} unexpected={unexpected}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ShapeError(f"{name}: expected shape {p.shape}, got {value.shape}")
            p.data = np.asarray(value, order="C")


################################################################################
# Building blocks
################################################################################
class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        limit = math.sqrt(6.0 / (d_in + d_out))
        self.weight = parameter(limit * (2.0 * rng.random((d_in, d_out)) - 1.0))
        self.bias = parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = F.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class Embedding(Module):
    def __init__(self, vocab_size: int, d_model: int, rng: np.random.Generator):
        self.weight = parameter(rng.standard_normal((vocab_size, d_model)) * d_model**-0.5)

    def __call__(self, ids: NDArray[np.int64]) -> Tensor:
        vocab_size = self.weight.shape[0]
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
            raise ContractError(f"token id outside [0, {vocab_size})")
        return F.embedding(self.weight, ids)


class LayerNorm(Module):
    def __init__(self, d_model: int, eps: float = 1e-6):
        self.gain = parameter(np.ones(d_model))
        self.bias = parameter(np.zeros(d_model))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gain, self.bias, eps=self.eps)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; the identity when `rng` is None or `rate` is zero."""
    if rng is None or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * Tensor(keep)


class FeedForward(Module):
    def __init__(self, d_model: int, d_ffn: int, rng: np.random.Generator, dropout_rate: float = 0.0):
        self.inner = Linear(d_model, d_ffn, rng)
        self.outer = Linear(d_ffn, d_model, rng)
        self.dropout_rate = dropout_rate

    def __call__(self, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        hidden = dropout(F.relu(self.inner(x)), self.dropout_rate, rng)
        return self.outer(hidden)


def sinusoidal_positions(length: int, d_model: int) -> NDArray[np.float64]:
    positions = np.arange(length, dtype=np.float64)[:, None]
    rates = np.exp(-math.log(10000.0) * (np.arange(0, d_model, 2, dtype=np.float64) / d_model))
    table = np.zeros((length, d_model))
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates[: d_model // 2])
    return table


################################################################################
# Masks
################################################################################
def build_chunk_mask(num_frames: int, central: int, left: int, right: int) -> NDArray[np.bool_]:
    """
    Chunk-wise self-attention mask for the encoder.

    Frame t belongs to chunk n = t // central and may attend to
    [max(0, n * central - left), min(T - 1, (n + 1) * central - 1 + right)].

    Returns:
        NDArray[np.bool_]: `[T, T]`, True where attention is allowed.
    """
    if central < 1 or left < 0 or right < 0:
        raise ContractError(f"invalid chunk sizes central={central} left={left} right={right}")
    t = np.arange(num_frames)
    chunk = t // central
    lo = chunk * central - left
    hi = (chunk + 1) * central - 1 + right
    return (t[None, :] >= lo[:, None]) & (t[None, :] <= hi[:, None])


def causal_mask(length: int) -> NDArray[np.bool_]:
    return np.tril(np.ones((length, length), dtype=bool))


def length_mask(lengths: NDArray[np.int64], max_length: int) -> NDArray[np.bool_]:
    return np.arange(max_length)[None, :] < np.asarray(lengths)[:, None]


################################################################################
# Attention
################################################################################
def scaled_dot_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    mask: NDArray[np.bool_] | None = None,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """
    Softmax attention over the last two axes.

    Args:
        q (Tensor): `[..., L, d_k]` queries.
        k (Tensor): `[..., T, d_k]` keys.
        v (Tensor): `[..., T, d_v]` values.
        mask (NDArray[np.bool_] | None): Broadcastable to `[..., L, T]`; True keeps a key.

    Returns:
        tuple[Tensor, Tensor]: Contexts `[..., L, d_v]` and the attention weights.

    Raises:
        ContractError: If some query row has no allowed key.
    """
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"query width {q.shape[-1]} differs from key width {k.shape[-1]}")
    scores = F.matmul(q, F.transpose(k, last_two(k.ndim))) * (1.0 / math.sqrt(q.shape[-1]))
    if mask is not None:
        full = np.broadcast_to(mask, scores.shape)
        if not full.any(axis=-1).all():
            raise ContractError("attention row with no valid key")
        scores = F.masked_fill(scores, full, -np.inf)
    weights = F.softmax_rows(scores)
    return F.matmul(dropout(weights, dropout_rate, rng), v), weights


class MultiHeadAttention(Module):
    """
    Multi-head softmax attention with bias-free projections.

    The decoder uses it for self-attention and, in offline mode, for full
    cross-attention over the encoder states.
    """

    def __init__(self, d_model: int, num_heads: int, rng: np.random.Generator, dropout_rate: float = 0.0):
        if d_model % num_heads != 0:
            raise ContractError(f"d_model={d_model} is not divisible by num_heads={num_heads}")
        self.num_heads = num_heads
        self.d_k = d_model // num_heads
        self.w_q = Linear(d_model, d_model, rng, bias=False)
        self.w_k = Linear(d_model, d_model, rng, bias=False)
        self.w_v = Linear(d_model, d_model, rng, bias=False)
        self.w_o = Linear(d_model, d_model, rng, bias=False)
        self.dropout_rate = dropout_rate
        self.cache: Cache | None = None

    def split_heads(self, x: Tensor) -> Tensor:
        """`[..., T, d_model] -> [..., H, T, d_k]`"""
        lead = x.shape[:-2]
        n = len(lead)
        x = F.reshape(x, lead + (x.shape[-2], self.num_heads, self.d_k))
        return F.transpose(x, tuple(range(n)) + (n + 1, n, n + 2))

    def merge_heads(self, x: Tensor) -> Tensor:
        """`[..., H, T, d_k] -> [..., T, d_model]`"""
        lead = x.shape[:-3]
        n = len(lead)
        x = F.transpose(x, tuple(range(n)) + (n + 1, n, n + 2))
        return F.reshape(x, lead + (x.shape[-3], self.num_heads * self.d_k))

    def __call__(
        self,
        query: Tensor,
        memory: Tensor,
        mask: NDArray[np.bool_] | None = None,
        rng: np.random.Generator | None = None,
    ) -> tuple[Tensor, Tensor]:
        q = self.split_heads(self.w_q(query))
        k = self.split_heads(self.w_k(memory))
        v = self.split_heads(self.w_v(memory))
        if mask is not None:
            mask = np.expand_dims(mask, -3)
        ctx, weights = scaled_dot_attention(q, k, v, mask, self.dropout_rate, rng)
        return self.w_o(self.merge_heads(ctx)), weights

    @projection_cache
    def project_memory(self, enc: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Head-split keys and values `[H, T, d_k]` of one utterance's encoder states `[T, d_model]`."""
        memory = Tensor(enc)
        return self.split_heads(self.w_k(memory)).data, self.split_heads(self.w_v(memory)).data

    def attend_row(self, query_row: NDArray[np.float64], keys: NDArray[np.float64], values: NDArray[np.float64]):
        """
        Full softmax attention of one decoder row over projected memory.

        Returns the output `[d_model]` and the weights `[H, T]`.
        """
        q = self.split_heads(self.w_q(Tensor(query_row[None, :])))
        ctx, weights = scaled_dot_attention(q, Tensor(keys), Tensor(values))
        out = self.w_o(self.merge_heads(ctx))
        return out.data[0], weights.data[:, 0, :]
