import numpy as np
from numpy.typing import NDArray

from hsdacs.tensor import Tensor
from hsdacs.types import ShapeError


def clip_grad_norm(params: list[Tensor], max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most `max_norm`; returns the norm before clipping."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = float(np.sqrt(total))
    if norm > max_norm > 0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


class Adam:
    """
    Adaptive-moment optimiser with bias correction.

    The learning rate is passed to every `step`, so the caller owns the schedule.
    Parameters without a gradient are updated as if their gradient were zero.
    """

    def __init__(
        self,
        named_params: list[tuple[str, Tensor]],
        betas: tuple[float, float] = (0.9, 0.98),
        eps: float = 1e-9,
    ):
        self.params = named_params
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m: dict[str, NDArray[np.float64]] = {name: np.zeros_like(p.data) for name, p in named_params}
        self.v: dict[str, NDArray[np.float64]] = {name: np.zeros_like(p.data) for name, p in named_params}

    def step(self, lr: float) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for name, p in self.params:
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.zero_grad()

    def moments(self) -> dict[str, NDArray[np.float64]]:
        """First and second moments keyed `m.<param>` and `v.<param>`."""
        state = {f"m.{name}": m for name, m in self.m.items()}
        state.update({f"v.{name}": v for name, v in self.v.items()})
        return state

    def load_moments(self, state: dict[str, NDArray[np.float64]], step: int) -> None:
        for name, _ in self.params:
            for prefix, store in (("m", self.m), ("v", self.v)):
                key = f"{prefix}.{name}"
                if key not in state:
                    raise ShapeError(f"missing optimiser moment {key}")
                value = np.asarray(state[key], dtype=np.float64)
                if value.size != store[name].size:
                    raise ShapeError(f"{key}: expected shape {store[name].shape}, got {value.shape}")
                store[name] = value.reshape(store[name].shape)
        self.t = step
