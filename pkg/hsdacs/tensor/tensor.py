import threading
from contextlib import contextmanager
from typing import Any, Iterator, Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from hsdacs.types import ContractError, ShapeError

_grad_mode = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable recording of operations on the current thread (inference)."""
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement `forward` over raw arrays and `backward`, which maps the
    gradient of the output to one gradient per input (None for inputs that take
    no gradient, such as integer ids or masks).
    """

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs

    def forward(self, *arrays: NDArray[np.float64], **kwargs: Any) -> NDArray[np.float64]:
        raise NotImplementedError("Forward pass not implemented for this function")

    def backward(self, grad: NDArray[np.float64]) -> Sequence[NDArray[np.float64] | None]:
        raise NotImplementedError("Backward pass not implemented for this function")

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
        return Tensor(out, requires_grad=requires_grad, creator=fn if requires_grad else None)

    @property
    def name(self) -> str:
        return type(self).__name__


class Tensor:
    """
    Dense float64 array with optional gradient.

    Tensors created by a `Function` while gradient recording is enabled keep a
    reference to their creator; `backward` walks those references in reverse.
    """

    __array_priority__ = 100

    def __init__(
        self,
        data: Union[ArrayLike, "Tensor"],
        requires_grad: bool = False,
        creator: Function | None = None,
    ):
        if isinstance(data, Tensor):
            data = data.data
        self.data: NDArray[np.float64] = np.asarray(data, dtype=np.float64, order="C")
        self.requires_grad = requires_grad
        self.creator = creator
        self.grad: NDArray[np.float64] | None = None

    # ------------------------------------------------------------------ #
    # Introspection
    # ------------------------------------------------------------------ #
    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __len__(self) -> int:
        return self.shape[0]

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # ------------------------------------------------------------------ #
    # Operators
    # ------------------------------------------------------------------ #
    def __add__(self, other: Union["Tensor", float]) -> "Tensor":
        from hsdacs.tensor import functional as F

        return F.add(self, other)

    def __radd__(self, other: float) -> "Tensor":
        return self.__add__(other)

    def __sub__(self, other: Union["Tensor", float]) -> "Tensor":
        from hsdacs.tensor import functional as F

        return F.sub(self, other)

    def __rsub__(self, other: float) -> "Tensor":
        from hsdacs.tensor import functional as F

        return F.sub(as_tensor(other), self)

    def __mul__(self, other: Union["Tensor", float]) -> "Tensor":
        from hsdacs.tensor import functional as F

        return F.mul(self, other)

    def __rmul__(self, other: float) -> "Tensor":
        return self.__mul__(other)

    def __neg__(self) -> "Tensor":
        from hsdacs.tensor import functional as F

        return F.mul(self, -1.0)

    def __truediv__(self, other: float) -> "Tensor":
        from hsdacs.tensor import functional as F

        if isinstance(other, Tensor):
            return F.div(self, other)
        return F.mul(self, 1.0 / float(other))

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from hsdacs.tensor import functional as F

        return F.matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        from hsdacs.tensor import functional as F

        return F.getitem(self, index)

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        from hsdacs.tensor import functional as F

        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        from hsdacs.tensor import functional as F

        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        from hsdacs.tensor import functional as F

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        from hsdacs.tensor import functional as F

        return F.transpose(self, axes if axes else None)

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    # ------------------------------------------------------------------ #
    # Reverse mode
    # ------------------------------------------------------------------ #
    def backward(self) -> "ComputationRecord":
        """
        Populate `grad` on every reachable tensor that requires a gradient.

        Leaf gradients accumulate across calls; call `zero_grad` between steps.

        Returns:
            ComputationRecord: The record that was traversed.

        Raises:
            ContractError: If this tensor is not a scalar.
        """
        if self.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("backward() on a tensor that is not connected to any parameter")

        record = ComputationRecord.trace(self)
        pending: dict[int, NDArray[np.float64]] = {id(self): np.ones_like(self.data)}
        for node in record.reverse():
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            if node.creator is None:
                node.grad = grad if node.grad is None else node.grad + grad
                continue
            node.grad = grad
            input_grads = node.creator.backward(grad)
            for inp, inp_grad in zip(node.creator.inputs, input_grads):
                if inp_grad is None or not inp.requires_grad:
                    continue
                if inp_grad.shape != inp.data.shape:
                    raise ShapeError(
                        f"{node.creator.name}.backward produced {inp_grad.shape} for input of shape {inp.shape}"
                    )
                key = id(inp)
                pending[key] = inp_grad if key not in pending else pending[key] + inp_grad
        return record


class ComputationRecord:
    """
    Ordered list of the tensors produced by recorded operations.

    Nodes appear producers-first; `reverse` therefore visits every operation after
    all of its consumers, exactly once.
    """

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def trace(cls, output: Tensor) -> "ComputationRecord":
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node.creator is not None:
                for inp in reversed(node.creator.inputs):
                    if inp.requires_grad and id(inp) not in visited:
                        stack.append((inp, False))
        return cls(order)

    @property
    def operations(self) -> list[str]:
        return [node.creator.name for node in self.nodes if node.creator is not None]

    def reverse(self) -> Iterator[Tensor]:
        return reversed(self.nodes)

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.nodes)


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)
