from hsdacs.tensor import functional
from hsdacs.tensor.tensor import ComputationRecord, Function, Tensor, as_tensor, is_grad_enabled, no_grad

__all__ = [
    "ComputationRecord",
    "Function",
    "Tensor",
    "as_tensor",
    "functional",
    "is_grad_enabled",
    "no_grad",
]
