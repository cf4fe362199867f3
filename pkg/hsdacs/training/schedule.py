from hsdacs.types import ContractError


def noam_lr(step: int, warmup: int, d_model: int, base: float = 1.0) -> float:
    """Linear warm-up for `warmup` steps, then inverse square-root decay."""
    if step < 1:
        raise ContractError(f"learning-rate step must be >= 1, got {step}")
    return base * d_model**-0.5 * min(step**-0.5, step * warmup**-1.5)
