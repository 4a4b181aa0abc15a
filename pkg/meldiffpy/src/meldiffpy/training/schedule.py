from torch.optim import Optimizer
from torch.optim.lr_scheduler import LambdaLR
from ..utils import InvalidConfigError


def warmup_factor(step: int, warmup_iters: int, start_factor: float) -> float:
    if step < 0:
        raise InvalidConfigError(f"step must be >= 0, got {step}")
    if warmup_iters <= 0:
        return 1.0
    return start_factor + (1.0 - start_factor) * min(step, warmup_iters) / warmup_iters


def lr_schedule(step: int, base_lr: float, warmup_iters: int, start_factor: float) -> float:
    """Linear ramp from `start_factor * base_lr` to `base_lr`, then constant."""
    return base_lr * warmup_factor(step, warmup_iters, start_factor)


def warmup_scheduler(optimizer: Optimizer, warmup_iters: int, start_factor: float) -> LambdaLR:
    return LambdaLR(optimizer, lambda step: warmup_factor(step, warmup_iters, start_factor))
