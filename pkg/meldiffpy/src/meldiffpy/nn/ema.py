import copy
from typing import Mapping, Self
import torch
from torch import nn
from ..utils import ContractError, InvalidConfigError


@torch.no_grad()
def ema_update(
    ema_params: Mapping[str, torch.Tensor],
    params: Mapping[str, torch.Tensor],
    decay: float,
    step: int,
    start_step: int,
    every_n: int,
) -> Mapping[str, torch.Tensor]:
    """Update `ema_params` in place and return it.

    Before `start_step` the average is a plain copy of `params`; from then
    on, every `every_n`-th step blends ema <- decay * ema + (1 - decay) * params.
    """
    if not 0.0 <= decay <= 1.0:
        raise InvalidConfigError(f"EMA decay must be in [0, 1], got {decay}")
    if every_n < 1:
        raise InvalidConfigError(f"EMA update interval must be >= 1, got {every_n}")
    if set(ema_params) != set(params):
        missing = sorted(set(params) ^ set(ema_params))
        raise ContractError(f"EMA and model parameter names differ: {missing[:5]}")
    if step < start_step:
        for name, value in params.items():
            ema_params[name].copy_(value)
    elif step % every_n == 0:
        for name, value in params.items():
            target = ema_params[name]
            if target.is_floating_point():
                target.lerp_(value.to(target.dtype), 1.0 - decay)
            else:
                target.copy_(value)
    return ema_params


class EMA(nn.Module):
    """Averaged copy of a module, kept in eval mode and out of autograd."""

    def __init__(
        self: Self,
        model: nn.Module,
        decay: float = 0.995,
        start_step: int = 2000,
        every_n: int = 10,
    ):
        super().__init__()
        self.decay = decay
        self.start_step = start_step
        self.every_n = every_n
        self.module = copy.deepcopy(model).eval().requires_grad_(False)
        return None

    def update(self: Self, model: nn.Module, step: int):
        ema_update(
            self.module.state_dict(keep_vars=False),
            model.state_dict(keep_vars=False),
            self.decay,
            step,
            self.start_step,
            self.every_n,
        )
        return None

    def train(self: Self, mode: bool = True) -> Self:
        # the averaged module never leaves eval mode
        super().train(mode)
        self.module.eval()
        return self

    def forward(self: Self, *args, **kwargs):
        return self.module(*args, **kwargs)
