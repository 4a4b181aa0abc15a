from typing import Callable, Optional
import torch
from torch import nn


@torch.no_grad()
def _central_difference(
    loss_fn: Callable[[], torch.Tensor], param: torch.Tensor, index: int, step: float
) -> float:
    flat = param.view(-1)
    original = flat[index].item()
    flat[index] = original + step
    upper = loss_fn().item()
    flat[index] = original - step
    lower = loss_fn().item()
    flat[index] = original
    return (upper - lower) / (2.0 * step)


def parameter_gradient_error(
    module: nn.Module,
    loss_fn: Callable[[], torch.Tensor],
    step: float = 1e-6,
    max_entries_per_param: Optional[int] = 16,
    generator: Optional[torch.Generator] = None,
) -> float:
    """Relative error between autograd and central finite differences.

    `loss_fn` must re-run the forward pass of `module` and return a scalar.
    At most `max_entries_per_param` entries of every parameter are perturbed.
    Meant to run at float64.
    """
    module.zero_grad(set_to_none=True)
    loss_fn().backward()

    analytic: list[float] = []
    numeric: list[float] = []
    for param in module.parameters():
        if not param.requires_grad:
            continue
        grad = param.grad if param.grad is not None else torch.zeros_like(param)
        count = param.numel()
        if max_entries_per_param is None or count <= max_entries_per_param:
            indices = range(count)
        else:
            indices = torch.randperm(count, generator=generator)[:max_entries_per_param].tolist()
        for index in indices:
            analytic.append(grad.view(-1)[index].item())
            numeric.append(_central_difference(loss_fn, param.data, index, step))

    a = torch.tensor(analytic, dtype=torch.float64)
    n = torch.tensor(numeric, dtype=torch.float64)
    scale = torch.clamp_min(a.norm() + n.norm(), 1e-12)
    return ((a - n).norm() / scale).item()


def input_gradient_error(
    fn: Callable[[torch.Tensor], torch.Tensor], x: torch.Tensor, step: float = 1e-6
) -> float:
    """Same comparison as `parameter_gradient_error`, w.r.t. every entry of `x`."""
    x = x.detach().clone().requires_grad_(True)
    fn(x).backward()
    assert x.grad is not None
    analytic = x.grad.detach().view(-1).clone()
    numeric = torch.empty_like(analytic)
    data = x.detach()
    for index in range(data.numel()):
        numeric[index] = _central_difference(lambda: fn(data), data, index, step)
    scale = torch.clamp_min(analytic.norm() + numeric.norm(), 1e-12)
    return ((analytic - numeric).norm() / scale).item()
