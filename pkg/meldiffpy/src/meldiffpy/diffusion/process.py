from typing import Callable, Optional
import torch
import torch.nn.functional as F
from ..common import Parameterization
from ..utils import InvalidConfigError, ShapeError, ContractError, unreachable
from .schedule import NoiseSchedule, Timestep

type NoisePredictor = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


def _same_shape(a: torch.Tensor, b: torch.Tensor, what: str):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {tuple(a.shape)} and {tuple(b.shape)} differ")
    return None


def forward_sample(
    x0: torch.Tensor, t: Timestep, eps: torch.Tensor, sched: NoiseSchedule
) -> torch.Tensor:
    """x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps."""
    _same_shape(x0, eps, "forward_sample")
    alpha_bar = sched.at(sched.alpha_bar, t, x0)
    return torch.sqrt(alpha_bar) * x0 + torch.sqrt(1.0 - alpha_bar) * eps


def predict_x0(
    x_t: torch.Tensor, eps: torch.Tensor, t: Timestep, sched: NoiseSchedule
) -> torch.Tensor:
    alpha_bar = sched.at(sched.alpha_bar, t, x_t)
    return (x_t - torch.sqrt(1.0 - alpha_bar) * eps) / torch.sqrt(alpha_bar)


def posterior_mean_variance(
    x_t: torch.Tensor,
    x0_or_eps: torch.Tensor,
    t: Timestep,
    sched: NoiseSchedule,
    parameterization: Parameterization | str = Parameterization.EPS,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Mean and variance of q(x_{t-1} | x_t, x0).

    With `x0` the mean is the Bayes-rule combination of x0 and x_t; with
    `eps` it is (x_t - beta_t / sqrt(1 - alpha_bar_t) * eps) / sqrt(alpha_t).
    The variance is the posterior variance in both cases.
    """
    try:
        parameterization = Parameterization(parameterization)
    except ValueError:
        raise InvalidConfigError(f"unknown parameterization '{parameterization}'") from None
    _same_shape(x_t, x0_or_eps, "posterior_mean_variance")
    beta = sched.at(sched.beta, t, x_t)
    alpha = sched.at(sched.alpha, t, x_t)
    alpha_bar = sched.at(sched.alpha_bar, t, x_t)
    alpha_bar_prev = sched.at(sched.alpha_bar_prev, t, x_t)
    variance = sched.at(sched.posterior_variance, t, x_t)
    match parameterization:
        case Parameterization.X0:
            mean = (
                torch.sqrt(alpha_bar_prev) * beta / (1.0 - alpha_bar) * x0_or_eps
                + torch.sqrt(alpha) * (1.0 - alpha_bar_prev) / (1.0 - alpha_bar) * x_t
            )
        case Parameterization.EPS:
            mean = (x_t - beta / torch.sqrt(1.0 - alpha_bar) * x0_or_eps) / torch.sqrt(alpha)
        case _:
            unreachable()
    return mean, variance


def call_model(model: NoisePredictor, x: torch.Tensor, t: Timestep) -> torch.Tensor:
    """Evaluate `model(x, t)` and enforce the same-shape contract."""
    t_in = torch.as_tensor(t, dtype=torch.long, device=x.device)
    out = model(x, t_in)
    if not isinstance(out, torch.Tensor) or out.shape != x.shape:
        got = tuple(out.shape) if isinstance(out, torch.Tensor) else type(out).__name__
        raise ContractError(f"noise predictor returned {got}, expected {tuple(x.shape)}")
    return out


def training_loss(
    model: NoisePredictor,
    x0: torch.Tensor,
    t: Timestep,
    eps: torch.Tensor,
    sched: NoiseSchedule,
) -> torch.Tensor:
    """Mean-squared error between `eps` and the model's noise prediction."""
    x_t = forward_sample(x0, t, eps, sched)
    pred = call_model(model, x_t, t)
    return F.mse_loss(pred, eps)


def sample_timesteps(
    batch: int,
    sched: NoiseSchedule,
    generator: Optional[torch.Generator] = None,
    device: Optional[torch.device] = None,
) -> torch.Tensor:
    """Uniform timesteps in [1, T], one per batch element."""
    t = torch.randint(1, sched.T + 1, (batch,), generator=generator)
    return t.to(device) if device is not None else t
