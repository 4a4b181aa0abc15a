import math
from dataclasses import dataclass, field
from typing import Self
import torch
from ..common import ScheduleKind
from ..utils import InvalidConfigError, TimestepError, unreachable

type Timestep = int | torch.Tensor

COSINE_OFFSET: float = 0.008
MAX_BETA: float = 0.999


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance schedule over timesteps 1..T, stored 0-based in float64.

    Index `t - 1` of every array holds the value at timestep `t`, and
    `alpha_bar_prev[0]` is the alpha_bar_0 = 1 convention.
    """

    beta: torch.Tensor
    alpha: torch.Tensor = field(init=False)
    alpha_bar: torch.Tensor = field(init=False)
    alpha_bar_prev: torch.Tensor = field(init=False)
    posterior_variance: torch.Tensor = field(init=False)

    def __post_init__(self: Self):
        beta = self.beta.detach().to(torch.float64).cpu()
        if beta.ndim != 1 or beta.numel() == 0:
            raise InvalidConfigError(f"betas must be a non-empty vector, got shape {tuple(beta.shape)}")
        if not bool(((beta > 0) & (beta < 1)).all()):
            raise InvalidConfigError("every beta must lie in (0, 1)")
        alpha = 1.0 - beta
        alpha_bar = torch.cumprod(alpha, dim=0)
        alpha_bar_prev = torch.cat([torch.ones(1, dtype=torch.float64), alpha_bar[:-1]])
        posterior_variance = (1.0 - alpha_bar_prev) / (1.0 - alpha_bar) * beta
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "alpha_bar", alpha_bar)
        object.__setattr__(self, "alpha_bar_prev", alpha_bar_prev)
        object.__setattr__(self, "posterior_variance", posterior_variance)
        return None

    @classmethod
    def from_betas(cls: type[Self], betas: torch.Tensor | list[float]) -> Self:
        return cls(torch.as_tensor(betas, dtype=torch.float64))

    @property
    def T(self: Self) -> int:
        return self.beta.numel()

    def check(self: Self, t: Timestep, allow_zero: bool = False):
        low = 0 if allow_zero else 1
        values = torch.as_tensor(t)
        if values.is_floating_point() or values.is_complex():
            raise TimestepError(f"timesteps must be integers, got {values.dtype}")
        if values.numel() == 0:
            return None
        lo, hi = int(values.min()), int(values.max())
        if lo < low or hi > self.T:
            raise TimestepError(f"timestep out of range [{low}, {self.T}]: got [{lo}, {hi}]")
        return None

    def alpha_bar_at(self: Self, t: Timestep) -> torch.Tensor:
        """alpha_bar at timestep(s) `t`, with alpha_bar_0 = 1."""
        self.check(t, allow_zero=True)
        extended = torch.cat([torch.ones(1, dtype=torch.float64), self.alpha_bar])
        return extended[torch.as_tensor(t, dtype=torch.long)]

    def at(self: Self, values: torch.Tensor, t: Timestep, like: torch.Tensor) -> torch.Tensor:
        """Gather `values[t - 1]` and broadcast it against `like`.

        A scalar `t` gives a 0-d tensor; a vector `t` of length B is
        reshaped to [B, 1, ...] to match a batched `like`.
        """
        self.check(t)
        index = torch.as_tensor(t, dtype=torch.long) - 1
        out = values[index.cpu()].to(dtype=like.dtype, device=like.device)
        if out.ndim == 1:
            out = out.view(-1, *([1] * (like.ndim - 1)))
        return out

    def to_dict(self: Self) -> dict[str, list[float]]:
        return {"beta": self.beta.tolist()}


def cosine_schedule(T: int, s: float = COSINE_OFFSET, max_beta: float = MAX_BETA) -> NoiseSchedule:
    if T < 1:
        raise InvalidConfigError(f"a schedule needs at least one timestep, got T={T}")
    steps = torch.arange(T + 1, dtype=torch.float64) / T
    f = torch.cos((steps + s) / (1.0 + s) * math.pi / 2.0) ** 2
    alpha_bar = f / f[0]
    beta = 1.0 - alpha_bar[1:] / alpha_bar[:-1]
    return NoiseSchedule(torch.clamp(beta, max=max_beta))


def linear_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if T < 1:
        raise InvalidConfigError(f"a schedule needs at least one timestep, got T={T}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise InvalidConfigError(
            f"linear schedule needs 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )
    return NoiseSchedule(torch.linspace(beta_start, beta_end, T, dtype=torch.float64))


def make_schedule(kind: ScheduleKind | str, T: int) -> NoiseSchedule:
    try:
        kind = ScheduleKind(kind)
    except ValueError:
        raise InvalidConfigError(f"unknown noise schedule '{kind}'") from None
    match kind:
        case ScheduleKind.COSINE:
            return cosine_schedule(T)
        case ScheduleKind.LINEAR:
            return linear_schedule(T)
    return unreachable()
