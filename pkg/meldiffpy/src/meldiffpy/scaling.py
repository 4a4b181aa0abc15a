from typing import Self
import torch
from torch import nn
from .common import ScalerMode
from .utils import StateError, InvalidConfigError

LOG_MEL_EPS: float = 1e-5
MINMAX_EPS: float = 1e-8


def _reduce_dims(x: torch.Tensor, feature_dim: int) -> list[int]:
    feature = feature_dim % x.ndim
    return [d for d in range(x.ndim) if d != feature]


def _as_feature(stat: torch.Tensor, x: torch.Tensor, feature_dim: int) -> torch.Tensor:
    """Broadcast a per-feature vector against `x` along `feature_dim`."""
    shape = [1] * x.ndim
    shape[feature_dim % x.ndim] = -1
    return stat.view(shape)


class _MomentumScaler(nn.Module):
    momentum: torch.Tensor
    initialized: torch.Tensor

    def __init__(
        self: Self, num_features: int, momentum: float, decay: float, feature_dim: int
    ):
        super().__init__()
        if not 0.0 <= momentum <= 1.0:
            raise InvalidConfigError(f"momentum must be in [0, 1], got {momentum}")
        if not 0.0 < decay <= 1.0:
            raise InvalidConfigError(f"momentum decay must be in (0, 1], got {decay}")
        self.num_features = num_features
        self.decay = decay
        self.feature_dim = feature_dim
        # float64 so that m0 * d^k stays exact over long runs
        self.register_buffer("momentum", torch.tensor(momentum, dtype=torch.float64))
        self.register_buffer("initialized", torch.tensor(False))
        return None

    @property
    def mode(self: Self) -> ScalerMode:
        return ScalerMode.TRAINING if self.training else ScalerMode.INFERENCE

    @property
    def is_initialized(self: Self) -> bool:
        return bool(self.initialized.item())

    def _require_initialized(self: Self, what: str):
        if not self.is_initialized:
            raise StateError(f"{type(self).__name__} has no running statistics, cannot {what}")
        return None

    def _step_momentum(self: Self) -> float:
        self.momentum.mul_(self.decay)
        return self.momentum.item()


class StandardScaler(_MomentumScaler):
    running_mean: torch.Tensor
    running_var: torch.Tensor

    def __init__(
        self: Self,
        num_features: int,
        momentum: float = 0.001,
        decay: float = 0.99,
        eps: float = 1e-5,
        feature_dim: int = -2,
    ):
        super().__init__(num_features, momentum, decay, feature_dim)
        self.eps = eps
        self.register_buffer("running_mean", torch.zeros(num_features))
        self.register_buffer("running_var", torch.ones(num_features))
        return None

    def _batch_stats(self: Self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        dims = _reduce_dims(x, self.feature_dim)
        var, mean = torch.var_mean(x, dim=dims, correction=0)
        return mean, var

    def forward(self: Self, x: torch.Tensor) -> torch.Tensor:
        if self.training:
            with torch.no_grad():
                mean, var = self._batch_stats(x.detach())
                mean = mean.to(self.running_mean.dtype)
                var = var.to(self.running_var.dtype)
                if not self.is_initialized:
                    self.running_mean.copy_(mean)
                    self.running_var.copy_(var)
                    self.initialized.fill_(True)
                m = self._step_momentum()
                self.running_mean.mul_(1.0 - m).add_(mean, alpha=m)
                self.running_var.mul_(1.0 - m).add_(var, alpha=m)
            mean, var = self._batch_stats(x)
        else:
            self._require_initialized("scale in inference mode")
            mean, var = self.running_mean.to(x.dtype), self.running_var.to(x.dtype)
        mean = _as_feature(mean, x, self.feature_dim)
        var = _as_feature(var, x, self.feature_dim)
        return (x - mean) / torch.sqrt(var + self.eps)

    def inverse(self: Self, y: torch.Tensor) -> torch.Tensor:
        self._require_initialized("invert")
        mean = _as_feature(self.running_mean.to(y.dtype), y, self.feature_dim)
        var = _as_feature(self.running_var.to(y.dtype), y, self.feature_dim)
        return y * torch.sqrt(var + self.eps) + mean


class MinMaxScaler(_MomentumScaler):
    running_min: torch.Tensor
    running_max: torch.Tensor

    def __init__(
        self: Self,
        num_features: int,
        momentum: float = 0.001,
        decay: float = 0.99,
        y_min: float = -1.0,
        y_max: float = 1.0,
        feature_dim: int = -2,
    ):
        super().__init__(num_features, momentum, decay, feature_dim)
        if not y_min < y_max:
            raise InvalidConfigError(f"target range needs y_min < y_max, got [{y_min}, {y_max}]")
        self.y_min = y_min
        self.y_max = y_max
        self.register_buffer("running_min", torch.zeros(num_features))
        self.register_buffer("running_max", torch.ones(num_features))
        return None

    def _batch_extrema(self: Self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        dims = _reduce_dims(x, self.feature_dim)
        return torch.amin(x, dim=dims), torch.amax(x, dim=dims)

    def forward(self: Self, x: torch.Tensor) -> torch.Tensor:
        if self.training:
            with torch.no_grad():
                low, high = self._batch_extrema(x.detach())
                low = low.to(self.running_min.dtype)
                high = high.to(self.running_max.dtype)
                if not self.is_initialized:
                    self.running_min.copy_(low)
                    self.running_max.copy_(high)
                    self.initialized.fill_(True)
                m = self._step_momentum()
                self.running_min.mul_(1.0 - m).add_(low, alpha=m)
                self.running_max.mul_(1.0 - m).add_(high, alpha=m)
            low, high = self._batch_extrema(x)
        else:
            self._require_initialized("scale in inference mode")
            low, high = self.running_min.to(x.dtype), self.running_max.to(x.dtype)
        low = _as_feature(low, x, self.feature_dim)
        high = _as_feature(high, x, self.feature_dim)
        unit = (x - low) / torch.clamp_min(high - low, MINMAX_EPS)
        y = unit * (self.y_max - self.y_min) + self.y_min
        return torch.clamp(y, self.y_min, self.y_max)

    def inverse(self: Self, y: torch.Tensor) -> torch.Tensor:
        self._require_initialized("invert")
        low = _as_feature(self.running_min.to(y.dtype), y, self.feature_dim)
        high = _as_feature(self.running_max.to(y.dtype), y, self.feature_dim)
        unit = (y - self.y_min) / (self.y_max - self.y_min)
        return unit * torch.clamp_min(high - low, MINMAX_EPS) + low


class FeatureScaler(nn.Module):
    """log(mel + 1e-5), then standard scaling, then min-max scaling to [-1, 1]."""

    def __init__(
        self: Self,
        n_mels: int,
        momentum: float = 0.001,
        decay: float = 0.99,
        eps: float = 1e-5,
    ):
        super().__init__()
        self.standard = StandardScaler(n_mels, momentum, decay, eps)
        self.minmax = MinMaxScaler(n_mels, momentum, decay)
        return None

    @property
    def is_initialized(self: Self) -> bool:
        return self.standard.is_initialized and self.minmax.is_initialized

    def forward(self: Self, mel: torch.Tensor) -> torch.Tensor:
        return self.minmax(self.standard(torch.log(mel + LOG_MEL_EPS)))

    def inverse(self: Self, normalized: torch.Tensor) -> torch.Tensor:
        log_mel = self.standard.inverse(self.minmax.inverse(normalized))
        return torch.clamp_min(torch.exp(log_mel) - LOG_MEL_EPS, 0.0)
