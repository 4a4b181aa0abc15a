import torch
import torch.nn.functional as F
from ..utils import InvalidInputError, ShapeError
from .types import Spectrogram

SC_EPS: float = 1e-8
LOG_MAG_EPS: float = 1e-5


def _values(spec: Spectrogram | torch.Tensor) -> torch.Tensor:
    return spec.values if isinstance(spec, Spectrogram) else spec


def _check_pair(target: torch.Tensor, pred: torch.Tensor, what: str):
    if target.shape != pred.shape:
        raise ShapeError(
            f"{what}: target {tuple(target.shape)} and prediction {tuple(pred.shape)} differ"
        )
    if bool((target < 0).any()) or bool((pred < 0).any()):
        raise InvalidInputError(f"{what}: magnitudes must be non-negative")
    return None


def spectral_convergence_loss(
    target: Spectrogram | torch.Tensor,
    pred: Spectrogram | torch.Tensor,
    eps: float = SC_EPS,
) -> torch.Tensor:
    """||target - pred||_F / ||target||_F, the denominator floored at `eps`."""
    t, p = _values(target), _values(pred)
    _check_pair(t, p, "spectral convergence")
    return torch.linalg.vector_norm(t - p) / torch.clamp_min(torch.linalg.vector_norm(t), eps)


def log_magnitude_loss(
    target: Spectrogram | torch.Tensor,
    pred: Spectrogram | torch.Tensor,
    eps: float = LOG_MAG_EPS,
) -> torch.Tensor:
    """Mean absolute difference of log(target + eps) and log(pred + eps)."""
    t, p = _values(target), _values(pred)
    _check_pair(t, p, "log-magnitude")
    return F.l1_loss(torch.log(t + eps), torch.log(p + eps))
