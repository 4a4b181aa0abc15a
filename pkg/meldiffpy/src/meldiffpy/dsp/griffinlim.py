import math
from typing import Optional
import torch
from ..common import SpectrogramKind
from ..utils import InvalidInputError
from .types import AudioBuffer, StftConfig, Spectrogram
from .transforms import stft_tensor, istft_tensor
from .losses import spectral_convergence_loss


@torch.no_grad()
def griffin_lim_tensor(
    magnitude: torch.Tensor,
    cfg: StftConfig,
    iterations: int = 200,
    momentum: float = 0.99,
    length: Optional[int] = None,
    generator: Optional[torch.Generator] = None,
    history: Optional[list[float]] = None,
) -> torch.Tensor:
    """Fast Griffin-Lim on [..., f, l] magnitudes; returns the best iterate.

    `momentum=0` is the classic alternating projection. With `generator`
    the initial phase is uniform random, otherwise zero. When `history` is
    given, the spectral convergence of every iterate is appended to it.
    """
    if iterations < 0:
        raise InvalidInputError(f"iterations must be >= 0, got {iterations}")
    if not 0.0 <= momentum < 1.0:
        raise InvalidInputError(f"momentum must be in [0, 1), got {momentum}")
    if bool((magnitude < 0).any()):
        raise InvalidInputError("Griffin-Lim needs a non-negative magnitude")

    if length is None:
        length = (magnitude.shape[-1] - 1) * cfg.hop_length
    if generator is not None:
        phase = torch.rand(magnitude.shape, generator=generator, dtype=magnitude.dtype)
        angles = torch.polar(torch.ones_like(magnitude), 2.0 * math.pi * phase.to(magnitude.device))
    else:
        angles = torch.polar(torch.ones_like(magnitude), torch.zeros_like(magnitude))

    def _mismatch(audio: torch.Tensor) -> float:
        return spectral_convergence_loss(magnitude, stft_tensor(audio, cfg).abs()).item()

    waveform = istft_tensor(magnitude * angles, cfg, length)
    best, best_error = waveform, _mismatch(waveform)
    if history is not None:
        history.append(best_error)

    previous = torch.zeros_like(angles)
    for _ in range(iterations):
        rebuilt = stft_tensor(waveform, cfg)
        angles = rebuilt - previous * (momentum / (1.0 + momentum))
        angles = angles / (angles.abs() + 1e-16)
        previous = rebuilt
        waveform = istft_tensor(magnitude * angles, cfg, length)
        error = _mismatch(waveform)
        if history is not None:
            history.append(error)
        if error < best_error:
            best, best_error = waveform, error
    return best


def griffin_lim(
    mag: Spectrogram,
    cfg: StftConfig,
    iterations: int = 200,
    momentum: float = 0.99,
    sample_rate: int = 44100,
    length: Optional[int] = None,
    generator: Optional[torch.Generator] = None,
    history: Optional[list[float]] = None,
) -> AudioBuffer:
    if mag.kind != SpectrogramKind.MAGNITUDE:
        raise InvalidInputError(f"Griffin-Lim reconstructs magnitudes, got a {mag.kind} spectrogram")
    audio = griffin_lim_tensor(
        mag.values, cfg, iterations, momentum, length, generator, history
    )
    return AudioBuffer(audio, sample_rate)
