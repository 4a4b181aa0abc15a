from dataclasses import dataclass
from typing import Any, Optional, Self
import torch
from torch import nn
from ..common import SpectrogramKind
from ..dsp import (
    AudioBuffer,
    StftConfig,
    Spectrogram,
    spectral_convergence_loss,
    log_magnitude_loss,
    griffin_lim_tensor,
)
from ..utils import InvalidConfigError, KindError, ShapeError
from .layers import Tokenizer, Detokenizer, ResidualBlock

# keeps exp() finite in float16
LOG_MAGNITUDE_LIMIT: float = 20.0


@dataclass(frozen=True)
class VocoderConfig:
    # fmt: off
    model_dim: int   = 256
    mlp_factor: int  = 4
    n_mels: int      = 128
    fft_size: int    = 2048
    # fmt: on

    def __post_init__(self: Self):
        if self.n_mels < 1 or self.fft_size < 2:
            raise InvalidConfigError(f"invalid vocoder sizes: n_mels={self.n_mels}, fft_size={self.fft_size}")
        if self.model_dim < 2 * self.n_mels:
            raise InvalidConfigError(
                f"model dimension {self.model_dim} must be at least twice the mel count {self.n_mels}"
            )
        if self.mlp_factor < 1:
            raise InvalidConfigError(f"mlp factor must be >= 1, got {self.mlp_factor}")
        return None

    @property
    def stft_bins(self: Self) -> int:
        return self.fft_size // 2 + 1

    @classmethod
    def from_dict(cls: type[Self], d: dict[str, Any]) -> Self:
        return cls(**d)


class Vocoder(nn.Module):
    """Normalized mel [B, c, f_m, l] -> strictly positive magnitude [B, c, f_s, l]."""

    def __init__(self: Self, cfg: VocoderConfig):
        super().__init__()
        self.cfg = cfg
        self.tokenizer = Tokenizer(cfg.n_mels, cfg.model_dim)
        self.block = ResidualBlock(cfg.model_dim, cfg.model_dim, None, cfg.mlp_factor)
        self.detokenizer = Detokenizer(cfg.model_dim, cfg.stft_bins)
        return None

    def forward(self: Self, mel: torch.Tensor) -> torch.Tensor:
        unbatched = mel.ndim == 3
        if unbatched:
            mel = mel.unsqueeze(0)
        if mel.ndim != 4 or mel.shape[2] != self.cfg.n_mels:
            raise ShapeError(f"vocoder expects [B, c, {self.cfg.n_mels}, l], got {tuple(mel.shape)}")
        log_mag = self.detokenizer(self.block(self.tokenizer(mel)))
        out = torch.exp(torch.clamp(log_mag, -LOG_MAGNITUDE_LIMIT, LOG_MAGNITUDE_LIMIT))
        return out.squeeze(0) if unbatched else out


def vocoder_loss(
    target_mag: Spectrogram | torch.Tensor, pred_mag: Spectrogram | torch.Tensor
) -> torch.Tensor:
    """Spectral convergence plus log-magnitude loss, equally weighted."""
    return spectral_convergence_loss(target_mag, pred_mag) + log_magnitude_loss(target_mag, pred_mag)


@torch.no_grad()
def mel_to_audio(
    mel: Spectrogram | torch.Tensor,
    vocoder: Vocoder,
    stft_cfg: StftConfig,
    gl_iterations: int = 200,
    gl_momentum: float = 0.99,
    sample_rate: int = 44100,
    generator: Optional[torch.Generator] = None,
) -> AudioBuffer:
    """Vocoder magnitude then Griffin-Lim; returns (l - 1) * hop samples per channel."""
    if isinstance(mel, Spectrogram):
        if mel.kind != SpectrogramKind.NORMALIZED_MEL:
            raise KindError(f"the vocoder consumes normalized mel spectrograms, got {mel.kind}")
        mel = mel.values
    if mel.ndim != 3:
        raise ShapeError(f"expected one [c, f, l] mel spectrogram, got {tuple(mel.shape)}")
    if stft_cfg.bins != vocoder.cfg.stft_bins:
        raise InvalidConfigError(
            f"STFT produces {stft_cfg.bins} bins but the vocoder predicts {vocoder.cfg.stft_bins}"
        )
    magnitude = vocoder(mel).float()
    audio = griffin_lim_tensor(magnitude, stft_cfg, gl_iterations, gl_momentum, generator=generator)
    return AudioBuffer(audio, sample_rate)
