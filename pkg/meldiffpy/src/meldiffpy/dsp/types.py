from dataclasses import dataclass, field
from typing import Self
import torch
from ..common import SpectrogramKind
from ..utils import InvalidInputError, InvalidConfigError, KindError


@dataclass(frozen=True)
class AudioBuffer:
    samples: torch.Tensor  # [channels, length]
    sample_rate: int

    def __post_init__(self: Self):
        if self.sample_rate <= 0:
            raise InvalidInputError(f"sample rate must be positive, got {self.sample_rate}")
        if self.samples.ndim != 2 or self.samples.shape[0] < 1:
            raise InvalidInputError(
                f"audio samples must be shaped [channels, length], got {tuple(self.samples.shape)}"
            )
        if self.samples.is_complex() or not bool(torch.isfinite(self.samples).all()):
            raise InvalidInputError("audio samples must be real and finite")
        return None

    @property
    def channels(self: Self) -> int:
        return self.samples.shape[0]

    @property
    def length(self: Self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self: Self) -> float:
        return self.length / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 2048
    window_length: int = 2048
    hop_length: int = 1024
    centered: bool = True

    def __post_init__(self: Self):
        if not 0 < self.hop_length <= self.window_length <= self.fft_size:
            raise InvalidConfigError(
                "STFT sizes must satisfy 0 < hop_length <= window_length <= fft_size, "
                f"got hop={self.hop_length}, window={self.window_length}, fft={self.fft_size}"
            )
        return None

    @property
    def bins(self: Self) -> int:
        return self.fft_size // 2 + 1

    def window(
        self: Self, dtype: torch.dtype = torch.float32, device: torch.device | None = None
    ) -> torch.Tensor:
        return torch.hann_window(self.window_length, periodic=True, dtype=dtype, device=device)


@dataclass(frozen=True)
class Spectrogram:
    values: torch.Tensor  # [..., channels, bins, frames]
    kind: SpectrogramKind

    def __post_init__(self: Self):
        if self.values.ndim < 3:
            raise InvalidInputError(
                f"spectrogram values must be at least [c, f, l], got {tuple(self.values.shape)}"
            )
        if (self.kind == SpectrogramKind.COMPLEX) != self.values.is_complex():
            raise KindError(
                f"{self.kind} spectrogram cannot hold a {self.values.dtype} tensor"
            )
        if self.kind.is_non_negative and bool((self.values < 0).any()):
            raise InvalidInputError(f"{self.kind} spectrogram has negative entries")
        return None

    @property
    def channels(self: Self) -> int:
        return self.values.shape[-3]

    @property
    def bins(self: Self) -> int:
        return self.values.shape[-2]

    @property
    def frames(self: Self) -> int:
        return self.values.shape[-1]


@dataclass(frozen=True)
class MelFilterbank:
    weights: torch.Tensor  # [n_mels, fft_size // 2 + 1]
    f_min: float
    f_max: float
    sample_rate: int = field(default=44100)

    @property
    def n_mels(self: Self) -> int:
        return self.weights.shape[0]

    @property
    def bins(self: Self) -> int:
        return self.weights.shape[1]
