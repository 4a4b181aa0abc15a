from dataclasses import dataclass
from typing import Optional, Self
import torch
import torch.nn.functional as F
import torchaudio.functional as AF
from ..common import SpectrogramKind
from ..utils import InvalidInputError, InvalidConfigError, KindError, ShapeError
from .types import AudioBuffer, StftConfig, Spectrogram, MelFilterbank


def stft_tensor(x: torch.Tensor, cfg: StftConfig) -> torch.Tensor:
    """[..., T] real -> [..., fft_size // 2 + 1, T // hop + 1] complex (centered)."""
    length = x.shape[-1]
    if length == 0:
        raise InvalidInputError("cannot transform empty audio")
    lead = x.shape[:-1]
    flat = x.reshape(-1, 1, length)
    if cfg.centered:
        pad = cfg.fft_size // 2
        # reflect padding needs more samples than the pad width
        mode = "reflect" if length > pad else "constant"
        flat = F.pad(flat, (pad, pad), mode=mode)
    flat = flat.squeeze(1)
    if flat.shape[-1] < cfg.fft_size:
        flat = F.pad(flat, (0, cfg.fft_size - flat.shape[-1]))
    spec = torch.stft(
        flat,
        n_fft=cfg.fft_size,
        hop_length=cfg.hop_length,
        win_length=cfg.window_length,
        window=cfg.window(flat.dtype, flat.device),
        center=False,
        return_complex=True,
    )
    return spec.reshape(*lead, *spec.shape[-2:])


def istft_tensor(
    spec: torch.Tensor, cfg: StftConfig, length: Optional[int] = None
) -> torch.Tensor:
    """Overlap-add inverse of `stft_tensor`; [..., f, l] complex -> [..., T]."""
    if not spec.is_complex():
        raise KindError(f"inverse STFT expects a complex spectrogram, got {spec.dtype}")
    if spec.shape[-2] != cfg.bins:
        raise ShapeError(f"expected {cfg.bins} frequency bins, got {spec.shape[-2]}")
    lead = spec.shape[:-2]
    flat = spec.reshape(-1, *spec.shape[-2:])
    real_dtype = flat.real.dtype
    audio = torch.istft(
        flat,
        n_fft=cfg.fft_size,
        hop_length=cfg.hop_length,
        win_length=cfg.window_length,
        window=cfg.window(real_dtype, flat.device),
        center=cfg.centered,
        length=length,
    )
    return audio.reshape(*lead, audio.shape[-1])


def stft(audio: AudioBuffer, cfg: StftConfig) -> Spectrogram:
    return Spectrogram(stft_tensor(audio.samples, cfg), SpectrogramKind.COMPLEX)


def istft(
    spec: Spectrogram, cfg: StftConfig, sample_rate: int, length: Optional[int] = None
) -> AudioBuffer:
    if spec.kind != SpectrogramKind.COMPLEX:
        raise KindError(f"inverse STFT expects a complex spectrogram, got {spec.kind}")
    return AudioBuffer(istft_tensor(spec.values, cfg, length), sample_rate)


def build_mel_filterbank(
    n_mels: int,
    fft_size: int,
    sample_rate: int,
    f_min: float = 0.0,
    f_max: Optional[float] = None,
) -> MelFilterbank:
    bins = fft_size // 2 + 1
    if n_mels < 1:
        raise InvalidConfigError(f"need at least one mel band, got {n_mels}")
    if n_mels > bins:
        raise InvalidConfigError(
            f"{n_mels} mel bands cannot be resolved from {bins} frequency bins"
        )
    top = f_max if f_max is not None else sample_rate / 2
    weights = AF.melscale_fbanks(
        n_freqs=bins,
        f_min=f_min,
        f_max=top,
        n_mels=n_mels,
        sample_rate=sample_rate,
        norm=None,
        mel_scale="htk",
    ).T.contiguous()
    empty = (weights.sum(dim=1) <= 0).nonzero().flatten().tolist()
    if len(empty) != 0:
        raise InvalidConfigError(
            f"mel bands {empty} cover no frequency bin (fft_size={fft_size}, n_mels={n_mels})"
        )
    return MelFilterbank(weights, float(f_min), float(top), sample_rate)


def mel_center_frequencies(fb: MelFilterbank) -> torch.Tensor:
    """Center frequency in Hz of every band, on the HTK mel scale."""
    low = 2595.0 * torch.log10(torch.tensor(1.0 + fb.f_min / 700.0, dtype=torch.float64))
    high = 2595.0 * torch.log10(torch.tensor(1.0 + fb.f_max / 700.0, dtype=torch.float64))
    mels = torch.linspace(low.item(), high.item(), fb.n_mels + 2, dtype=torch.float64)[1:-1]
    return 700.0 * (10.0 ** (mels / 2595.0) - 1.0)


def project_mel(magnitude: torch.Tensor, fb: MelFilterbank) -> torch.Tensor:
    if magnitude.shape[-2] != fb.bins:
        raise ShapeError(f"filterbank expects {fb.bins} bins, got {magnitude.shape[-2]}")
    return torch.matmul(fb.weights.to(magnitude.dtype).to(magnitude.device), magnitude)


def mel_spectrogram(audio: AudioBuffer, cfg: StftConfig, fb: MelFilterbank) -> Spectrogram:
    magnitude = stft_tensor(audio.samples, cfg).abs()
    return Spectrogram(project_mel(magnitude, fb), SpectrogramKind.MEL)


@dataclass(frozen=True)
class MelFrontend:
    stft: StftConfig
    filterbank: MelFilterbank
    sample_rate: int

    @classmethod
    def create(
        cls: type[Self],
        sample_rate: int = 44100,
        fft_size: int = 2048,
        window_length: int = 2048,
        hop_length: int = 1024,
        n_mels: int = 128,
    ) -> Self:
        cfg = StftConfig(fft_size, window_length, hop_length)
        return cls(cfg, build_mel_filterbank(n_mels, fft_size, sample_rate), sample_rate)

    @property
    def n_mels(self: Self) -> int:
        return self.filterbank.n_mels

    @property
    def bins(self: Self) -> int:
        return self.stft.bins

    def magnitude(self: Self, samples: torch.Tensor) -> torch.Tensor:
        return stft_tensor(samples, self.stft).abs()

    def mel(self: Self, samples: torch.Tensor) -> torch.Tensor:
        return project_mel(self.magnitude(samples), self.filterbank)

    def frames_for(self: Self, n_samples: int) -> int:
        return n_samples // self.stft.hop_length + 1

    def samples_for(self: Self, frames: int) -> int:
        return (frames - 1) * self.stft.hop_length

    def seconds_to_frame(self: Self, seconds: float) -> int:
        return round(seconds * self.sample_rate / self.stft.hop_length)
