from .types import AudioBuffer, StftConfig, Spectrogram, MelFilterbank
from .transforms import (
    stft,
    istft,
    stft_tensor,
    istft_tensor,
    build_mel_filterbank,
    mel_center_frequencies,
    mel_spectrogram,
    project_mel,
    MelFrontend,
)
from .losses import spectral_convergence_loss, log_magnitude_loss
from .griffinlim import griffin_lim, griffin_lim_tensor
