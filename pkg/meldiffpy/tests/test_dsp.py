import math
import pytest
import torch
from meldiffpy.common import SpectrogramKind
from meldiffpy.dsp import (
    AudioBuffer,
    MelFrontend,
    Spectrogram,
    StftConfig,
    build_mel_filterbank,
    griffin_lim,
    griffin_lim_tensor,
    istft,
    istft_tensor,
    log_magnitude_loss,
    mel_center_frequencies,
    mel_spectrogram,
    project_mel,
    spectral_convergence_loss,
    stft,
    stft_tensor,
)
from meldiffpy.dsp.losses import LOG_MAG_EPS
from meldiffpy.utils import InvalidConfigError, InvalidInputError, KindError, ShapeError

SR = 16000
CFG = StftConfig(fft_size=512, window_length=512, hop_length=128)


def sine(freq: float, n: int = 8000, channels: int = 1) -> torch.Tensor:
    t = torch.arange(n, dtype=torch.float32) / SR
    return torch.sin(2 * math.pi * freq * t).expand(channels, -1).clone()


# ---------------------------------------------------------------------------
# Containers
# ---------------------------------------------------------------------------


class TestContainers:
    def test_audio_properties(self):
        audio = AudioBuffer(torch.zeros(2, 8000), SR)
        assert audio.channels == 2
        assert audio.length == 8000
        assert audio.duration == pytest.approx(0.5)

    def test_audio_rejects_bad_shape(self):
        with pytest.raises(InvalidInputError):
            AudioBuffer(torch.zeros(8000), SR)

    def test_audio_rejects_non_finite(self):
        samples = torch.zeros(1, 10)
        samples[0, 3] = float("nan")
        with pytest.raises(InvalidInputError, match="finite"):
            AudioBuffer(samples, SR)

    def test_audio_rejects_bad_rate(self):
        with pytest.raises(InvalidInputError):
            AudioBuffer(torch.zeros(1, 10), 0)

    def test_stft_config_ordering(self):
        with pytest.raises(InvalidConfigError):
            StftConfig(fft_size=256, window_length=512, hop_length=128)

    def test_spectrogram_kind_must_match_dtype(self):
        with pytest.raises(KindError):
            Spectrogram(torch.ones(1, 4, 4), SpectrogramKind.COMPLEX)

    def test_magnitude_must_be_non_negative(self):
        with pytest.raises(InvalidInputError):
            Spectrogram(-torch.ones(1, 4, 4), SpectrogramKind.MAGNITUDE)

    def test_log_magnitude_may_be_negative(self):
        spec = Spectrogram(-torch.ones(1, 4, 5), SpectrogramKind.LOG_MAGNITUDE)
        assert (spec.channels, spec.bins, spec.frames) == (1, 4, 5)


# ---------------------------------------------------------------------------
# STFT
# ---------------------------------------------------------------------------


class TestStft:
    def test_shape(self):
        spec = stft_tensor(sine(440.0), CFG)
        assert spec.shape == (1, 257, 8000 // 128 + 1)
        assert spec.is_complex()

    def test_batched_shape(self):
        spec = stft_tensor(torch.randn(3, 2, 4096), CFG)
        assert spec.shape == (3, 2, 257, 33)

    def test_perfect_reconstruction(self):
        x = torch.randn(2, 8000, generator=torch.Generator().manual_seed(1))
        y = istft_tensor(stft_tensor(x, CFG), CFG, length=8000)
        assert torch.allclose(x, y, atol=1e-4)

    def test_buffer_round_trip(self):
        audio = AudioBuffer(sine(1000.0, channels=2), SR)
        spec = stft(audio, CFG)
        assert spec.kind == SpectrogramKind.COMPLEX
        back = istft(spec, CFG, SR, length=audio.length)
        assert torch.allclose(back.samples, audio.samples, atol=1e-4)

    def test_short_input(self):
        spec = stft_tensor(torch.randn(1, 100), CFG)
        assert spec.shape == (1, 257, 1)

    def test_empty_input(self):
        with pytest.raises(InvalidInputError):
            stft_tensor(torch.zeros(1, 0), CFG)

    def test_istft_needs_complex(self):
        with pytest.raises(KindError):
            istft_tensor(torch.ones(1, 257, 4), CFG)

    def test_istft_checks_bins(self):
        with pytest.raises(ShapeError):
            istft_tensor(torch.ones(1, 100, 4, dtype=torch.complex64), CFG)

    def test_istft_rejects_magnitude_kind(self):
        spec = Spectrogram(torch.ones(1, 257, 4), SpectrogramKind.MAGNITUDE)
        with pytest.raises(KindError):
            istft(spec, CFG, SR)

    @pytest.mark.slow
    @pytest.mark.parametrize("samples, frames", [(523_264, 512), (8_387_584, 8192)])
    def test_full_size_frame_counts(self, samples: int, frames: int):
        frontend = MelFrontend.create()
        mel = frontend.mel(torch.zeros(2, samples))
        assert mel.shape == (2, 128, frames)
        assert frontend.frames_for(samples) == frames
        assert frontend.samples_for(frames) == samples


# ---------------------------------------------------------------------------
# Mel filterbank
# ---------------------------------------------------------------------------


class TestMelFilterbank:
    def test_shape_and_sign(self):
        fb = build_mel_filterbank(16, 512, SR)
        assert fb.weights.shape == (16, 257)
        assert bool((fb.weights >= 0).all())
        assert bool((fb.weights.sum(dim=1) > 0).all())
        assert fb.f_max == pytest.approx(SR / 2)

    def test_center_frequencies_increase(self):
        centers = mel_center_frequencies(build_mel_filterbank(16, 512, SR))
        assert bool((centers[1:] > centers[:-1]).all())
        assert 0.0 < centers[0].item() < centers[-1].item() < SR / 2

    def test_too_many_bands(self):
        with pytest.raises(InvalidConfigError):
            build_mel_filterbank(300, 512, SR)

    def test_sine_lands_in_its_band(self):
        fb = build_mel_filterbank(16, 512, SR)
        centers = mel_center_frequencies(fb)
        band = 9
        mel = mel_spectrogram(AudioBuffer(sine(centers[band].item()), SR), CFG, fb)
        assert mel.kind == SpectrogramKind.MEL
        energy = mel.values[0].mean(dim=-1)
        assert int(energy.argmax()) == band

    def test_projection_is_linear(self):
        fb = build_mel_filterbank(16, 512, SR)
        magnitude = stft_tensor(sine(440.0) + 0.3 * sine(3000.0), CFG).abs()
        for scale in (0.0, 0.5, 3.0):
            assert torch.allclose(project_mel(scale * magnitude, fb), scale * project_mel(magnitude, fb), atol=1e-5)

    def test_mel_of_silence_is_zero(self):
        fb = build_mel_filterbank(16, 512, SR)
        mel = mel_spectrogram(AudioBuffer(torch.zeros(1, 4096), SR), CFG, fb)
        assert float(mel.values.abs().max()) == 0.0


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


class TestLosses:
    def test_identical_is_zero(self):
        mag = torch.rand(1, 257, 10) + 0.1
        assert spectral_convergence_loss(mag, mag).item() == 0.0
        assert log_magnitude_loss(mag, mag).item() == 0.0

    def test_zero_prediction_has_unit_convergence(self):
        mag = torch.rand(1, 257, 10) + 0.1
        assert spectral_convergence_loss(mag, torch.zeros_like(mag)).item() == pytest.approx(1.0)

    def test_worked_convergence_values(self):
        target = torch.tensor([[3.0, 4.0]])
        assert spectral_convergence_loss(target, torch.zeros(1, 2)).item() == pytest.approx(1.0)
        assert spectral_convergence_loss(target, torch.tensor([[3.0, 0.0]])).item() == pytest.approx(4 / 5)

    def test_log_magnitude_matches_elementwise_sum(self):
        g = torch.Generator().manual_seed(5)
        target = torch.rand(2, 6, 7, generator=g, dtype=torch.float64)
        pred = torch.rand(2, 6, 7, generator=g, dtype=torch.float64)
        total = 0.0
        for a, b in zip(target.flatten().tolist(), pred.flatten().tolist()):
            total += abs(math.log(a + LOG_MAG_EPS) - math.log(b + LOG_MAG_EPS))
        assert log_magnitude_loss(target, pred).item() == pytest.approx(total / target.numel(), abs=1e-9)

    def test_zero_target_is_finite(self):
        loss = spectral_convergence_loss(torch.zeros(1, 4, 4), torch.ones(1, 4, 4))
        assert math.isfinite(loss.item())

    def test_log_magnitude_symmetry(self):
        a = torch.rand(1, 8, 8)
        b = torch.rand(1, 8, 8)
        assert log_magnitude_loss(a, b).item() == pytest.approx(log_magnitude_loss(b, a).item())

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            spectral_convergence_loss(torch.ones(1, 4, 4), torch.ones(1, 4, 5))

    def test_negative_magnitude(self):
        with pytest.raises(InvalidInputError):
            log_magnitude_loss(torch.ones(1, 4, 4), -torch.ones(1, 4, 4))

    def test_accepts_spectrograms(self):
        mag = Spectrogram(torch.ones(1, 4, 4), SpectrogramKind.MAGNITUDE)
        assert spectral_convergence_loss(mag, mag).item() == 0.0


# ---------------------------------------------------------------------------
# Griffin-Lim
# ---------------------------------------------------------------------------


class TestGriffinLim:
    def test_output_length(self):
        mag = stft_tensor(sine(440.0), CFG).abs()
        audio = griffin_lim_tensor(mag, CFG, iterations=2)
        assert audio.shape == (1, (mag.shape[-1] - 1) * 128)

    def test_returns_best_iterate(self):
        mag = stft_tensor(sine(440.0) + 0.5 * sine(1200.0), CFG).abs()
        history: list[float] = []
        audio = griffin_lim_tensor(mag, CFG, iterations=16, history=history)
        assert len(history) == 17
        final = spectral_convergence_loss(mag, stft_tensor(audio, CFG).abs()).item()
        assert final == pytest.approx(min(history), rel=1e-4)
        assert min(history) < history[0]

    def test_seeded_phase_is_deterministic(self):
        mag = stft_tensor(sine(440.0), CFG).abs()
        a = griffin_lim_tensor(mag, CFG, 4, generator=torch.Generator().manual_seed(3))
        b = griffin_lim_tensor(mag, CFG, 4, generator=torch.Generator().manual_seed(3))
        assert torch.equal(a, b)

    def test_classic_variant(self):
        mag = stft_tensor(sine(440.0), CFG).abs()
        audio = griffin_lim_tensor(mag, CFG, iterations=4, momentum=0.0)
        assert bool(torch.isfinite(audio).all())

    def test_rejects_momentum_of_one(self):
        with pytest.raises(InvalidInputError):
            griffin_lim_tensor(torch.ones(1, 257, 4), CFG, momentum=1.0)

    def test_rejects_negative_magnitude(self):
        with pytest.raises(InvalidInputError):
            griffin_lim_tensor(-torch.ones(1, 257, 4), CFG)

    def test_buffer_variant_checks_kind(self):
        spec = Spectrogram(torch.ones(1, 16, 4), SpectrogramKind.MEL)
        with pytest.raises(InvalidInputError):
            griffin_lim(spec, CFG)

    def test_buffer_variant(self):
        spec = Spectrogram(stft_tensor(sine(440.0), CFG).abs(), SpectrogramKind.MAGNITUDE)
        audio = griffin_lim(spec, CFG, iterations=2, sample_rate=SR)
        assert audio.sample_rate == SR
        assert audio.channels == 1

    @pytest.mark.slow
    def test_converges_on_a_known_magnitude(self):
        mag = stft_tensor(sine(440.0) + 0.5 * sine(1200.0) + 0.25 * sine(2500.0), CFG).abs()
        audio = griffin_lim_tensor(mag, CFG, iterations=200)
        assert spectral_convergence_loss(mag, stft_tensor(audio, CFG).abs()).item() < 0.1
