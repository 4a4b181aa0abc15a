import pytest
import torch
from torch import nn
from meldiffpy.diffusion import linear_schedule
from meldiffpy.dsp import AudioBuffer, MelFrontend
from meldiffpy.nn import UNet, UNetConfig, Vocoder, VocoderConfig
from meldiffpy.scaling import FeatureScaler
from meldiffpy.tasks import Synthesizer
from meldiffpy.training import synth_corpus
from meldiffpy.training.config import Config, SamplingConfig

SAMPLE_RATE = 16000
N_MELS = 16

# small enough for CPU runs, large enough to exercise every block kind
TINY_CONFIG: dict = {
    "transforms": {
        "sample_rate": SAMPLE_RATE,
        "fft_size": 512,
        "window_length": 512,
        "hop_length": 128,
        "mel_frequencies": N_MELS,
        "griffinlim_iterations": 2,
    },
    "vocoder": {
        "model": {"model_dimension": 32},
        "data": {"audio_length": 4096, "audio_channels": 1, "batch_size": 2},
        "training": {"lr_warmup_iterations": 2, "training_steps": 3},
    },
    "unet": {
        "model": {
            "base_model_dimension": 32,
            "timestep_dimension": 16,
            "number_of_attention_heads": 4,
            "dimensionality_factor": [1, 1],
            "dilations": [1, 1],
            "has_attention": [False, True],
            "has_resampling": [True, False],
            "blocks_per_resolution": [1, 1],
        },
        "diffusion": {"number_of_training_timesteps": 100, "number_of_sampling_steps": 5},
        "ema": {"start_step": 0, "update_every_n_steps": 1},
        # 32 frames at hop 128
        "data": {"audio_length": 3968, "audio_channels": 1, "batch_size": 2},
        "training": {"lr_warmup_iterations": 2, "training_steps": 3},
    },
    "sampling": {"repaint_jump_length": 2, "repaint_jump_n_sample": 2},
    "runtime": {"device": "cpu", "progress": False},
}


class ZeroModel(nn.Module):
    """Noise predictor that always predicts zero noise."""

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        return torch.zeros_like(x)


@pytest.fixture
def tiny_config() -> Config:
    return Config.from_dict(TINY_CONFIG)


@pytest.fixture
def frontend(tiny_config: Config) -> MelFrontend:
    return tiny_config.transforms.frontend()


@pytest.fixture
def corpus() -> list[AudioBuffer]:
    return synth_corpus(4, 0.5, SAMPLE_RATE, seed=0, channels=1)


def fitted_scaler(frontend: MelFrontend, corpus: list[AudioBuffer]) -> FeatureScaler:
    scaler = FeatureScaler(frontend.n_mels)
    batch = torch.stack([item.samples for item in corpus])
    scaler.train()
    scaler(frontend.mel(batch))
    return scaler.eval()


@pytest.fixture
def synthesizer(tiny_config: Config, frontend: MelFrontend, corpus: list[AudioBuffer]) -> Synthesizer:
    torch.manual_seed(0)
    unet_cfg = tiny_config.unet_config()
    return Synthesizer(
        UNet(unet_cfg, zero_output=False).eval(),
        linear_schedule(100),
        fitted_scaler(frontend, corpus),
        Vocoder(tiny_config.vocoder_config()).eval(),
        fitted_scaler(frontend, corpus),
        frontend,
        unet_cfg.audio_channels,
        unet_cfg.time_divisor,
        num_steps=5,
        sampling=SamplingConfig(repaint_jump_length=2, repaint_jump_n_sample=2),
        griffinlim_iterations=2,
    )


@pytest.fixture
def tiny_unet_config() -> UNetConfig:
    return UNetConfig(
        base_dim=32,
        timestep_dim=16,
        num_heads=4,
        dim_factors=(1, 2),
        dilations=(1, 1),
        has_attention=(False, True),
        has_resampling=(True, False),
        blocks_per_resolution=(1, 2),
        n_mels=N_MELS,
        audio_channels=2,
    )


@pytest.fixture
def tiny_vocoder() -> Vocoder:
    torch.manual_seed(0)
    return Vocoder(VocoderConfig(model_dim=32, n_mels=N_MELS, fft_size=512))
