import math
import numpy as np
import pytest
import torch
from conftest import SAMPLE_RATE, TINY_CONFIG
from meldiffpy.common import CheckpointKind, Precision
from meldiffpy.diffusion import make_schedule, sample_loop
from meldiffpy.dsp import AudioBuffer, project_mel, spectral_convergence_loss
from meldiffpy.nn import UNet, Vocoder
from meldiffpy.scaling import FeatureScaler
from meldiffpy.training import (
    Config,
    RandomCropDataset,
    conform,
    crop_loader,
    lr_schedule,
    synth_corpus,
    train_diffusion,
    train_vocoder,
    warmup_factor,
)
from meldiffpy.training.loops import _check_finite
from meldiffpy.utils import InvalidConfigError, InvalidInputError, NonFiniteLossError


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


class TestConfig:
    def test_defaults_are_the_full_size_setup(self):
        cfg = Config()
        assert cfg.transforms.sample_rate == 44100
        assert cfg.transforms.hop_length == 1024
        assert cfg.unet.training.training_steps == 110000
        assert cfg.unet.data.audio_length == 8387584
        assert cfg.unet.diffusion.number_of_sampling_steps == 200
        assert cfg.vocoder.training.adam_betas == (0.5, 0.999)
        assert cfg.unet.ema.decay == 0.995
        assert cfg.transforms.frontend().frames_for(cfg.unet.data.audio_length) == 8192

    def test_builtin_full_matches_defaults(self):
        assert Config.builtin("full") == Config()

    def test_builtin_toy(self):
        cfg = Config.builtin("toy")
        assert cfg.transforms.mel_frequencies == 16
        frames = cfg.transforms.frontend().frames_for(cfg.unet.data.audio_length)
        assert frames % cfg.unet_config().time_divisor == 0

    def test_unknown_builtin(self):
        with pytest.raises(InvalidConfigError):
            Config.builtin("nope")

    def test_partial_sections_keep_defaults(self, tiny_config: Config):
        assert tiny_config.unet.ema.decay == 0.995
        assert tiny_config.unet.model.number_of_attention_heads == 4
        assert tiny_config.vocoder.training.learning_rate == 0.0002

    def test_unknown_key(self):
        with pytest.raises(InvalidConfigError, match="transforms.hop"):
            Config.from_dict({"transforms": {"hop": 3}})

    def test_type_checks(self):
        with pytest.raises(InvalidConfigError):
            Config.from_dict({"transforms": {"hop_length": "large"}})
        with pytest.raises(InvalidConfigError):
            Config.from_dict({"runtime": {"progress": "maybe"}})

    def test_fraction_strings(self):
        cfg = Config.from_dict({"unet": {"training": {"lr_warmup_start_factor": "1/3"}}})
        assert cfg.unet.training.lr_warmup_start_factor == pytest.approx(1 / 3)

    def test_load_yaml(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("transforms:\n  mel_frequencies: 64\nsampling:\n  eta: 0.5\n")
        cfg = Config.load(path)
        assert cfg.transforms.mel_frequencies == 64
        assert cfg.sampling.eta == 0.5

    def test_load_rejects_non_mapping(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(InvalidConfigError):
            Config.load(path)

    def test_replace(self, tiny_config: Config):
        cfg = tiny_config.replace(**{"unet.training.seed": 7, "runtime.device": "cpu"})
        assert cfg.unet.training.seed == 7
        assert cfg.transforms == tiny_config.transforms
        with pytest.raises(InvalidConfigError):
            tiny_config.replace(**{"unet.training.nope": 1})

    def test_digest(self, tiny_config: Config):
        assert tiny_config.digest() == Config.from_dict(TINY_CONFIG).digest()
        assert tiny_config.digest() != tiny_config.replace(**{"unet.training.seed": 1}).digest()

    def test_to_dict_round_trip(self, tiny_config: Config):
        assert Config.from_dict(tiny_config.to_dict()) == tiny_config

    def test_unet_config(self, tiny_config: Config):
        unet = tiny_config.unet_config()
        assert unet.n_mels == 16
        assert unet.audio_channels == 1
        assert unet.time_divisor == 2

    def test_precision(self):
        assert Precision.coerce_from("16") == Precision.HALF_MIXED
        assert Precision.coerce_from("bf16-mixed") == Precision.BF16_MIXED
        assert Precision.FULL.autocast_dtype(torch.device("cpu")) is None
        assert Precision.HALF_MIXED.autocast_dtype(torch.device("cpu")) == torch.bfloat16
        with pytest.raises(InvalidConfigError):
            Config.from_dict({"unet": {"training": {"precision": "8"}}})


# ---------------------------------------------------------------------------
# Learning rate warmup
# ---------------------------------------------------------------------------


class TestWarmup:
    def test_ramp(self):
        assert warmup_factor(0, 500, 1 / 3) == pytest.approx(1 / 3)
        assert warmup_factor(250, 500, 1 / 3) == pytest.approx(2 / 3)
        assert warmup_factor(500, 500, 1 / 3) == 1.0
        assert warmup_factor(10_000, 500, 1 / 3) == 1.0

    def test_no_warmup(self):
        assert warmup_factor(0, 0, 0.1) == 1.0

    def test_learning_rate(self):
        assert lr_schedule(0, 2e-4, 500, 1 / 3) == pytest.approx(2e-4 / 3)
        assert lr_schedule(600, 2e-4, 500, 1 / 3) == pytest.approx(2e-4)

    def test_negative_step(self):
        with pytest.raises(InvalidConfigError):
            warmup_factor(-1, 10, 0.5)


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


class TestData:
    def test_corpus_is_deterministic(self):
        a = synth_corpus(3, 0.25, SAMPLE_RATE, seed=9)
        b = synth_corpus(3, 0.25, SAMPLE_RATE, seed=9)
        c = synth_corpus(3, 0.25, SAMPLE_RATE, seed=10)
        assert all(torch.equal(x.samples, y.samples) for x, y in zip(a, b))
        assert not torch.equal(a[0].samples, c[0].samples)

    def test_corpus_format(self):
        items = synth_corpus(5, 0.25, SAMPLE_RATE, seed=0, channels=2)
        for item in items:
            assert item.samples.shape == (2, 4000)
            assert item.samples.dtype == torch.float32
            peak = float(item.samples.abs().max())
            assert 0.2 - 1e-6 <= peak <= 0.9 + 1e-6

    def test_corpus_bounds(self):
        with pytest.raises(InvalidConfigError):
            synth_corpus(0, 1.0)
        with pytest.raises(InvalidConfigError):
            synth_corpus(1, 0.0)

    def test_conform(self):
        stereo = AudioBuffer(torch.stack([torch.ones(800), -torch.ones(800)]), 8000)
        mono = conform(stereo, 8000, 1)
        assert mono.channels == 1
        assert float(mono.samples.abs().max()) == 0.0
        up = conform(mono, SAMPLE_RATE, 2)
        assert up.channels == 2
        assert up.sample_rate == SAMPLE_RATE
        assert up.length == 1600

    def test_crops_depend_only_on_seed_and_index(self, corpus: list[AudioBuffer]):
        a = RandomCropDataset(corpus, 1000, 10, seed=3)
        b = RandomCropDataset(corpus, 1000, 10, seed=3)
        assert torch.equal(a[7], b[7])
        assert torch.equal(a[2], RandomCropDataset(corpus, 1000, 3, seed=3)[2])
        assert a[0].shape == (1, 1000)

    def test_short_items_are_padded(self):
        items = [AudioBuffer(torch.ones(1, 100), SAMPLE_RATE)]
        crop = RandomCropDataset(items, 300, 1)[0]
        assert crop.shape == (1, 300)
        assert float(crop[:, 100:].abs().max()) == 0.0

    def test_mixed_channels(self):
        items = [AudioBuffer(torch.ones(1, 100), SAMPLE_RATE), AudioBuffer(torch.ones(2, 100), SAMPLE_RATE)]
        with pytest.raises(InvalidInputError):
            RandomCropDataset(items, 50, 1)

    def test_loader(self, corpus: list[AudioBuffer]):
        batches = list(crop_loader(corpus, 512, batch_size=3, steps=4, seed=0))
        assert len(batches) == 4
        assert batches[0].shape == (3, 1, 512)

    def test_corpus_statistics(self):
        item = synth_corpus(1, 1.0, SAMPLE_RATE, seed=1)[0].samples.numpy()
        # every item holds tones, not silence
        assert np.sqrt(np.mean(item**2)) > 0.01


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------


class TestTrainingLoops:
    def test_non_finite_loss(self):
        with pytest.raises(NonFiniteLossError) as info:
            _check_finite(torch.tensor(float("nan")), 12, lr=1e-4)
        assert info.value.step == 12
        assert "lr" in info.value.diagnostics

    def test_train_vocoder(self, tiny_config: Config, corpus: list[AudioBuffer]):
        ckpt = train_vocoder(corpus, tiny_config, seed=0, steps=3)
        assert ckpt.kind == CheckpointKind.VOCODER
        assert ckpt.step == 3
        assert len(ckpt.loss_history) == 3
        assert all(np.isfinite(ckpt.loss_history))
        assert ckpt.ema is None
        assert bool(ckpt.scaler["standard.initialized"])

    def test_train_diffusion(self, tiny_config: Config, corpus: list[AudioBuffer]):
        ckpt = train_diffusion(corpus, tiny_config, seed=0, steps=3)
        assert ckpt.kind == CheckpointKind.DIFFUSION
        assert len(ckpt.loss_history) == 3
        assert ckpt.schedule == {"kind": "cosine", "T": 100}
        assert ckpt.ema is not None
        assert set(ckpt.ema) == set(ckpt.model)

    def test_training_is_reproducible(self, tiny_config: Config, corpus: list[AudioBuffer]):
        a = train_diffusion(corpus, tiny_config, seed=4, steps=2)
        b = train_diffusion(corpus, tiny_config, seed=4, steps=2)
        assert a.loss_history == pytest.approx(b.loss_history, rel=1e-5)
        for name, value in a.model.items():
            assert torch.allclose(value, b.model[name], atol=1e-6)

    def test_indivisible_crop_length(self, tiny_config: Config, corpus: list[AudioBuffer]):
        cfg = tiny_config.replace(**{"unet.data.audio_length": 4096})
        with pytest.raises(InvalidConfigError):
            train_diffusion(corpus, cfg, steps=1)

    def test_empty_dataset(self, tiny_config: Config):
        with pytest.raises(InvalidInputError):
            train_vocoder([], tiny_config, steps=1)

    @pytest.mark.slow
    def test_vocoder_loss_decreases(self, tiny_config: Config):
        items = synth_corpus(8, 1.0, SAMPLE_RATE, seed=0)
        ckpt = train_vocoder(items, tiny_config, seed=0, steps=150)
        history = ckpt.loss_history
        assert np.mean(history[-20:]) < np.mean(history[:20])

    def test_initial_diffusion_loss_is_unit(self, tiny_config: Config, corpus: list[AudioBuffer]):
        # a zero-initialized output layer predicts no noise at step 0
        ckpt = train_diffusion(corpus, tiny_config, seed=0, steps=1)
        assert ckpt.loss_history[0] == pytest.approx(1.0, rel=0.2)


# ---------------------------------------------------------------------------
# Toy-scale runs
# ---------------------------------------------------------------------------


def toy_config() -> Config:
    return Config.builtin("toy").replace(**{"runtime.device": "cpu", "runtime.progress": False})


def trained_scaler(state: dict[str, torch.Tensor], n_mels: int) -> FeatureScaler:
    scaler = FeatureScaler(n_mels)
    scaler.load_state_dict(state)
    return scaler.eval()


@pytest.mark.slow
class TestToyRuns:
    @torch.no_grad()
    def test_diffusion(self):
        cfg = toy_config()
        frontend = cfg.transforms.frontend()
        items = synth_corpus(16, 2.0, SAMPLE_RATE, seed=0)
        ckpt = train_diffusion(items, cfg, seed=0)
        history = np.asarray(ckpt.loss_history)
        assert len(history) == 2000
        assert history[-100:].mean() <= 0.5 * history[:100].mean()

        unet = UNet(cfg.unet_config())
        unet.load_state_dict(ckpt.ema)
        unet.eval()
        sched = make_schedule(ckpt.schedule["kind"], ckpt.schedule["T"])
        frames = frontend.frames_for(cfg.unet.data.audio_length)
        samples = sample_loop(unet, (4, 1, frontend.n_mels, frames), sched, 50, seed=1, clip_x0=True)
        assert bool(torch.isfinite(samples).all())

        # per-bin means of corpus windows as long as one sample
        scaler = trained_scaler(ckpt.scaler, frontend.n_mels)
        windows = []
        for item in items:
            x = scaler(frontend.mel(item.samples))[0]
            windows += [x[:, i : i + frames].mean(dim=-1) for i in range(0, x.shape[-1] - frames + 1, frames)]
        corpus_means = torch.stack(windows)
        standard_error = corpus_means.std(dim=0) / math.sqrt(samples.shape[0])
        deviation = (samples.mean(dim=(0, 1, 3)) - corpus_means.mean(dim=0)).abs()
        assert bool((deviation <= 3 * standard_error).all())

    @torch.no_grad()
    def test_vocoder(self):
        cfg = toy_config()
        frontend = cfg.transforms.frontend()
        ckpt = train_vocoder(synth_corpus(16, 2.0, SAMPLE_RATE, seed=0), cfg, seed=0)
        assert len(ckpt.loss_history) == 2000

        vocoder = Vocoder(cfg.vocoder_config())
        vocoder.load_state_dict(ckpt.model)
        vocoder.eval()
        scaler = trained_scaler(ckpt.scaler, frontend.n_mels)
        held_out = torch.stack([item.samples for item in synth_corpus(4, 1.0, SAMPLE_RATE, seed=99)])
        magnitude = frontend.magnitude(held_out)
        pred = vocoder(scaler(project_mel(magnitude, frontend.filterbank)))
        assert spectral_convergence_loss(magnitude, pred).item() < 0.5
