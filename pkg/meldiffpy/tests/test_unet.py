import pytest
import torch
from torch import nn
from meldiffpy.nn import EMA, UNet, UNetConfig, count_parameters, ema_update
from meldiffpy.utils import ContractError, InvalidConfigError, ShapeError


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


class TestUNetConfig:
    def test_full_size_defaults(self):
        cfg = UNetConfig()
        assert cfg.resolutions == 7
        assert cfg.widths == [256] * 7
        assert cfg.time_divisor == 64

    def test_lengths_must_match(self):
        with pytest.raises(InvalidConfigError):
            UNetConfig(dim_factors=(1, 1), dilations=(1,), has_attention=(False,), has_resampling=(False,),
                       blocks_per_resolution=(1,))

    def test_base_dimension_floor(self):
        with pytest.raises(InvalidConfigError):
            UNetConfig(base_dim=200, n_mels=128)

    def test_heads_must_divide_attended_widths(self):
        with pytest.raises(InvalidConfigError):
            UNetConfig(base_dim=36, n_mels=16, num_heads=8)

    def test_lists_become_tuples(self):
        cfg = UNetConfig.from_dict(
            {
                "base_dim": 32,
                "n_mels": 16,
                "num_heads": 4,
                "dim_factors": [1, 2],
                "dilations": [1, 1],
                "has_attention": [False, True],
                "has_resampling": [True, False],
                "blocks_per_resolution": [1, 1],
            }
        )
        assert cfg.dim_factors == (1, 2)
        assert cfg.widths == [32, 64]
        assert cfg.time_divisor == 2


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------


class TestUNet:
    def test_same_shape_out(self, tiny_unet_config: UNetConfig):
        model = UNet(tiny_unet_config, zero_output=False)
        x = torch.randn(2, 2, 16, 8)
        assert model(x, torch.tensor([1, 900])).shape == x.shape

    def test_unbatched_input(self, tiny_unet_config: UNetConfig):
        model = UNet(tiny_unet_config, zero_output=False)
        assert model(torch.randn(2, 16, 8), 10).shape == (2, 16, 8)

    def test_zero_output_at_init(self, tiny_unet_config: UNetConfig):
        model = UNet(tiny_unet_config)
        assert float(model(torch.randn(1, 2, 16, 8), 5).abs().max()) == 0.0

    def test_timestep_changes_prediction(self, tiny_unet_config: UNetConfig):
        torch.manual_seed(0)
        model = UNet(tiny_unet_config, zero_output=False).eval()
        x = torch.randn(1, 2, 16, 8)
        assert not torch.allclose(model(x, 1), model(x, 700))

    def test_indivisible_frames(self, tiny_unet_config: UNetConfig):
        with pytest.raises(ShapeError):
            UNet(tiny_unet_config)(torch.randn(1, 2, 16, 7), 1)

    def test_wrong_mel_count(self, tiny_unet_config: UNetConfig):
        with pytest.raises(ShapeError):
            UNet(tiny_unet_config)(torch.randn(1, 2, 12, 8), 1)

    def test_deep_stack(self):
        cfg = UNetConfig(
            base_dim=16,
            timestep_dim=8,
            num_heads=2,
            dim_factors=(1, 1, 2, 2),
            dilations=(1, 2, 1, 1),
            has_attention=(False, False, True, True),
            has_resampling=(True, True, True, False),
            blocks_per_resolution=(2, 1, 1, 2),
            n_mels=8,
            audio_channels=1,
        )
        model = UNet(cfg, zero_output=False)
        x = torch.randn(2, 1, 8, 16)
        assert model(x, torch.tensor([3, 4])).shape == x.shape

    @pytest.mark.slow
    def test_full_size(self):
        # within 10% of 49.8M
        count = count_parameters(UNet(UNetConfig()))
        assert 44_820_000 <= count <= 54_780_000
        assert count == 52_897_536

    @pytest.mark.slow
    @torch.no_grad()
    def test_full_size_shape_ladder(self):
        torch.manual_seed(0)
        model = UNet(UNetConfig(), zero_output=False).eval()
        shapes: dict[str, tuple[int, ...]] = {}

        def record(name: str):
            def _hook(module: nn.Module, args, output: torch.Tensor):
                shapes[name] = tuple(output.shape)

            return _hook

        model.tokenizer.register_forward_hook(record("tokenizer"))
        for i, (stage, down) in enumerate(zip(model.encoder, model.downsamples)):
            stage.register_forward_hook(record(f"encoder{i}"))
            down.register_forward_hook(record(f"down{i}"))
        for i, (stage, up) in enumerate(zip(model.decoder, model.upsamples)):
            stage.register_forward_hook(record(f"decoder{i}"))
            up.register_forward_hook(record(f"up{i}"))

        x = torch.randn(1, 2, 128, 8192)
        out = model(x, 500)
        assert out.shape == x.shape
        assert shapes["tokenizer"] == (1, 256, 2, 8192)
        for level in range(7):
            frames = 8192 >> level
            assert shapes[f"encoder{level}"] == (1, 256, 2, frames)
            assert shapes[f"down{level}"] == (1, 256, 2, max(frames // 2, 128))
            # decoder runs from the coarsest resolution back up
            assert shapes[f"up{6 - level}"] == (1, 256, 2, frames)
            assert shapes[f"decoder{6 - level}"] == (1, 256, 2, frames)


# ---------------------------------------------------------------------------
# Exponential moving average
# ---------------------------------------------------------------------------


def params(value: float) -> dict[str, torch.Tensor]:
    return {"w": torch.full((3,), value), "b": torch.full((1,), value)}


class TestEma:
    def test_copies_before_start(self):
        ema = params(0.0)
        ema_update(ema, params(5.0), decay=0.9, step=3, start_step=10, every_n=1)
        assert torch.equal(ema["w"], torch.full((3,), 5.0))

    def test_blends_after_start(self):
        ema = params(1.0)
        ema_update(ema, params(3.0), decay=0.75, step=10, start_step=10, every_n=1)
        assert torch.allclose(ema["w"], torch.full((3,), 0.75 * 1.0 + 0.25 * 3.0))

    def test_skips_off_interval_steps(self):
        ema = params(1.0)
        ema_update(ema, params(3.0), decay=0.5, step=11, start_step=0, every_n=10)
        assert torch.equal(ema["w"], torch.full((3,), 1.0))
        ema_update(ema, params(3.0), decay=0.5, step=20, start_step=0, every_n=10)
        assert torch.equal(ema["w"], torch.full((3,), 2.0))

    def test_decay_one_freezes(self):
        ema = params(1.0)
        ema_update(ema, params(3.0), decay=1.0, step=5, start_step=0, every_n=1)
        assert torch.equal(ema["b"], torch.ones(1))

    def test_name_mismatch(self):
        with pytest.raises(ContractError):
            ema_update(params(0.0), {"w": torch.zeros(3)}, 0.9, 0, 0, 1)

    def test_bad_interval(self):
        with pytest.raises(InvalidConfigError):
            ema_update(params(0.0), params(1.0), 0.9, 0, 0, 0)

    def test_module_tracks_model(self):
        model = nn.Linear(4, 2)
        ema = EMA(model, decay=0.5, start_step=2, every_n=1)
        with torch.no_grad():
            model.weight.fill_(1.0)
        ema.update(model, 1)
        assert torch.equal(ema.module.weight, model.weight)
        with torch.no_grad():
            model.weight.fill_(3.0)
        ema.update(model, 2)
        assert torch.allclose(ema.module.weight, torch.full_like(model.weight, 2.0))

    def test_module_stays_in_eval(self):
        ema = EMA(nn.Sequential(nn.Linear(2, 2), nn.Dropout(0.5)))
        ema.train()
        assert not ema.module.training
        assert not any(p.requires_grad for p in ema.module.parameters())
