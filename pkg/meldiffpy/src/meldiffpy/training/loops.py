import contextlib
from typing import Any, Callable, Iterator, Optional, Self, Sequence
import torch
from torch import nn
from ..common import CheckpointKind, Precision, resolve_device
from ..diffusion import make_schedule, sample_timesteps, training_loss
from ..dsp import AudioBuffer, MelFrontend, project_mel
from ..nn import EMA, UNet, Vocoder, count_parameters, vocoder_loss
from ..scaling import FeatureScaler
from ..storage import Checkpoint
from ..utils import InvalidConfigError, InvalidInputError, NonFiniteLossError
from ..utils.errprint import pdebug, pinfo, progress
from .config import Config, DataConfig, TrainingConfig
from .data import conform, crop_loader
from .schedule import warmup_scheduler


@contextlib.contextmanager
def autocast(precision: Precision, device: torch.device) -> Iterator[None]:
    dtype = precision.autocast_dtype(device)
    if dtype is None:
        yield None
        return None
    with torch.autocast(device.type, dtype=dtype):
        yield None
    return None


def _seeded_init[M: nn.Module](build: Callable[[], M], seed: int) -> M:
    # parameter init must not depend on, or disturb, the global RNG
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return build()


def _check_finite(loss: torch.Tensor, step: int, **diagnostics: Any):
    if not bool(torch.isfinite(loss)):
        raise NonFiniteLossError(step, loss.item(), diagnostics)
    return None


class _Trainer:
    """Shared optimizer, warmup, mixed-precision and progress plumbing."""

    def __init__(
        self: Self,
        model: nn.Module,
        training: TrainingConfig,
        device: torch.device,
        steps: int,
        desc: str,
        show_progress: bool,
    ):
        self.model = model
        self.training = training
        self.device = device
        self.steps = steps
        self.precision = training.mixed_precision
        self.optimizer = torch.optim.Adam(
            model.parameters(),
            lr=training.learning_rate,
            betas=(training.adam_beta1, training.adam_beta2),
        )
        self.lr_scheduler = warmup_scheduler(
            self.optimizer, training.lr_warmup_iterations, training.lr_warmup_start_factor
        )
        fp16 = self.precision.autocast_dtype(device) == torch.float16
        self.grad_scaler = torch.amp.GradScaler(device.type, enabled=fp16)
        self.history: list[float] = []
        self.bar = progress(steps, desc, enabled=show_progress)
        return None

    @property
    def lr(self: Self) -> float:
        return self.optimizer.param_groups[0]["lr"]

    def step(self: Self, loss: torch.Tensor, step: int, **diagnostics: Any):
        _check_finite(loss, step, lr=self.lr, **diagnostics)
        self.optimizer.zero_grad(set_to_none=True)
        self.grad_scaler.scale(loss).backward()
        self.grad_scaler.step(self.optimizer)
        self.grad_scaler.update()
        self.lr_scheduler.step()
        value = loss.item()
        self.history.append(value)
        self.bar.update(1)
        if step % max(self.training.log_every_n_steps, 1) == 0:
            self.bar.set_postfix(loss=f"{value:.4f}", lr=f"{self.lr:.2e}")
            pdebug(f"step {step}: loss={value:.6f} lr={self.lr:.3e}")
        return None

    def close(self: Self):
        self.bar.close()
        return None


def _prepare(
    items: Sequence[AudioBuffer],
    cfg: Config,
    data: DataConfig,
    training: TrainingConfig,
    seed: Optional[int],
    steps: Optional[int],
    device: Optional[torch.device],
):
    if len(items) == 0:
        raise InvalidInputError("the training dataset is empty")
    seed = training.seed if seed is None else seed
    steps = training.training_steps if steps is None else steps
    device = resolve_device(cfg.runtime.device) if device is None else device
    frontend = cfg.transforms.frontend()
    items = [conform(item, frontend.sample_rate, data.audio_channels) for item in items]
    loader = crop_loader(items, data.audio_length, data.batch_size, steps, seed, cfg.runtime.num_workers)
    scaler = FeatureScaler(
        frontend.n_mels,
        cfg.transforms.feature_scaling_momentum,
        cfg.transforms.feature_scaling_decay,
    ).to(device)
    return seed, steps, device, frontend, loader, scaler


def _mel_and_magnitude(frontend: MelFrontend, audio: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    magnitude = frontend.magnitude(audio)
    return project_mel(magnitude, frontend.filterbank), magnitude


def train_vocoder(
    items: Sequence[AudioBuffer],
    cfg: Config,
    seed: Optional[int] = None,
    steps: Optional[int] = None,
    device: Optional[torch.device] = None,
) -> Checkpoint:
    """Fit the vocoder on (normalized mel, magnitude) pairs cropped from `items`."""
    section = cfg.vocoder
    seed, steps, device, frontend, loader, scaler = _prepare(
        items, cfg, section.data, section.training, seed, steps, device
    )
    model: Vocoder = _seeded_init(lambda: Vocoder(cfg.vocoder_config()), seed)
    model.to(device).train()
    pdebug(f"vocoder has {count_parameters(model):,} parameters")

    trainer = _Trainer(model, section.training, device, steps, "vocoder", cfg.runtime.progress)
    try:
        for step, audio in enumerate(loader):
            with torch.no_grad():
                mel, magnitude = _mel_and_magnitude(frontend, audio.to(device))
                scaler.train()
                normalized = scaler(mel)
            with autocast(trainer.precision, device):
                pred = model(normalized)
            loss = vocoder_loss(magnitude, pred.float())
            trainer.step(loss, step)
    finally:
        trainer.close()
    if len(trainer.history) != 0:
        pinfo(f"vocoder trained for {steps} steps, final loss {trainer.history[-1]:.4f}")
    return Checkpoint.capture(
        CheckpointKind.VOCODER,
        model,
        scaler,
        config=cfg.to_dict(),
        step=steps,
        loss_history=trainer.history,
    )


def train_diffusion(
    items: Sequence[AudioBuffer],
    cfg: Config,
    seed: Optional[int] = None,
    steps: Optional[int] = None,
    device: Optional[torch.device] = None,
) -> Checkpoint:
    """Fit the U-Net noise predictor with uniform timesteps and an EMA copy."""
    section = cfg.unet
    seed, steps, device, frontend, loader, scaler = _prepare(
        items, cfg, section.data, section.training, seed, steps, device
    )
    diffusion = section.diffusion
    sched = make_schedule(diffusion.noise_schedule, diffusion.number_of_training_timesteps)
    unet_cfg = cfg.unet_config()
    frames = frontend.frames_for(section.data.audio_length)
    if frames % unet_cfg.time_divisor != 0:
        raise InvalidConfigError(
            f"audio length {section.data.audio_length} gives {frames} frames, "
            f"not divisible by {unet_cfg.time_divisor}"
        )

    model: UNet = _seeded_init(lambda: UNet(unet_cfg), seed)
    model.to(device).train()
    ema = EMA(model, section.ema.decay, section.ema.start_step, section.ema.update_every_n_steps)
    pdebug(f"U-Net has {count_parameters(model):,} parameters")

    generator = torch.Generator().manual_seed(seed + 1)
    trainer = _Trainer(model, section.training, device, steps, "diffusion", cfg.runtime.progress)
    try:
        for step, audio in enumerate(loader):
            with torch.no_grad():
                mel, _ = _mel_and_magnitude(frontend, audio.to(device))
                scaler.train()
                x0 = scaler(mel)
            t = sample_timesteps(x0.shape[0], sched, generator, device)
            eps = torch.randn(x0.shape, generator=generator).to(device)
            with autocast(trainer.precision, device):
                loss = training_loss(model, x0, t, eps, sched)
            trainer.step(loss.float(), step, t_min=int(t.min()), t_max=int(t.max()))
            ema.update(model, step + 1)
    finally:
        trainer.close()
    if len(trainer.history) != 0:
        pinfo(f"diffusion model trained for {steps} steps, final loss {trainer.history[-1]:.4f}")
    return Checkpoint.capture(
        CheckpointKind.DIFFUSION,
        model,
        scaler,
        ema.module,
        config=cfg.to_dict(),
        schedule={"kind": diffusion.noise_schedule, "T": diffusion.number_of_training_timesteps},
        step=steps,
        loss_history=trainer.history,
    )
