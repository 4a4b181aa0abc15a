from dataclasses import dataclass
from typing import Optional, Self, Sequence
import torch
from torch import nn
from .common import CheckpointKind, TaskKind, resolve_device
from .diffusion import (
    NoiseSchedule,
    forward_sample,
    make_schedule,
    repaint_loop,
    reverse_loop,
    timestep_sequence,
)
from .dsp import AudioBuffer, MelFrontend
from .nn import UNet, Vocoder, mel_to_audio
from .scaling import FeatureScaler
from .storage import Checkpoint
from .training.config import Config, SamplingConfig
from .training.data import conform
from .utils import ContractError, InvalidConfigError, StateError
from .utils.errprint import pdebug


@dataclass(frozen=True)
class TaskRequest:
    kind: TaskKind
    seed: int = 0
    num_steps: Optional[int] = None
    noise_timestep: int = 500
    ratio: float = 0.5
    keep_ranges: tuple[tuple[float, float], ...] = ()
    extend_frames: int = 0
    length_frames: Optional[int] = None


@dataclass(frozen=True)
class TaskOutput:
    audio: AudioBuffer
    normalized_mel: torch.Tensor  # [c, f, l], diffusion space
    mel: torch.Tensor  # [c, f, l], linear mel
    start: torch.Tensor  # latent the reverse process started from


def _scaler_from(state: dict[str, torch.Tensor], n_mels: int, device: torch.device) -> FeatureScaler:
    scaler = FeatureScaler(n_mels)
    scaler.load_state_dict(state)
    if not scaler.is_initialized:
        raise StateError("checkpoint holds an untrained feature scaler")
    return scaler.to(device).eval()


@dataclass
class Synthesizer:
    """Everything needed to turn latents into audio and audio into latents."""

    unet: nn.Module
    schedule: NoiseSchedule
    scaler: FeatureScaler
    vocoder: Vocoder
    vocoder_scaler: FeatureScaler
    frontend: MelFrontend
    channels: int
    time_divisor: int
    num_steps: int = 200
    sampling: SamplingConfig = SamplingConfig()
    griffinlim_iterations: int = 200
    griffinlim_momentum: float = 0.99
    device: torch.device = torch.device("cpu")
    show_progress: bool = False

    @classmethod
    def from_checkpoints(
        cls: type[Self],
        diffusion: Checkpoint,
        vocoder: Checkpoint,
        device: Optional[torch.device] = None,
        use_ema: bool = True,
    ) -> Self:
        if diffusion.kind != CheckpointKind.DIFFUSION or vocoder.kind != CheckpointKind.VOCODER:
            raise ContractError(
                f"expected a diffusion and a vocoder checkpoint, got {diffusion.kind} and {vocoder.kind}"
            )
        cfg = Config.from_dict(diffusion.config)
        vcfg = Config.from_dict(vocoder.config)
        if cfg.transforms != vcfg.transforms:
            raise InvalidConfigError("diffusion and vocoder checkpoints use different transforms")
        device = resolve_device(cfg.runtime.device) if device is None else device

        unet_cfg = cfg.unet_config()
        unet = UNet(unet_cfg)
        weights = diffusion.ema if use_ema and diffusion.ema is not None else diffusion.model
        unet.load_state_dict(weights)
        pdebug(f"sampling with {'EMA' if weights is diffusion.ema else 'raw'} U-Net weights")
        voc = Vocoder(vcfg.vocoder_config())
        voc.load_state_dict(vocoder.model)

        schedule_meta = diffusion.schedule or {}
        schedule = make_schedule(
            schedule_meta.get("kind", cfg.unet.diffusion.noise_schedule),
            int(schedule_meta.get("T", cfg.unet.diffusion.number_of_training_timesteps)),
        )
        n_mels = cfg.transforms.mel_frequencies
        return cls(
            unet.to(device).eval(),
            schedule,
            _scaler_from(diffusion.scaler, n_mels, device),
            voc.to(device).eval(),
            _scaler_from(vocoder.scaler, n_mels, device),
            cfg.transforms.frontend(),
            unet_cfg.audio_channels,
            unet_cfg.time_divisor,
            cfg.unet.diffusion.number_of_sampling_steps,
            cfg.sampling,
            cfg.transforms.griffinlim_iterations,
            cfg.transforms.griffinlim_momentum,
            device,
            cfg.runtime.progress,
        )

    def steps(self: Self, num_steps: Optional[int]) -> int:
        return self.num_steps if num_steps is None else num_steps

    def check_frames(self: Self, frames: int):
        if frames < 1 or frames % self.time_divisor != 0:
            raise InvalidConfigError(f"frame count {frames} is not a positive multiple of {self.time_divisor}")
        return None

    @torch.no_grad()
    def encode(self: Self, source: AudioBuffer) -> torch.Tensor:
        """Normalized mel [c, f, l] of `source`, cropped to a usable frame count."""
        audio = conform(source, self.frontend.sample_rate, self.channels)
        if audio.length == 0:
            raise ContractError("source audio is empty")
        mel = self.frontend.mel(audio.samples.to(self.device))
        frames = (mel.shape[-1] // self.time_divisor) * self.time_divisor
        if frames == 0:
            raise ContractError(
                f"source is too short: {mel.shape[-1]} frames, need at least {self.time_divisor}"
            )
        self.scaler.eval()
        return self.scaler(mel[..., :frames])

    @torch.no_grad()
    def render(self: Self, normalized: torch.Tensor, seed: int, start: torch.Tensor) -> TaskOutput:
        mel = self.scaler.inverse(normalized)
        self.vocoder_scaler.eval()
        audio = mel_to_audio(
            self.vocoder_scaler(mel),
            self.vocoder,
            self.frontend.stft,
            self.griffinlim_iterations,
            self.griffinlim_momentum,
            self.frontend.sample_rate,
            torch.Generator().manual_seed(seed),
        )
        return TaskOutput(audio, normalized, mel, start)

    def reverse(
        self: Self, x: torch.Tensor, timesteps: Sequence[int], generator: torch.Generator
    ) -> torch.Tensor:
        return reverse_loop(
            self.unet,
            x,
            self.schedule,
            timesteps,
            self.sampling.eta,
            generator,
            self.sampling.clip_denoised,
            self.show_progress,
        )

    def noise(self: Self, x0: torch.Tensor, t: int, generator: torch.Generator) -> torch.Tensor:
        eps = torch.randn(x0.shape, generator=generator, dtype=x0.dtype).to(x0.device)
        return forward_sample(x0, t, eps, self.schedule)


@torch.no_grad()
def generate(
    synth: Synthesizer, length_frames: int, seed: int = 0, num_steps: Optional[int] = None
) -> TaskOutput:
    synth.check_frames(length_frames)
    shape = (synth.channels, synth.frontend.n_mels, length_frames)
    timesteps = timestep_sequence(synth.schedule.T, synth.steps(num_steps))
    generator = torch.Generator().manual_seed(seed)
    start = torch.randn(shape, generator=generator).to(synth.device)
    return synth.render(synth.reverse(start, timesteps, generator), seed, start)


@torch.no_grad()
def audio_to_audio(
    synth: Synthesizer,
    source: AudioBuffer,
    t: int,
    seed: int = 0,
    num_steps: Optional[int] = None,
) -> TaskOutput:
    """Noise the source mel to timestep `t`, then denoise from there."""
    synth.schedule.check(t, allow_zero=True)
    x0 = synth.encode(source)
    if t == 0:
        return synth.render(x0, seed, x0)
    generator = torch.Generator().manual_seed(seed)
    x_t = synth.noise(x0, t, generator)
    timesteps = timestep_sequence(synth.schedule.T, synth.steps(num_steps), start=t)
    return synth.render(synth.reverse(x_t, timesteps, generator), seed, x_t)


def blend(x_a: torch.Tensor, x_b: torch.Tensor, ratio: float) -> torch.Tensor:
    return ratio * x_a + (1.0 - ratio) * x_b


@torch.no_grad()
def interpolate(
    synth: Synthesizer,
    a: AudioBuffer,
    b: AudioBuffer,
    ratio: float,
    t: int,
    seed: int = 0,
    num_steps: Optional[int] = None,
) -> TaskOutput:
    """Noise both sources to `t` independently, blend, then denoise."""
    if a.length != b.length or a.sample_rate != b.sample_rate:
        raise ContractError(
            f"sources must have equal durations, got {a.duration:.3f}s and {b.duration:.3f}s"
        )
    if not 0.0 <= ratio <= 1.0:
        raise ContractError(f"interpolation ratio must be in [0, 1], got {ratio}")
    synth.schedule.check(t, allow_zero=True)
    x0_a, x0_b = synth.encode(a), synth.encode(b)
    if t == 0:
        mixed = blend(x0_a, x0_b, ratio)
        return synth.render(mixed, seed, mixed)
    generator = torch.Generator().manual_seed(seed)
    x_a = synth.noise(x0_a, t, generator)
    x_b = synth.noise(x0_b, t, generator)
    mixed = blend(x_a, x_b, ratio)
    timesteps = timestep_sequence(synth.schedule.T, synth.steps(num_steps), start=t)
    return synth.render(synth.reverse(mixed, timesteps, generator), seed, mixed)


def keep_mask(
    frontend: MelFrontend, frames: int, duration: float, keep_ranges: Sequence[tuple[float, float]]
) -> torch.Tensor:
    """Boolean [frames] mask, true on every frame inside a (start_s, end_s) range."""
    if duration <= 0.0 or frames < 1:
        raise ContractError("cannot build a mask over an empty duration")
    mask = torch.zeros(frames, dtype=torch.bool)
    for start_s, end_s in keep_ranges:
        if not 0.0 <= start_s < end_s:
            raise ContractError(f"keep range {start_s}:{end_s} is empty or inverted")
        if end_s > duration + frontend.stft.hop_length / frontend.sample_rate:
            raise ContractError(f"keep range {start_s}:{end_s} exceeds the {duration:.3f}s source")
        first = frontend.seconds_to_frame(start_s)
        last = min(frontend.seconds_to_frame(end_s), frames)
        mask[first:last] = True
    return mask


def _repaint(
    synth: Synthesizer, known: torch.Tensor, mask: torch.Tensor, seed: int, num_steps: Optional[int]
) -> torch.Tensor:
    return repaint_loop(
        synth.unet,
        known,
        mask.to(known.device),
        synth.schedule,
        synth.steps(num_steps),
        synth.sampling.repaint_jump_length,
        synth.sampling.repaint_jump_n_sample,
        seed,
        synth.sampling.eta,
        synth.sampling.clip_denoised,
        synth.show_progress,
    )


@torch.no_grad()
def inpaint(
    synth: Synthesizer,
    source: AudioBuffer,
    keep_ranges: Sequence[tuple[float, float]],
    seed: int = 0,
    num_steps: Optional[int] = None,
) -> TaskOutput:
    """Regenerate every frame outside `keep_ranges` (seconds)."""
    if source.length == 0:
        raise ContractError("source audio is empty")
    x0 = synth.encode(source)
    mask = keep_mask(synth.frontend, x0.shape[-1], source.duration, keep_ranges)
    filled = _repaint(synth, x0, mask, seed, num_steps)
    return synth.render(filled, seed, x0)


@torch.no_grad()
def outpaint(
    synth: Synthesizer,
    source: AudioBuffer,
    extend_frames: int,
    seed: int = 0,
    num_steps: Optional[int] = None,
) -> TaskOutput:
    """Append `extend_frames` generated frames after the source."""
    if extend_frames < 0:
        raise ContractError(f"cannot extend by {extend_frames} frames")
    x0 = synth.encode(source)
    frames = x0.shape[-1]
    synth.check_frames(frames + extend_frames)
    known = torch.cat([x0, x0.new_zeros(*x0.shape[:-1], extend_frames)], dim=-1)
    mask = torch.zeros(frames + extend_frames, dtype=torch.bool)
    mask[:frames] = True
    extended = _repaint(synth, known, mask, seed, num_steps)
    return synth.render(extended, seed, known)


def run_task(synth: Synthesizer, request: TaskRequest, sources: Sequence[AudioBuffer]) -> TaskOutput:
    def _need(n: int):
        if len(sources) != n:
            raise ContractError(f"{request.kind} takes {n} source(s), got {len(sources)}")
        return None

    match request.kind:
        case TaskKind.GENERATE:
            _need(0)
            frames = request.length_frames
            if frames is None:
                raise ContractError("generate needs a frame count")
            return generate(synth, frames, request.seed, request.num_steps)
        case TaskKind.AUDIO2AUDIO:
            _need(1)
            return audio_to_audio(synth, sources[0], request.noise_timestep, request.seed, request.num_steps)
        case TaskKind.INTERPOLATE:
            _need(2)
            return interpolate(
                synth, sources[0], sources[1], request.ratio, request.noise_timestep, request.seed, request.num_steps
            )
        case TaskKind.INPAINT:
            _need(1)
            return inpaint(synth, sources[0], request.keep_ranges, request.seed, request.num_steps)
        case TaskKind.OUTPAINT:
            _need(1)
            return outpaint(synth, sources[0], request.extend_frames, request.seed, request.num_steps)
    raise ContractError(f"unknown task '{request.kind}'")
