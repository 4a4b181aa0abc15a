from pathlib import Path
from typing import Optional, Self, Sequence
import numpy as np
import torch
import torchaudio.functional as AF
from torch.utils.data import Dataset, DataLoader
from ..dsp import AudioBuffer
from ..storage import read_wav
from ..utils import InvalidConfigError, InvalidInputError
from ..utils.errprint import pinfo, pwarning

# a 2-octave major pentatonic scale, as MIDI notes from A3
SCALE: tuple[int, ...] = (57, 59, 61, 64, 66, 69, 71, 73, 76, 78)
_DRAW_STRIDE: int = 1_000_003


def _adsr(n: int, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    attack = max(1, int(rng.uniform(0.005, 0.04) * sample_rate))
    decay = max(1, int(rng.uniform(0.03, 0.1) * sample_rate))
    release = max(1, int(rng.uniform(0.05, 0.2) * sample_rate))
    sustain = rng.uniform(0.4, 0.8)
    env = np.full(n, sustain, dtype=np.float64)
    a = min(attack, n)
    env[:a] = np.linspace(0.0, 1.0, a, endpoint=False)
    d_end = min(a + decay, n)
    env[a:d_end] = np.linspace(1.0, sustain, d_end - a, endpoint=False)
    r = min(release, n)
    env[n - r :] *= np.linspace(1.0, 0.0, r)
    return env


def _render_item(n_samples: int, sample_rate: int, channels: int, rng: np.random.Generator) -> np.ndarray:
    out = np.zeros((channels, n_samples), dtype=np.float64)
    time = 0
    while time < n_samples:
        length = int(rng.uniform(0.1, 0.5) * sample_rate)
        note = int(rng.choice(SCALE)) + 12 * int(rng.integers(-1, 1, endpoint=True))
        freq = 440.0 * 2.0 ** ((note - 69) / 12.0)
        n = min(length, n_samples - time)
        t = np.arange(n) / sample_rate
        partials = int(rng.integers(1, 4, endpoint=True))
        tone = sum(np.sin(2 * np.pi * freq * k * t + rng.uniform(0, 2 * np.pi)) / k for k in range(1, partials + 1))
        voice = tone * _adsr(n, sample_rate, rng) * rng.uniform(0.3, 1.0)
        pan = rng.uniform(0.2, 0.8) if channels == 2 else 1.0
        gains = (1.0 - pan, pan) if channels == 2 else (1.0,)
        for c, g in enumerate(gains):
            out[c, time : time + n] += g * voice
        # next onset, sometimes overlapping the current note
        time += max(1, int(length * rng.uniform(0.5, 1.0)))
    peak = np.abs(out).max()
    target = rng.uniform(0.2, 0.9)
    return out * (target / peak) if peak > 0 else out


def synth_corpus(
    n_items: int,
    duration_s: float,
    sample_rate: int = 44100,
    seed: int = 0,
    channels: int = 1,
) -> list[AudioBuffer]:
    """Deterministic corpus of enveloped note sequences drawn from a fixed scale.

    Every item holds round(duration_s * sample_rate) samples with a peak
    amplitude in [0.2, 0.9].
    """
    if n_items < 1:
        raise InvalidConfigError(f"corpus needs at least one item, got {n_items}")
    n_samples = int(round(duration_s * sample_rate))
    if n_samples < 1:
        raise InvalidConfigError(f"duration {duration_s}s holds no samples at {sample_rate} Hz")
    rng = np.random.default_rng(seed)
    items = []
    for _ in range(n_items):
        samples = _render_item(n_samples, sample_rate, channels, rng)
        items.append(AudioBuffer(torch.from_numpy(samples.astype(np.float32)), sample_rate))
    return items


def conform(audio: AudioBuffer, sample_rate: int, channels: int) -> AudioBuffer:
    """Resample and up/down-mix `audio` to the requested format."""
    samples = audio.samples
    if audio.sample_rate != sample_rate:
        samples = AF.resample(samples, audio.sample_rate, sample_rate)
    if samples.shape[0] != channels:
        match channels:
            case 1:
                samples = samples.mean(dim=0, keepdim=True)
            case 2:
                samples = samples[:1].expand(2, -1).clone()
            case _:
                raise InvalidConfigError(f"unsupported channel count {channels}")
    return AudioBuffer(samples.contiguous(), sample_rate)


def load_wav_dir(path: str | Path, sample_rate: int, channels: int) -> list[AudioBuffer]:
    """Every `*.wav` file below `path`, sorted by name and conformed."""
    files = sorted(Path(path).glob("**/*.wav"))
    if len(files) == 0:
        raise InvalidInputError(f"no WAV files found in '{path}'")
    items = []
    for file in files:
        audio = read_wav(file)
        if audio.sample_rate != sample_rate:
            pwarning(f"'{file}' is sampled at {audio.sample_rate} Hz, resampling to {sample_rate} Hz")
        items.append(conform(audio, sample_rate, channels))
    pinfo(f"loaded {len(items)} audio files from '{path}'")
    return items


class RandomCropDataset(Dataset[torch.Tensor]):
    """`num_draws` fixed-length random crops; draw n depends only on (seed, n)."""

    def __init__(
        self: Self,
        items: Sequence[AudioBuffer],
        length: int,
        num_draws: int,
        seed: int = 0,
    ):
        if len(items) == 0:
            raise InvalidInputError("cannot draw crops from an empty dataset")
        channels = {item.channels for item in items}
        if len(channels) != 1:
            raise InvalidInputError(f"items mix channel counts {sorted(channels)}")
        self.items = [item.samples for item in items]
        self.length = length
        self.num_draws = num_draws
        self.seed = seed
        return None

    def __len__(self: Self) -> int:
        return self.num_draws

    def __getitem__(self: Self, n: int) -> torch.Tensor:
        generator = torch.Generator().manual_seed(self.seed * _DRAW_STRIDE + n)
        index = int(torch.randint(len(self.items), (1,), generator=generator))
        samples = self.items[index]
        slack = samples.shape[-1] - self.length
        if slack < 0:
            return torch.nn.functional.pad(samples, (0, -slack))
        offset = int(torch.randint(slack + 1, (1,), generator=generator))
        return samples[:, offset : offset + self.length].clone()


def crop_loader(
    items: Sequence[AudioBuffer],
    length: int,
    batch_size: int,
    steps: int,
    seed: int = 0,
    num_workers: int = 0,
) -> DataLoader:
    """Batches in draw order; worker prefetch does not change the order."""
    dataset = RandomCropDataset(items, length, steps * batch_size, seed)
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=False,
        num_workers=num_workers,
        drop_last=True,
        persistent_workers=False,
    )
