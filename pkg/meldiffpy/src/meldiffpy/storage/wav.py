import os
from pathlib import Path
import numpy as np
import soundfile as sf
import torch
from ..dsp import AudioBuffer
from ..utils import InvalidInputError, OutputExistsError


def read_wav(path: str | Path) -> AudioBuffer:
    """Read a PCM16 or float32 WAV file as float32 [channels, length]."""
    try:
        data, sample_rate = sf.read(os.fspath(path), dtype="float32", always_2d=True)
    except (sf.LibsndfileError, RuntimeError) as e:
        raise InvalidInputError(f"cannot read WAV file '{path}': {e}") from e
    if data.shape[0] == 0:
        raise InvalidInputError(f"'{path}' holds no samples")
    samples = torch.from_numpy(np.ascontiguousarray(data.T))
    return AudioBuffer(samples, int(sample_rate))


def write_wav(path: str | Path, audio: AudioBuffer, force: bool = False):
    """Write 32-bit float WAV; refuses to overwrite unless `force`."""
    path = Path(path)
    if path.exists() and not force:
        raise OutputExistsError(f"'{path}' already exists, pass --force to overwrite it")
    path.parent.mkdir(parents=True, exist_ok=True)
    data = audio.samples.detach().to(torch.float32).cpu().numpy().T
    sf.write(os.fspath(path), data, audio.sample_rate, subtype="FLOAT", format="WAV")
    return None
