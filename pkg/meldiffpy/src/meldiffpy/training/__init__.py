from .config import (
    Config,
    TransformsConfig,
    DataConfig,
    TrainingConfig,
    VocoderSection,
    UNetSection,
    SamplingConfig,
    PathsConfig,
    RuntimeConfig,
)
from .schedule import lr_schedule, warmup_factor, warmup_scheduler
from .data import synth_corpus, load_wav_dir, conform, RandomCropDataset, crop_loader
from .loops import train_vocoder, train_diffusion, autocast
