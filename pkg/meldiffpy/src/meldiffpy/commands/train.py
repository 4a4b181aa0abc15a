from typing import Callable, Optional
from ..common import Namespace
from ..dsp import AudioBuffer
from ..storage import Checkpoint, save_checkpoint
from ..training import load_wav_dir, synth_corpus, train_diffusion, train_vocoder
from ..training.config import Config, DataConfig, UNetSection, VocoderSection
from ..utils import InvalidConfigError
from ..utils.errprint import pinfo, pwarning
from . import check_output, device_of, handler, load_config, record_run

type _TrainFn = Callable[..., Checkpoint]

SYNTHETIC_ITEMS: int = 16


def _dataset(args: Namespace, cfg: Config, data: DataConfig, seed: int) -> list[AudioBuffer]:
    data_dir: Optional[str] = args.data_dir if args.data_dir is not None else cfg.paths.data_dir
    if data_dir is not None:
        return load_wav_dir(data_dir, cfg.transforms.sample_rate, data.audio_channels)
    if not args.synthetic:
        raise InvalidConfigError("no training data: pass --data-dir, set paths.data_dir or use --synthetic")
    pwarning("no data directory given, training on a generated corpus")
    seconds = 2.0 * data.audio_length / cfg.transforms.sample_rate
    return synth_corpus(SYNTHETIC_ITEMS, seconds, cfg.transforms.sample_rate, seed, data.audio_channels)


def _train(
    args: Namespace,
    command: str,
    cfg: Config,
    section: VocoderSection | UNetSection,
    default_output: str,
    train: _TrainFn,
):
    output = check_output(args.output if args.output is not None else default_output, args.force)
    seed = args.seed if args.seed is not None else section.training.seed
    items = _dataset(args, cfg, section.data, seed)
    ckpt = train(items, cfg, seed, args.steps, device_of(cfg))
    save_checkpoint(ckpt, output)
    pinfo(f"checkpoint written to '{output}'")
    record_run(args, command, cfg, [output], seed, steps=ckpt.step)
    return None


@handler("train the vocoder")
def train_vocoder_main(args: Namespace):
    cfg = load_config(args)
    _train(args, "train-vocoder", cfg, cfg.vocoder, cfg.paths.vocoder_checkpoint, train_vocoder)
    return None


@handler("train the diffusion model")
def train_diffusion_main(args: Namespace):
    cfg = load_config(args)
    _train(args, "train-diffusion", cfg, cfg.unet, cfg.paths.diffusion_checkpoint, train_diffusion)
    return None
