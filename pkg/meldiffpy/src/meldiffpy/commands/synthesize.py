from typing import Any
from ..common import CheckpointKind, Namespace, TaskKind
from ..storage import load_checkpoint, read_wav, write_wav
from ..tasks import Synthesizer, TaskOutput, TaskRequest, run_task
from ..training.config import Config
from ..utils.errprint import pdebug, pinfo
from . import check_output, device_of, handler, load_config, parse_keep, record_run


def _synthesizer(args: Namespace, cfg: Config) -> Synthesizer:
    diffusion_path = args.diffusion_checkpoint or cfg.paths.diffusion_checkpoint
    vocoder_path = args.vocoder_checkpoint or cfg.paths.vocoder_checkpoint
    synth = Synthesizer.from_checkpoints(
        load_checkpoint(diffusion_path, CheckpointKind.DIFFUSION),
        load_checkpoint(vocoder_path, CheckpointKind.VOCODER),
        device_of(cfg),
        use_ema=not args.no_ema,
    )
    if args.config is not None:
        synth.sampling = cfg.sampling
        synth.show_progress = cfg.runtime.progress
    pdebug(f"loaded '{diffusion_path}' and '{vocoder_path}' on {synth.device}")
    return synth


def _run(args: Namespace, kind: TaskKind, sources: list[str], **request: Any):
    cfg = load_config(args)
    output = check_output(args.output, args.force)
    synth = _synthesizer(args, cfg)
    audio = [read_wav(path) for path in sources]
    result: TaskOutput = run_task(
        synth, TaskRequest(kind, seed=args.seed, num_steps=args.steps, **request), audio
    )
    write_wav(output, result.audio, force=args.force)
    pinfo(f"{result.audio.duration:.2f}s of audio written to '{output}'")
    record_run(
        args,
        str(kind),
        cfg,
        [output],
        args.seed,
        inputs=sources,
        frames=result.normalized_mel.shape[-1],
        **request,
    )
    return None


@handler("generate audio")
def generate_main(args: Namespace):
    frames = args.frames
    if frames is None:
        # as long as a training crop
        cfg = load_config(args)
        frames = cfg.transforms.frontend().frames_for(cfg.unet.data.audio_length)
    _run(args, TaskKind.GENERATE, [], length_frames=frames)
    return None


@handler("transform audio")
def audio2audio_main(args: Namespace):
    _run(args, TaskKind.AUDIO2AUDIO, [args.input], noise_timestep=args.timestep)
    return None


@handler("interpolate audio")
def interpolate_main(args: Namespace):
    _run(args, TaskKind.INTERPOLATE, [args.a, args.b], noise_timestep=args.timestep, ratio=args.ratio)
    return None


@handler("inpaint audio")
def inpaint_main(args: Namespace):
    _run(args, TaskKind.INPAINT, [args.input], keep_ranges=tuple(parse_keep(args.keep)))
    return None


@handler("outpaint audio")
def outpaint_main(args: Namespace):
    _run(args, TaskKind.OUTPAINT, [args.input], extend_frames=args.extend_frames)
    return None
