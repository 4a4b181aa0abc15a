import argparse
import copy
import sys
import time
from sys import intern
from typing import Self, Any, Callable, Optional, Sequence
from functools import wraps
from .commands.train import train_vocoder_main, train_diffusion_main
from .commands.synthesize import (
    generate_main,
    audio2audio_main,
    interpolate_main,
    inpaint_main,
    outpaint_main,
)
from .commands.corpus import make_corpus_main
from .utils.errprint import *
from .common import *


_CONFIG_ARG = {
    "names": ["-c", "--config"],
    "type": str,
    "default": None,
    "help": "YAML configuration file, or the name of a shipped one (full, toy)",
}
_SEED_ARG = {
    "names": ["--seed"],
    "type": int,
    "default": None,
    "help": "Random seed (overrides the configuration)",
}
_OUTPUT_ARG = {
    "names": ["-o", "--output"],
    "type": str,
    "required": True,
    "help": "Output WAV file",
}
_FORCE_ARG = {
    "names": ["-f", "--force"],
    "action": "store_true",
    "help": "Overwrite existing outputs",
}
_DEVICE_ARG = {
    "names": ["--device"],
    "type": str,
    "default": None,
    "help": "Torch device, e.g. cpu or cuda (default: from the configuration)",
}
_NO_PROGRESS_ARG = {
    "names": ["--no-progress"],
    "action": "store_true",
    "help": "Disable progress bars",
}
_TRAIN_ARGS = [
    _CONFIG_ARG,
    _SEED_ARG,
    _DEVICE_ARG,
    _NO_PROGRESS_ARG,
    _FORCE_ARG,
    {
        "names": ["--steps"],
        "type": int,
        "default": None,
        "help": "Training steps (overrides the configuration)",
    },
    {
        "names": ["-d", "--data-dir"],
        "type": str,
        "default": None,
        "help": "Directory of WAV files to train on",
    },
    {
        "names": ["--synthetic"],
        "action": "store_true",
        "help": "Train on a generated corpus when no data directory is set",
    },
    {
        "names": ["-o", "--output"],
        "type": str,
        "default": None,
        "help": "Checkpoint to write (default: from the configuration)",
    },
]
_TASK_ARGS = [
    _CONFIG_ARG,
    _OUTPUT_ARG,
    _FORCE_ARG,
    _DEVICE_ARG,
    _NO_PROGRESS_ARG,
    {
        "names": ["--seed"],
        "type": int,
        "default": 0,
        "help": "Random seed",
    },
    {
        "names": ["--steps"],
        "type": int,
        "default": None,
        "help": "DDIM sampling steps (default: from the checkpoint)",
    },
    {
        "names": ["--diffusion-checkpoint"],
        "type": str,
        "default": None,
        "help": "Diffusion checkpoint (default: from the configuration)",
    },
    {
        "names": ["--vocoder-checkpoint"],
        "type": str,
        "default": None,
        "help": "Vocoder checkpoint (default: from the configuration)",
    },
    {
        "names": ["--no-ema"],
        "action": "store_true",
        "help": "Sample with the raw U-Net weights instead of the EMA ones",
    },
]
_INPUT_ARG = {
    "names": ["-i", "--input"],
    "type": str,
    "required": True,
    "help": "Source WAV file",
}
_TIMESTEP_ARG = {
    "names": ["-t", "--timestep"],
    "type": int,
    "default": 500,
    "help": "Noise timestep the reverse process starts from",
}

PARSER_DESCRIPTOR = {
    "args": [
        {
            "names": ["--log"],
            "type": str,
            "default": None,
            "help": "Log to the specified file",
        },
        {
            "names": ["--debug"],
            "action": "store_true",
            "help": "Enable printing of various debug information",
        },
    ],
    "subcommands": {
        "train-vocoder": {
            "help": "Train the mel-to-magnitude vocoder",
            "args": _TRAIN_ARGS,
            "func": train_vocoder_main,
        },
        "train-diffusion": {
            "help": "Train the U-Net diffusion model",
            "args": _TRAIN_ARGS,
            "func": train_diffusion_main,
        },
        "generate": {
            "help": "Generate audio from noise",
            "args": _TASK_ARGS
            + [
                {
                    "names": ["--frames"],
                    "type": int,
                    "default": None,
                    "help": "Mel frames to generate (default: a training crop)",
                },
            ],
            "func": generate_main,
        },
        "audio2audio": {
            "help": "Re-generate a source from an intermediate noise level",
            "args": _TASK_ARGS + [_INPUT_ARG, _TIMESTEP_ARG],
            "func": audio2audio_main,
        },
        "interpolate": {
            "help": "Blend two equally long sources in noise space",
            "args": _TASK_ARGS
            + [
                {"names": ["--a"], "type": str, "required": True, "help": "First source WAV"},
                {"names": ["--b"], "type": str, "required": True, "help": "Second source WAV"},
                {
                    "names": ["-r", "--ratio"],
                    "type": float,
                    "default": 0.5,
                    "help": "Weight of the first source",
                },
                _TIMESTEP_ARG,
            ],
            "func": interpolate_main,
        },
        "inpaint": {
            "help": "Regenerate everything outside the kept time ranges",
            "args": _TASK_ARGS
            + [
                _INPUT_ARG,
                {
                    # For ex. : --keep 0:30,60:90
                    "names": ["-k", "--keep"],
                    "type": str,
                    "required": True,
                    "help": "Comma-separated START:END ranges to keep, in seconds",
                },
            ],
            "func": inpaint_main,
        },
        "outpaint": {
            "help": "Extend a source with generated frames",
            "args": _TASK_ARGS
            + [
                _INPUT_ARG,
                {
                    "names": ["-e", "--extend-frames"],
                    "type": int,
                    "required": True,
                    "help": "Mel frames to append",
                },
            ],
            "func": outpaint_main,
        },
        "make-corpus": {
            "help": "Write a synthetic multi-tone corpus",
            "args": [
                _CONFIG_ARG,
                _FORCE_ARG,
                {
                    "names": ["-o", "--output"],
                    "type": str,
                    "required": True,
                    "help": "Output directory",
                },
                {"names": ["-n", "--items"], "type": int, "default": 16, "help": "Item count"},
                {
                    "names": ["--duration"],
                    "type": float,
                    "default": 1.5,
                    "help": "Item duration in seconds",
                },
                {
                    "names": ["--sample-rate"],
                    "type": int,
                    "default": None,
                    "help": "Sample rate (default: from the configuration)",
                },
                {
                    "names": ["--channels"],
                    "type": int,
                    "choices": [1, 2],
                    "default": 1,
                    "help": "Channel count",
                },
                _SEED_ARG,
            ],
            "func": make_corpus_main,
        },
    },
}


class CliArgs:
    def __init__(self: Self):
        self.parser = argparse.ArgumentParser(
            prog="meldiffpy",
            description="Train mel-spectrogram diffusion models and synthesize audio with them",
        )

        # building pops keys out of the descriptor
        descriptor = copy.deepcopy(PARSER_DESCRIPTOR)
        subcommands: dict[str, dict] = descriptor["subcommands"]
        args: list = descriptor["args"]

        type(self).add_subcommands(self.parser, subcommands)
        type(self).add_args(self.parser, args)

        return None

    @classmethod
    def add_subcommands(
        cls: type[Self], instance: argparse.ArgumentParser, subcommands: dict[str, dict]
    ):
        sub = instance.add_subparsers()

        for subcmd, dic in subcommands.items():
            subsubcmds = dic.pop("subcommands", None)
            subargs = dic.pop("args", None)
            if subsubcmds is None:
                func = dic.pop("func")
            else:
                func = None

            parser = sub.add_parser(subcmd, **dic)

            if isinstance(subsubcmds, dict):
                cls.add_subcommands(parser, subsubcmds)
            else:
                assert func is not None
                parser.set_defaults(func=func)

            if isinstance(subargs, list):
                cls.add_args(parser, subargs)

        return None

    @classmethod
    def add_args(
        cls: type[Self], instance: argparse.ArgumentParser, args: list[dict[str, Any]]
    ):
        for arg in args:
            arg = dict(arg)
            names: list[str] = arg.pop("names")
            instance.add_argument(*names, **arg)
        return None

    def parse_args(self: Self, argv: Optional[Sequence[str]] = None) -> Namespace:
        return self.parser.parse_args(
            argv,
            namespace=Namespace(parser_help=lambda: self.parser.print_help()),
        )


def timeit[**P, R](func: Callable[P, R]) -> Callable[P, R]:
    funcname = intern(func.__qualname__)

    @wraps(func)
    def _decorated(*args: P.args, **kwargs: P.kwargs) -> R:
        currtime = time.time()
        try:
            return func(*args, **kwargs)
        finally:
            pdebug(
                f"function `{funcname}` ran for a total of {time.time() - currtime:.3f} seconds"
            )

    return _decorated


@timeit
def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """Parse `argv` and run the selected command; returns the exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = CliArgs().parse_args(argv)
    except SystemExit as e:
        # argparse exits 0 after --help and 2 on usage errors
        return e.code if isinstance(e.code, int) else 2
    args.argv = argv
    try:
        return args()
    finally:
        close_logfile()


def main() -> int:
    return run_cli()
