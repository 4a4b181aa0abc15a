import argparse
from enum import StrEnum
from typing import Self, Callable, Optional, Any
import torch
from .utils import unreachable
from .utils.errprint import *


class SpectrogramKind(StrEnum):
    # fmt: off
    COMPLEX        = "complex"
    MAGNITUDE      = "magnitude"
    LOG_MAGNITUDE  = "log-magnitude"
    MEL            = "mel"
    NORMALIZED_MEL = "normalized-mel"
    # fmt: on

    @property
    def is_non_negative(self: Self) -> bool:
        return self in (type(self).MAGNITUDE, type(self).MEL)

    @property
    def is_mel(self: Self) -> bool:
        return self in (type(self).MEL, type(self).NORMALIZED_MEL)


class Parameterization(StrEnum):
    # fmt: off
    X0  = "x0"
    EPS = "eps"
    # fmt: on


class ScalerMode(StrEnum):
    # fmt: off
    TRAINING  = "training"
    INFERENCE = "inference"
    # fmt: on


class ScheduleKind(StrEnum):
    # fmt: off
    COSINE = "cosine"
    LINEAR = "linear"
    # fmt: on


class CheckpointKind(StrEnum):
    # fmt: off
    VOCODER   = "vocoder"
    DIFFUSION = "diffusion"
    # fmt: on


class TaskKind(StrEnum):
    # fmt: off
    GENERATE    = "generate"
    AUDIO2AUDIO = "audio2audio"
    INTERPOLATE = "interpolate"
    INPAINT     = "inpaint"
    OUTPAINT    = "outpaint"
    # fmt: on


class Precision(StrEnum):
    # fmt: off
    FULL       = "32"
    HALF_MIXED = "16-mixed"
    BF16_MIXED = "bf16-mixed"
    # fmt: on

    def autocast_dtype(self: Self, device: torch.device) -> Optional[torch.dtype]:
        match self:
            case Precision.FULL:
                return None
            case Precision.HALF_MIXED:
                # float16 autocast is a CUDA feature
                return torch.float16 if device.type == "cuda" else torch.bfloat16
            case Precision.BF16_MIXED:
                return torch.bfloat16
        return unreachable()

    @classmethod
    def coerce_from(cls: type[Self], precision: str | int) -> Self:
        text = str(precision).lower().strip()
        exc = None
        try:
            return cls(text)
        except ValueError as e:
            exc = e
        match text:
            case "32-true" | "full" | "fp32":
                return cls(cls.FULL)
            case "16" | "fp16" | "half":
                return cls(cls.HALF_MIXED)
            case "bf16" | "bfloat16":
                return cls(cls.BF16_MIXED)
        raise exc


type _PRINT_HELP_T = Callable[[], None]


class Namespace(argparse.Namespace):
    def __init__(self, **kwargs: Any):
        self.parser_help: Optional[_PRINT_HELP_T] = kwargs.pop("parser_help", None)
        super().__init__(**kwargs)
        return None

    def __call__(self) -> int:
        def _invalid_args_provided(args: argparse.Namespace) -> int:
            perror("invalid arguments provided !")
            pinfo("maybe you didn't provided a valid subcommand ?")
            if self.parser_help is not None:
                self.parser_help()
            return 2

        return getattr(self, "func", _invalid_args_provided)(self)


def common_main(args: Namespace):
    if args.log is not None:
        assert isinstance(args.log, str)
        set_logfile(args.log)
    assert isinstance(args.debug, bool)
    set_debug_mode(args.debug)
    return None


def resolve_device(name: str) -> torch.device:
    if name == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    return torch.device(name)
