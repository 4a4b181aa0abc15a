import sys
import traceback
from pathlib import Path
from typing import Any, Callable, Optional, Sequence
import torch
from ..common import Namespace, common_main, resolve_device
from ..storage import build_manifest, write_manifest
from ..training.config import Config
from ..utils import ContractError, OutputExistsError
from ..utils.errprint import perror, pinfo, get_debug_mode

type Handler = Callable[[Namespace], int]


def load_config(args: Namespace) -> Config:
    """Config file (or defaults) with the command-line overrides applied."""
    path: Optional[str] = getattr(args, "config", None)
    if path is None:
        cfg = Config()
    elif Path(path).is_file():
        cfg = Config.load(path)
    else:
        # bare names select a shipped configuration
        cfg = Config.builtin(path)
    overrides: dict[str, Any] = {}
    device = getattr(args, "device", None)
    if device is not None:
        overrides["runtime.device"] = device
    if getattr(args, "no_progress", False):
        overrides["runtime.progress"] = False
    return cfg.replace(**overrides) if len(overrides) != 0 else cfg


def device_of(cfg: Config) -> torch.device:
    return resolve_device(cfg.runtime.device)


def check_output(path: str | Path, force: bool) -> Path:
    path = Path(path)
    if path.exists() and not force:
        raise OutputExistsError(f"'{path}' already exists, pass --force to overwrite it")
    return path


def record_run(
    args: Namespace,
    command: str,
    cfg: Config,
    outputs: Sequence[str | Path],
    seed: Optional[int],
    **extra: Any,
) -> Path:
    manifest = build_manifest(
        command,
        getattr(args, "argv", sys.argv[1:]),
        seed,
        cfg.digest(),
        outputs,
        extra,
    )
    return write_manifest(outputs[0], manifest)


def parse_keep(text: str) -> list[tuple[float, float]]:
    """'0:30,60:90' -> [(0.0, 30.0), (60.0, 90.0)], in seconds."""
    ranges = []
    for part in text.split(","):
        part = part.strip()
        if part == "":
            continue
        start, sep, end = part.partition(":")
        if sep == "":
            raise ContractError(f"keep range '{part}' is not of the form START:END")
        try:
            ranges.append((float(start), float(end)))
        except ValueError:
            raise ContractError(f"keep range '{part}' is not numeric") from None
    if len(ranges) == 0:
        raise ContractError(f"no keep range in '{text}'")
    return ranges


def handler(what: str) -> Callable[[Callable[[Namespace], None]], Handler]:
    """Turn `body(args)` into a CLI handler returning an exit code."""

    def _decorator(body: Callable[[Namespace], None]) -> Handler:
        def _main(args: Namespace) -> int:
            try:
                common_main(args)
                body(args)
            except Exception as e:
                if get_debug_mode():
                    perror(f"failed to {what}: {traceback.format_exc()}")
                else:
                    perror(f"failed to {what}: {e}")
                return 1
            pinfo(f"{what}: done")
            return 0

        _main.__qualname__ = body.__qualname__
        _main.__doc__ = body.__doc__
        return _main

    return _decorator
