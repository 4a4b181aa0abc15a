import json
import platform
import datetime
from importlib import metadata
from pathlib import Path
from typing import Any, Optional, Sequence
import numpy as np
import torch
import torchaudio
from ..utils.errprint import pdebug


def package_version() -> str:
    try:
        return metadata.version("meldiffpy")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def manifest_path(output: str | Path) -> Path:
    output = Path(output)
    return output.with_name(f"{output.stem}.manifest.json")


def build_manifest(
    command: str,
    argv: Sequence[str],
    seed: Optional[int],
    config_digest: str,
    outputs: Sequence[str | Path],
    extra: Optional[dict[str, Any]] = None,
) -> dict[str, Any]:
    return {
        "command": command,
        "argv": list(argv),
        "seed": seed,
        "config_hash": config_digest,
        "outputs": [str(p) for p in outputs],
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "versions": {
            "meldiffpy": package_version(),
            "torch": torch.__version__,
            "torchaudio": torchaudio.__version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        **(extra or {}),
    }


def write_manifest(output: str | Path, manifest: dict[str, Any]) -> Path:
    """Write `manifest` as JSON next to `output` and return its path."""
    path = manifest_path(output)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    pdebug(f"run manifest written to '{path}'")
    return path
