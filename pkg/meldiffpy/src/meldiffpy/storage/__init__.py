from .checkpoint import (
    FORMAT_VERSION,
    Checkpoint,
    save_checkpoint,
    load_checkpoint,
    checkpoint_roundtrip,
    dumps,
    loads,
)
from .wav import read_wav, write_wav
from .manifest import build_manifest, write_manifest, manifest_path
