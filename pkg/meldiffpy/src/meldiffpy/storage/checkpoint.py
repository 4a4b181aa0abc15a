import io
import os
import json
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Self
import torch
from ..common import CheckpointKind
from ..utils import CheckpointIntegrityError, UnsupportedVersionError, OutputExistsError
from ..utils.digest import hash_bytes
from ..utils.semver import can_read
from ..utils.errprint import pdebug

FORMAT_VERSION: str = "1.0.0"
MAGIC: bytes = b"MELDIFF\x00"
_LENGTH_BYTES: int = 8

type StateDict = dict[str, torch.Tensor]


def _detached(state: Mapping[str, torch.Tensor]) -> StateDict:
    return {k: v.detach().cpu().clone() for k, v in state.items()}


@dataclass
class Checkpoint:
    kind: CheckpointKind
    model: StateDict
    scaler: StateDict
    ema: Optional[StateDict] = None
    config: dict[str, Any] = field(default_factory=dict)
    schedule: Optional[dict[str, Any]] = None
    step: int = 0
    loss_history: list[float] = field(default_factory=list)
    format_version: str = FORMAT_VERSION

    @classmethod
    def capture(
        cls: type[Self],
        kind: CheckpointKind,
        model: torch.nn.Module,
        scaler: torch.nn.Module,
        ema: Optional[torch.nn.Module] = None,
        **meta: Any,
    ) -> Self:
        return cls(
            kind,
            _detached(model.state_dict()),
            _detached(scaler.state_dict()),
            _detached(ema.state_dict()) if ema is not None else None,
            **meta,
        )

    def arrays(self: Self) -> StateDict:
        """Every tensor under a unique `group/name` key."""
        out = {f"model/{k}": v for k, v in self.model.items()}
        out.update({f"scaler/{k}": v for k, v in self.scaler.items()})
        if self.ema is not None:
            out.update({f"ema/{k}": v for k, v in self.ema.items()})
        return out

    def meta(self: Self) -> dict[str, Any]:
        return {
            "kind": str(self.kind),
            "config": self.config,
            "schedule": self.schedule,
            "step": self.step,
            "loss_history": list(self.loss_history),
        }

    @classmethod
    def from_parts(cls: type[Self], arrays: StateDict, meta: dict[str, Any], version: str) -> Self:
        groups: dict[str, StateDict] = {"model": {}, "scaler": {}, "ema": {}}
        for key, value in arrays.items():
            group, _, name = key.partition("/")
            if group not in groups or name == "":
                raise CheckpointIntegrityError(f"unexpected array '{key}' in checkpoint")
            groups[group][name] = value
        try:
            kind = CheckpointKind(meta["kind"])
            return cls(
                kind,
                groups["model"],
                groups["scaler"],
                groups["ema"] if len(groups["ema"]) != 0 else None,
                dict(meta.get("config") or {}),
                meta.get("schedule"),
                int(meta.get("step", 0)),
                [float(x) for x in meta.get("loss_history", [])],
                version,
            )
        except (KeyError, ValueError, TypeError) as e:
            raise CheckpointIntegrityError(f"malformed checkpoint metadata: {e}") from e


def _array_manifest(arrays: StateDict) -> dict[str, dict[str, Any]]:
    return {
        name: {"shape": list(t.shape), "dtype": str(t.dtype).removeprefix("torch.")}
        for name, t in sorted(arrays.items())
    }


def dumps(ckpt: Checkpoint) -> bytes:
    arrays = ckpt.arrays()
    buffer = io.BytesIO()
    torch.save({"arrays": arrays, "meta": ckpt.meta()}, buffer)
    payload = buffer.getvalue()
    header = json.dumps(
        {
            "format_version": ckpt.format_version,
            "payload_size": len(payload),
            "digest": hash_bytes(payload),
            "arrays": _array_manifest(arrays),
        },
        sort_keys=True,
    ).encode("utf-8")
    return MAGIC + len(header).to_bytes(_LENGTH_BYTES, "little") + header + payload


def loads(raw: bytes, source: str = "<bytes>") -> Checkpoint:
    if not raw.startswith(MAGIC):
        raise CheckpointIntegrityError(f"{source} is not a checkpoint (bad magic bytes)")
    offset = len(MAGIC)
    if len(raw) < offset + _LENGTH_BYTES:
        raise CheckpointIntegrityError(f"{source} is truncated (no header)")
    header_len = int.from_bytes(raw[offset : offset + _LENGTH_BYTES], "little")
    offset += _LENGTH_BYTES
    if len(raw) < offset + header_len:
        raise CheckpointIntegrityError(f"{source} is truncated (incomplete header)")
    try:
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
        version = str(header["format_version"])
        payload_size = int(header["payload_size"])
        digest = str(header["digest"])
        manifest = dict(header["arrays"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise CheckpointIntegrityError(f"{source} has a corrupt header: {e}") from e
    try:
        readable = can_read(FORMAT_VERSION, version)
    except ValueError:
        readable = False
    if not readable:
        raise UnsupportedVersionError(version, FORMAT_VERSION)

    payload = raw[offset + header_len :]
    if len(payload) != payload_size:
        raise CheckpointIntegrityError(
            f"{source} is truncated: payload has {len(payload)} of {payload_size} bytes"
        )
    if hash_bytes(payload) != digest:
        raise CheckpointIntegrityError(f"{source} failed its integrity check (digest mismatch)")
    try:
        content = torch.load(io.BytesIO(payload), map_location="cpu", weights_only=True)
        arrays, meta = content["arrays"], content["meta"]
    except Exception as e:
        raise CheckpointIntegrityError(f"{source} has an unreadable payload: {e}") from e
    if _array_manifest(arrays) != manifest:
        raise CheckpointIntegrityError(f"{source}: arrays do not match the header manifest")
    return Checkpoint.from_parts(arrays, meta, version)


def save_checkpoint(ckpt: Checkpoint, path: str | Path, force: bool = True):
    """Atomically write `ckpt`; a crash never leaves a partial file at `path`."""
    path = Path(path)
    if path.exists() and not force:
        raise OutputExistsError(f"'{path}' already exists, pass --force to overwrite it")
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = dumps(ckpt)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(raw)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    pdebug(f"wrote {len(raw)} byte checkpoint to '{path}'")
    return None


def load_checkpoint(path: str | Path, kind: Optional[CheckpointKind] = None) -> Checkpoint:
    with open(path, "rb") as f:
        raw = f.read()
    ckpt = loads(raw, f"'{path}'")
    if kind is not None and ckpt.kind != kind:
        raise CheckpointIntegrityError(f"'{path}' holds a {ckpt.kind} checkpoint, expected {kind}")
    return ckpt


def checkpoint_roundtrip(ckpt: Checkpoint, path: str | Path) -> Checkpoint:
    save_checkpoint(ckpt, path)
    return load_checkpoint(path)
