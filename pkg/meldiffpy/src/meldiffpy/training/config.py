import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Self, get_args, get_origin, get_type_hints
import yaml
from ..common import Precision, ScheduleKind
from ..dsp import MelFrontend, StftConfig
from ..nn import UNetConfig, VocoderConfig
from ..utils import InvalidConfigError
from ..utils.digest import hash_config


@dataclass(frozen=True)
class TransformsConfig:
    # fmt: off
    sample_rate: int                        = 44100
    fft_size: int                           = 2048
    window_length: int                      = 2048
    hop_length: int                         = 1024
    mel_frequencies: int                    = 128
    feature_scaling_momentum: float         = 0.001
    feature_scaling_decay: float            = 0.99
    griffinlim_iterations: int              = 200
    griffinlim_momentum: float              = 0.99
    # fmt: on

    def stft(self: Self) -> StftConfig:
        return StftConfig(self.fft_size, self.window_length, self.hop_length)

    def frontend(self: Self) -> MelFrontend:
        return MelFrontend.create(
            self.sample_rate, self.fft_size, self.window_length, self.hop_length, self.mel_frequencies
        )


@dataclass(frozen=True)
class DataConfig:
    # fmt: off
    audio_length: int    = 523264
    audio_channels: int  = 2
    batch_size: int      = 8
    # fmt: on

    def __post_init__(self: Self):
        if self.batch_size < 1:
            raise InvalidConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.audio_length < 1 or self.audio_channels not in (1, 2):
            raise InvalidConfigError(
                f"need a positive audio length and 1 or 2 channels, got {self.audio_length}, {self.audio_channels}"
            )
        return None


@dataclass(frozen=True)
class TrainingConfig:
    # fmt: off
    learning_rate: float            = 0.0002
    optimizer: str                  = "adam"
    adam_betas: tuple[float, ...]   = (0.5, 0.999)
    lr_warmup_iterations: int       = 500
    lr_warmup_start_factor: float   = 1 / 3
    precision: str                  = "32"
    training_steps: int             = 40000
    seed: int                       = 0
    log_every_n_steps: int          = 100
    # fmt: on

    def __post_init__(self: Self):
        if self.optimizer.lower() != "adam":
            raise InvalidConfigError(f"only the adam optimizer is supported, got '{self.optimizer}'")
        if len(self.adam_betas) != 2 or not all(0.0 <= b < 1.0 for b in self.adam_betas):
            raise InvalidConfigError(f"adam betas must be two values in [0, 1), got {self.adam_betas}")
        if not 0.0 < self.lr_warmup_start_factor <= 1.0:
            raise InvalidConfigError(
                f"warmup start factor must be in (0, 1], got {self.lr_warmup_start_factor}"
            )
        if self.learning_rate <= 0 or self.lr_warmup_iterations < 0 or self.training_steps < 0:
            raise InvalidConfigError("learning rate must be positive, warmup and step counts non-negative")
        try:
            Precision.coerce_from(self.precision)
        except ValueError:
            raise InvalidConfigError(f"unknown precision '{self.precision}'") from None
        return None

    @property
    def adam_beta1(self: Self) -> float:
        return self.adam_betas[0]

    @property
    def adam_beta2(self: Self) -> float:
        return self.adam_betas[1]

    @property
    def mixed_precision(self: Self) -> Precision:
        return Precision.coerce_from(self.precision)


@dataclass(frozen=True)
class VocoderModelConfig:
    # fmt: off
    model_dimension: int              = 256
    mlp_hidden_dimension_factor: int  = 4
    # fmt: on


@dataclass(frozen=True)
class VocoderSection:
    model: VocoderModelConfig = field(default_factory=VocoderModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)


@dataclass(frozen=True)
class UNetModelConfig:
    # fmt: off
    base_model_dimension: int               = 256
    timestep_dimension: int                 = 128
    mlp_hidden_dimension_factor: int        = 4
    number_of_attention_heads: int          = 8
    dimensionality_factor: tuple[int, ...]  = (1, 1, 1, 1, 1, 1, 1)
    dilations: tuple[int, ...]              = (1, 1, 1, 1, 1, 1, 1)
    has_attention: tuple[bool, ...]         = (False, False, False, False, False, True, True)
    has_resampling: tuple[bool, ...]        = (True, True, True, True, True, True, False)
    blocks_per_resolution: tuple[int, ...]  = (2, 2, 2, 2, 2, 2, 2)
    # fmt: on


@dataclass(frozen=True)
class DiffusionConfig:
    # fmt: off
    noise_schedule: str                 = "cosine"
    number_of_training_timesteps: int   = 1000
    number_of_sampling_steps: int       = 200
    # fmt: on

    def __post_init__(self: Self):
        try:
            ScheduleKind(self.noise_schedule)
        except ValueError:
            raise InvalidConfigError(f"unknown noise schedule '{self.noise_schedule}'") from None
        if not 1 <= self.number_of_sampling_steps <= self.number_of_training_timesteps:
            raise InvalidConfigError(
                f"sampling steps must be in [1, {self.number_of_training_timesteps}], "
                f"got {self.number_of_sampling_steps}"
            )
        return None


@dataclass(frozen=True)
class EMAConfig:
    # fmt: off
    start_step: int            = 2000
    decay: float               = 0.995
    update_every_n_steps: int  = 10
    # fmt: on


@dataclass(frozen=True)
class UNetSection:
    model: UNetModelConfig = field(default_factory=UNetModelConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    ema: EMAConfig = field(default_factory=EMAConfig)
    data: DataConfig = field(default_factory=lambda: DataConfig(8387584, 2, 4))
    training: TrainingConfig = field(default_factory=lambda: TrainingConfig(training_steps=110000))


@dataclass(frozen=True)
class SamplingConfig:
    # fmt: off
    eta: float                   = 0.0
    clip_denoised: bool          = True
    repaint_jump_length: int     = 10
    repaint_jump_n_sample: int   = 10
    # fmt: on

    def __post_init__(self: Self):
        if not 0.0 <= self.eta <= 1.0:
            raise InvalidConfigError(f"eta must be in [0, 1], got {self.eta}")
        return None


@dataclass(frozen=True)
class PathsConfig:
    # fmt: off
    data_dir: Optional[str]              = None
    vocoder_checkpoint: str              = "checkpoints/vocoder.ckpt"
    diffusion_checkpoint: str            = "checkpoints/diffusion.ckpt"
    output_dir: str                      = "outputs"
    # fmt: on


@dataclass(frozen=True)
class RuntimeConfig:
    # fmt: off
    device: str        = "auto"
    progress: bool     = True
    num_workers: int   = 0
    # fmt: on


@dataclass(frozen=True)
class Config:
    transforms: TransformsConfig = field(default_factory=TransformsConfig)
    vocoder: VocoderSection = field(default_factory=VocoderSection)
    unet: UNetSection = field(default_factory=UNetSection)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)

    def unet_config(self: Self) -> UNetConfig:
        m = self.unet.model
        return UNetConfig(
            base_dim=m.base_model_dimension,
            timestep_dim=m.timestep_dimension,
            mlp_factor=m.mlp_hidden_dimension_factor,
            num_heads=m.number_of_attention_heads,
            dim_factors=m.dimensionality_factor,
            dilations=m.dilations,
            has_attention=m.has_attention,
            has_resampling=m.has_resampling,
            blocks_per_resolution=m.blocks_per_resolution,
            n_mels=self.transforms.mel_frequencies,
            audio_channels=self.unet.data.audio_channels,
        )

    def vocoder_config(self: Self) -> VocoderConfig:
        m = self.vocoder.model
        return VocoderConfig(
            model_dim=m.model_dimension,
            mlp_factor=m.mlp_hidden_dimension_factor,
            n_mels=self.transforms.mel_frequencies,
            fft_size=self.transforms.fft_size,
        )

    def to_dict(self: Self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def digest(self: Self) -> str:
        return hash_config(self.to_dict())

    def replace(self: Self, **changes: Any) -> Self:
        """Copy with dotted-path overrides, e.g. `replace(**{"unet.training.seed": 7})`."""
        tree = self.to_dict()
        for dotted, value in changes.items():
            node = tree
            *parents, leaf = dotted.split(".")
            for key in parents:
                if not isinstance(node.get(key), dict):
                    raise InvalidConfigError(f"unknown configuration section '{dotted}'")
                node = node[key]
            if leaf not in node:
                raise InvalidConfigError(f"unknown configuration key '{dotted}'")
            node[leaf] = value
        return type(self).from_dict(tree)

    @classmethod
    def from_dict(cls: type[Self], data: Optional[dict[str, Any]]) -> Self:
        return _build(cls, data or {}, "")

    @classmethod
    def load(cls: type[Self], path: str | Path) -> Self:
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise InvalidConfigError(f"'{path}' is not valid YAML: {e}") from e
        if data is not None and not isinstance(data, dict):
            raise InvalidConfigError(f"'{path}' must contain a mapping at the top level")
        return cls.from_dict(data)

    @classmethod
    def builtin(cls: type[Self], name: str) -> Self:
        """One of the configurations shipped with the package (`full`, `toy`)."""
        res = resources.files("meldiffpy.configs").joinpath(f"{name}.yaml")
        if not res.is_file():
            raise InvalidConfigError(f"no built-in configuration named '{name}'")
        with resources.as_file(res) as path:
            return cls.load(path)


def _coerce(value: Any, hint: Any, where: str) -> Any:
    origin = get_origin(hint)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise InvalidConfigError(f"'{where}' must be a list, got {value!r}")
        inner = get_args(hint)[0]
        return tuple(_coerce(v, inner, f"{where}[{i}]") for i, v in enumerate(value))
    if hint == Optional[str]:
        return None if value is None else _coerce(value, str, where)
    if hint is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.strip().lower() in ("t", "true", "f", "false"):
            return value.strip().lower() in ("t", "true")
        raise InvalidConfigError(f"'{where}' must be a boolean, got {value!r}")
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise InvalidConfigError(f"'{where}' must be an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool):
            raise InvalidConfigError(f"'{where}' must be a number, got {value!r}")
        if isinstance(value, (int, float)):
            return float(value)
        try:
            # lets tables write fractions such as 1/3
            return float(Fraction(str(value).strip()))
        except (ValueError, ZeroDivisionError):
            raise InvalidConfigError(f"'{where}' must be a number, got {value!r}") from None
    if hint is str:
        if isinstance(value, (dict, list)):
            raise InvalidConfigError(f"'{where}' must be a scalar, got {value!r}")
        return str(value)
    return value


def _build[T](cls: type[T], data: dict[str, Any], prefix: str) -> T:
    if not isinstance(data, dict):
        raise InvalidConfigError(f"section '{prefix or '<root>'}' must be a mapping, got {data!r}")
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}  # type: ignore[arg-type]
    unknown = sorted(set(data) - names)
    if len(unknown) != 0:
        where = ", ".join(f"{prefix}{k}" for k in unknown)
        raise InvalidConfigError(f"unknown configuration keys: {where}")

    kwargs: dict[str, Any] = {}
    defaults = cls()
    for name in names:
        if name not in data:
            continue
        hint = hints[name]
        if dataclasses.is_dataclass(hint):
            # nested sections start from this section's own defaults
            section = data[name] if data[name] is not None else {}
            if not isinstance(section, dict):
                raise InvalidConfigError(f"section '{prefix}{name}' must be a mapping, got {section!r}")
            base = dataclasses.asdict(getattr(defaults, name))
            base.update(section)
            kwargs[name] = _build(hint, base, f"{prefix}{name}.")  # type: ignore[arg-type]
        else:
            kwargs[name] = _coerce(data[name], hint, f"{prefix}{name}")
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise InvalidConfigError(f"invalid section '{prefix or '<root>'}': {e}") from e
