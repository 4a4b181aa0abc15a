from dataclasses import dataclass
from typing import Any, Optional, Self
import torch
from torch import nn
from ..utils import InvalidConfigError, ShapeError
from .layers import (
    Tokenizer,
    Detokenizer,
    TimestepEncoder,
    ResidualBlock,
    LinearAttention,
    Downsample,
    Upsample,
)


@dataclass(frozen=True)
class UNetConfig:
    # fmt: off
    base_dim: int                               = 256
    timestep_dim: int                           = 128
    mlp_factor: int                             = 4
    num_heads: int                              = 8
    dim_factors: tuple[int, ...]                = (1, 1, 1, 1, 1, 1, 1)
    dilations: tuple[int, ...]                  = (1, 1, 1, 1, 1, 1, 1)
    has_attention: tuple[bool, ...]             = (False, False, False, False, False, True, True)
    has_resampling: tuple[bool, ...]            = (True, True, True, True, True, True, False)
    blocks_per_resolution: tuple[int, ...]      = (2, 2, 2, 2, 2, 2, 2)
    n_mels: int                                 = 128
    audio_channels: int                         = 2
    # fmt: on

    def __post_init__(self: Self):
        for name in ("dim_factors", "dilations", "has_attention", "has_resampling", "blocks_per_resolution"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        lengths = {
            len(self.dim_factors),
            len(self.dilations),
            len(self.has_attention),
            len(self.has_resampling),
            len(self.blocks_per_resolution),
        }
        if len(lengths) != 1 or 0 in lengths:
            raise InvalidConfigError("per-resolution settings must be non-empty and of equal length")
        if self.base_dim < 2 * self.n_mels:
            raise InvalidConfigError(
                f"base dimension {self.base_dim} must be at least twice the mel count {self.n_mels}"
            )
        if min(self.dim_factors) < 1 or min(self.dilations) < 1 or min(self.blocks_per_resolution) < 1:
            raise InvalidConfigError("dimension factors, dilations and block counts must all be >= 1")
        if self.timestep_dim < 1 or self.mlp_factor < 1 or self.audio_channels < 1:
            raise InvalidConfigError("timestep dimension, mlp factor and channel count must be >= 1")
        for width, attends in zip(self.widths, self.has_attention):
            if attends and width % self.num_heads != 0:
                raise InvalidConfigError(f"width {width} is not divisible into {self.num_heads} heads")
        return None

    @property
    def resolutions(self: Self) -> int:
        return len(self.dim_factors)

    @property
    def widths(self: Self) -> list[int]:
        return [self.base_dim * f for f in self.dim_factors]

    @property
    def time_divisor(self: Self) -> int:
        """Frame counts must be a multiple of this."""
        return 2 ** sum(self.has_resampling)

    @classmethod
    def from_dict(cls: type[Self], d: dict[str, Any]) -> Self:
        return cls(**d)


def count_parameters(module: nn.Module, trainable_only: bool = True) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad or not trainable_only)


class _Stage(nn.Module):
    """Residual blocks of one resolution, each optionally followed by attention."""

    def __init__(self: Self, dims: list[tuple[int, int]], cfg: UNetConfig, level: int):
        super().__init__()
        self.blocks = nn.ModuleList(
            ResidualBlock(i, o, cfg.timestep_dim, cfg.mlp_factor, cfg.dilations[level])
            for i, o in dims
        )
        self.attention = nn.ModuleList(
            LinearAttention(o, cfg.num_heads) if cfg.has_attention[level] else nn.Identity()
            for _, o in dims
        )
        return None

    def forward(
        self: Self, h: torch.Tensor, temb: torch.Tensor, skip: Optional[torch.Tensor] = None
    ) -> torch.Tensor:
        for i, (block, attention) in enumerate(zip(self.blocks, self.attention)):
            if i == 0 and skip is not None:
                h = torch.cat([h, skip], dim=1)
            h = attention(block(h, temb))
        return h


class UNet(nn.Module):
    """Noise predictor over [B, c, f, l] normalized mel spectrograms.

    The time axis is halved after every resolution flagged for
    resampling and restored symmetrically in the decoder. The first
    decoder block of each resolution receives the matching encoder output
    concatenated along the feature axis.
    """

    def __init__(self: Self, cfg: UNetConfig, zero_output: bool = True):
        super().__init__()
        self.cfg = cfg
        widths = cfg.widths
        self.tokenizer = Tokenizer(cfg.n_mels, widths[0])
        self.timestep_encoder = TimestepEncoder(cfg.timestep_dim)

        self.encoder = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        current = widths[0]
        for level, width in enumerate(widths):
            dims = [(current, width)] + [(width, width)] * (cfg.blocks_per_resolution[level] - 1)
            self.encoder.append(_Stage(dims, cfg, level))
            current = width
            self.downsamples.append(Downsample(width) if cfg.has_resampling[level] else nn.Identity())

        self.decoder = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        for level in reversed(range(cfg.resolutions)):
            width = widths[level]
            self.upsamples.append(Upsample(current) if cfg.has_resampling[level] else nn.Identity())
            dims = [(current + width, width)] + [(width, width)] * (cfg.blocks_per_resolution[level] - 1)
            self.decoder.append(_Stage(dims, cfg, level))
            current = width

        self.detokenizer = Detokenizer(current, cfg.n_mels, zero_init=zero_output)
        return None

    def forward(self: Self, x: torch.Tensor, t: torch.Tensor | int) -> torch.Tensor:
        unbatched = x.ndim == 3
        if unbatched:
            x = x.unsqueeze(0)
        if x.ndim != 4:
            raise ShapeError(f"expected [B, c, f, l] or [c, f, l], got {tuple(x.shape)}")
        if x.shape[-1] % self.cfg.time_divisor != 0:
            raise ShapeError(
                f"frame count {x.shape[-1]} is not divisible by {self.cfg.time_divisor}"
            )
        t = torch.as_tensor(t, device=x.device)
        if t.ndim == 0:
            t = t.expand(x.shape[0])
        temb = self.timestep_encoder(t).to(x.dtype)

        h = self.tokenizer(x)
        skips = []
        for stage, down in zip(self.encoder, self.downsamples):
            h = stage(h, temb)
            skips.append(h)
            h = down(h)
        for stage, up in zip(self.decoder, self.upsamples):
            h = stage(up(h), temb, skips.pop())
        out = self.detokenizer(h)
        return out.squeeze(0) if unbatched else out
