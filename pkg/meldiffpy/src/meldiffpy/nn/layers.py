import math
from typing import Optional, Self
import torch
import torch.nn.functional as F
from torch import nn
from einops import rearrange
from ..utils import ShapeError, InvalidConfigError

ATTENTION_EPS: float = 1e-6


class Tokenizer(nn.Module):
    """[B, c, f, l] spectrogram -> [B, d, c, l] latent, one shared f -> d map."""

    def __init__(self: Self, n_mels: int, dim: int):
        super().__init__()
        self.n_mels = n_mels
        self.dim = dim
        self.proj = nn.Linear(n_mels, dim)
        return None

    def forward(self: Self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[2] != self.n_mels:
            raise ShapeError(f"tokenizer expects [B, c, {self.n_mels}, l], got {tuple(x.shape)}")
        h = self.proj(rearrange(x, "b c f l -> b c l f"))
        return rearrange(h, "b c l d -> b d c l")


class Detokenizer(nn.Module):
    """[B, d, c, l] latent -> [B, c, f, l] spectrogram."""

    def __init__(self: Self, dim: int, n_bins: int, zero_init: bool = False):
        super().__init__()
        self.dim = dim
        self.n_bins = n_bins
        self.proj = nn.Linear(dim, n_bins)
        if zero_init:
            nn.init.zeros_(self.proj.weight)
            nn.init.zeros_(self.proj.bias)
        return None

    def forward(self: Self, h: torch.Tensor) -> torch.Tensor:
        if h.ndim != 4 or h.shape[1] != self.dim:
            raise ShapeError(f"detokenizer expects [B, {self.dim}, c, l], got {tuple(h.shape)}")
        x = self.proj(rearrange(h, "b d c l -> b c l d"))
        return rearrange(x, "b c l f -> b c f l")


def timestep_embedding(t: torch.Tensor | int, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Sinusoidal embedding: the first half sin(t * w_i), the second half cos(t * w_i)."""
    t = torch.as_tensor(t)
    scalar = t.ndim == 0
    t = t.reshape(-1).to(torch.float32)
    half = dim // 2
    freqs = torch.exp(
        -math.log(max_period) * torch.arange(half, dtype=torch.float32, device=t.device) / max(half, 1)
    )
    args = t[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=-1)
    if dim % 2 == 1:
        emb = F.pad(emb, (0, 1))
    return emb[0] if scalar else emb


class TimestepEncoder(nn.Module):
    def __init__(self: Self, dim: int, hidden_factor: int = 4):
        super().__init__()
        self.dim = dim
        self.mlp = nn.Sequential(
            nn.Linear(dim, dim * hidden_factor),
            nn.GELU(),
            nn.Linear(dim * hidden_factor, dim),
        )
        return None

    def forward(self: Self, t: torch.Tensor) -> torch.Tensor:
        emb = timestep_embedding(t, self.dim)
        return self.mlp(emb.to(self.mlp[0].weight.dtype))


class ResidualBlock(nn.Module):
    """Instance norm, 3x3 conv, timestep injection, ConvNext-style MLP, residual add."""

    def __init__(
        self: Self,
        in_dim: int,
        out_dim: int,
        timestep_dim: Optional[int] = None,
        mlp_factor: int = 4,
        dilation: int = 1,
    ):
        super().__init__()
        hidden = out_dim * mlp_factor
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.timestep_dim = timestep_dim
        self.norm = nn.InstanceNorm2d(in_dim, affine=True)
        self.conv = nn.Conv2d(in_dim, in_dim, 3, padding=dilation, dilation=dilation)
        self.time_proj = nn.Conv2d(timestep_dim, in_dim, 1) if timestep_dim is not None else None
        self.mlp = nn.Sequential(
            nn.GELU(),
            nn.Conv2d(in_dim, hidden, 1),
            nn.Conv2d(hidden, hidden, 3, padding=1, groups=hidden),
            nn.GELU(),
            nn.Conv2d(hidden, out_dim, 1),
        )
        self.residual = nn.Conv2d(in_dim, out_dim, 1) if in_dim != out_dim else nn.Identity()
        return None

    def forward(self: Self, h: torch.Tensor, temb: Optional[torch.Tensor] = None) -> torch.Tensor:
        x = self.conv(self.norm(h))
        if self.time_proj is not None:
            if temb is None:
                raise ShapeError("this block is timestep-conditioned, got no embedding")
            if temb.shape[-1] != self.timestep_dim:
                raise ShapeError(
                    f"timestep embedding has {temb.shape[-1]} features, expected {self.timestep_dim}"
                )
            x = x + self.time_proj(temb.reshape(-1, self.timestep_dim, 1, 1))
        return self.mlp(x) + self.residual(h)


def linear_attention_kernel(
    q: torch.Tensor, k: torch.Tensor, v: torch.Tensor, eps: float = ATTENTION_EPS
) -> torch.Tensor:
    """phi(Q) (phi(K)^T V), row-normalized by phi(Q) sum(phi(K)); phi = elu + 1.

    Inputs are [..., n, e]; cost is linear in the token count n.
    """
    q = F.elu(q) + 1.0
    k = F.elu(k) + 1.0
    kv = torch.einsum("...ne,...nf->...ef", k, v)
    norm = torch.einsum("...ne,...e->...n", q, k.sum(dim=-2))
    return torch.einsum("...ne,...ef->...nf", q, kv) / (norm[..., None] + eps)


class LinearAttention(nn.Module):
    """Pre-normalized multi-head linear attention over all c * l positions."""

    def __init__(self: Self, dim: int, num_heads: int = 8):
        super().__init__()
        if num_heads < 1 or dim % num_heads != 0:
            raise InvalidConfigError(f"dimension {dim} is not divisible into {num_heads} heads")
        self.num_heads = num_heads
        self.norm = nn.InstanceNorm2d(dim, affine=True)
        self.qkv = nn.Conv2d(dim, dim * 3, 1, bias=False)
        self.out = nn.Conv2d(dim, dim, 1)
        return None

    def forward(self: Self, h: torch.Tensor) -> torch.Tensor:
        channels = h.shape[2]
        q, k, v = self.qkv(self.norm(h)).chunk(3, dim=1)
        q, k, v = (
            rearrange(a, "b (h e) c l -> b h (c l) e", h=self.num_heads) for a in (q, k, v)
        )
        # accumulate in at least float32 under autocast
        dtype = torch.promote_types(q.dtype, torch.float32)
        attended = linear_attention_kernel(q.to(dtype), k.to(dtype), v.to(dtype)).to(h.dtype)
        attended = rearrange(attended, "b h (c l) e -> b (h e) c l", c=channels)
        return h + self.out(attended)


class Downsample(nn.Module):
    """Halves the time axis with a 1x3 convolution of stride 1x2."""

    def __init__(self: Self, dim: int):
        super().__init__()
        self.conv = nn.Conv2d(
            dim, dim, (1, 3), stride=(1, 2), padding=(0, 1), padding_mode="replicate"
        )
        return None

    def forward(self: Self, h: torch.Tensor) -> torch.Tensor:
        if h.shape[-1] % 2 != 0:
            raise ShapeError(f"cannot halve an odd time axis of length {h.shape[-1]}")
        return self.conv(h)


class Upsample(nn.Module):
    """Doubles the time axis with a 1x4 transposed convolution."""

    def __init__(self: Self, dim: int):
        super().__init__()
        self.conv = nn.ConvTranspose2d(dim, dim, (1, 4), stride=(1, 2), padding=(0, 1))
        return None

    def forward(self: Self, h: torch.Tensor) -> torch.Tensor:
        return self.conv(h)
