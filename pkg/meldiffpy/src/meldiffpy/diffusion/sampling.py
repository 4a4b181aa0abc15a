import math
from typing import Optional, Sequence
import torch
from ..utils import InvalidConfigError, InvalidStepError, ContractError, ShapeError
from ..utils.errprint import progress
from .schedule import NoiseSchedule
from .process import NoisePredictor, call_model, forward_sample

REPAINT_JUMP_LENGTH: int = 10
REPAINT_JUMP_N_SAMPLE: int = 10


def _check_eta(eta: float):
    if not 0.0 <= eta <= 1.0:
        raise InvalidConfigError(f"eta must be in [0, 1], got {eta}")
    return None


def timestep_sequence(T: int, num_steps: int, start: Optional[int] = None) -> list[int]:
    """Decreasing, evenly spaced ("leading") DDIM timesteps, all >= 1.

    `num_steps == T` visits every timestep. With `start`, the sequence
    begins at `start` and continues with the regular timesteps below it.
    The terminal t_prev = 0 is implied and not part of the list.
    """
    if num_steps < 1:
        raise InvalidConfigError(f"need at least one sampling step, got {num_steps}")
    if num_steps > T:
        raise InvalidConfigError(f"cannot take {num_steps} sampling steps on a {T}-step schedule")
    ratio = T // num_steps
    steps = [i * ratio + 1 for i in reversed(range(num_steps))]
    if start is None:
        return steps
    if not 1 <= start <= T:
        raise InvalidConfigError(f"start timestep must be in [1, {T}], got {start}")
    return [start] + [s for s in steps if s < start]


def ddim_sigma(sched: NoiseSchedule, t: int, t_prev: int, eta: float) -> float:
    alpha_bar = sched.alpha_bar_at(t).item()
    alpha_bar_prev = sched.alpha_bar_at(t_prev).item()
    return eta * math.sqrt((1.0 - alpha_bar_prev) / (1.0 - alpha_bar)) * math.sqrt(
        1.0 - alpha_bar / alpha_bar_prev
    )


def ddim_step(
    x_t: torch.Tensor,
    eps_pred: torch.Tensor,
    t: int,
    t_prev: int,
    sched: NoiseSchedule,
    eta: float = 0.0,
    generator: Optional[torch.Generator] = None,
    noise: Optional[torch.Tensor] = None,
    clip_x0: bool = False,
) -> torch.Tensor:
    """One DDIM update from timestep `t` down to `t_prev` (0 allowed)."""
    if t_prev >= t:
        raise InvalidStepError(f"DDIM steps must go down in time, got t={t} -> t_prev={t_prev}")
    _check_eta(eta)
    sched.check(t)
    sched.check(t_prev, allow_zero=True)
    if eps_pred.shape != x_t.shape:
        raise ShapeError(f"noise prediction {tuple(eps_pred.shape)} does not match {tuple(x_t.shape)}")

    alpha_bar = sched.alpha_bar_at(t).item()
    alpha_bar_prev = sched.alpha_bar_at(t_prev).item()
    x0_hat = (x_t - math.sqrt(1.0 - alpha_bar) * eps_pred) / math.sqrt(alpha_bar)
    if clip_x0:
        x0_hat = torch.clamp(x0_hat, -1.0, 1.0)
    sigma = ddim_sigma(sched, t, t_prev, eta)
    direction = math.sqrt(max(1.0 - alpha_bar_prev - sigma**2, 0.0)) * eps_pred
    x_prev = math.sqrt(alpha_bar_prev) * x0_hat + direction
    if sigma > 0.0:
        if noise is None:
            noise = torch.randn(x_t.shape, generator=generator, dtype=x_t.dtype).to(x_t.device)
        x_prev = x_prev + sigma * noise
    return x_prev


def reverse_loop(
    model: NoisePredictor,
    x: torch.Tensor,
    sched: NoiseSchedule,
    timesteps: Sequence[int],
    eta: float = 0.0,
    generator: Optional[torch.Generator] = None,
    clip_x0: bool = False,
    show_progress: bool = False,
) -> torch.Tensor:
    """Run DDIM from `x` at `timesteps[0]` through `timesteps` down to 0."""
    _check_eta(eta)
    targets = list(timesteps[1:]) + [0]
    with progress(len(timesteps), "sampling", enabled=show_progress) as bar:
        for t, t_prev in zip(timesteps, targets):
            eps = call_model(model, x, t)
            x = ddim_step(x, eps, t, t_prev, sched, eta, generator, clip_x0=clip_x0)
            bar.update(1)
    return x


@torch.no_grad()
def sample_loop(
    model: NoisePredictor,
    shape: Sequence[int],
    sched: NoiseSchedule,
    num_steps: int,
    eta: float = 0.0,
    seed: int = 0,
    device: Optional[torch.device] = None,
    dtype: torch.dtype = torch.float32,
    clip_x0: bool = False,
    show_progress: bool = False,
) -> torch.Tensor:
    timesteps = timestep_sequence(sched.T, num_steps)
    generator = torch.Generator().manual_seed(seed)
    x_T = torch.randn(tuple(shape), generator=generator, dtype=dtype)
    if device is not None:
        x_T = x_T.to(device)
    return reverse_loop(model, x_T, sched, timesteps, eta, generator, clip_x0, show_progress)


def repaint_schedule(
    num_steps: int,
    jump_length: int = REPAINT_JUMP_LENGTH,
    jump_n_sample: int = REPAINT_JUMP_N_SAMPLE,
) -> list[int]:
    """Sequence of step levels visited by RePaint, from `num_steps` down to 0.

    Consecutive levels differ by one: a decrease is a denoising step, an
    increase re-noises. Every `jump_length` levels the walk goes back up
    `jump_length` levels, `jump_n_sample - 1` times.
    """
    if num_steps < 1:
        raise InvalidConfigError(f"need at least one sampling step, got {num_steps}")
    if jump_length < 1 or jump_n_sample < 1:
        raise InvalidConfigError(
            f"jump length and count must be >= 1, got {jump_length}, {jump_n_sample}"
        )
    jumps = {k: jump_n_sample - 1 for k in range(0, num_steps - jump_length, jump_length)}
    level = num_steps
    levels = [level]
    while level > 0:
        level -= 1
        levels.append(level)
        if jumps.get(level, 0) > 0:
            jumps[level] -= 1
            for _ in range(jump_length):
                level += 1
                levels.append(level)
    return levels


def _keep_mask(mask: torch.Tensor, known: torch.Tensor) -> torch.Tensor:
    if mask.dtype != torch.bool:
        if not bool(((mask == 0) | (mask == 1)).all()):
            raise ContractError("keep-mask values must be 0 or 1")
        mask = mask != 0
    try:
        shape = torch.broadcast_shapes(mask.shape, known.shape)
    except RuntimeError:
        shape = None
    if shape != known.shape:
        raise ContractError(
            f"keep-mask {tuple(mask.shape)} does not broadcast to {tuple(known.shape)}"
        )
    return mask.to(known.device).expand(known.shape)


@torch.no_grad()
def repaint_loop(
    model: NoisePredictor,
    known: torch.Tensor,
    mask: torch.Tensor,
    sched: NoiseSchedule,
    num_steps: int,
    jump_length: int = REPAINT_JUMP_LENGTH,
    jump_n_sample: int = REPAINT_JUMP_N_SAMPLE,
    seed: int = 0,
    eta: float = 0.0,
    clip_x0: bool = False,
    show_progress: bool = False,
) -> torch.Tensor:
    """Fill the region where `mask` is 0, keeping `known` where it is 1."""
    keep = _keep_mask(mask, known)
    _check_eta(eta)
    timesteps = timestep_sequence(sched.T, num_steps)
    # level k sits at timestep levels_to_t[k]; level 0 is the clean signal
    levels_to_t = [0] + list(reversed(timesteps))
    levels = repaint_schedule(num_steps, jump_length, jump_n_sample)

    generator = torch.Generator().manual_seed(seed)

    def _noise() -> torch.Tensor:
        return torch.randn(known.shape, generator=generator, dtype=known.dtype).to(known.device)

    x = _noise()
    with progress(len(levels) - 1, "repaint", enabled=show_progress) as bar:
        for here, there in zip(levels, levels[1:]):
            t, t_next = levels_to_t[here], levels_to_t[there]
            if there < here:
                eps = call_model(model, x, t)
                unknown = ddim_step(x, eps, t, t_next, sched, eta, generator, clip_x0=clip_x0)
                known_t = forward_sample(known, t_next, _noise(), sched) if t_next > 0 else known
                x = torch.where(keep, known_t, unknown)
            else:
                ratio = (sched.alpha_bar_at(t_next) / sched.alpha_bar_at(t)).item()
                x = math.sqrt(ratio) * x + math.sqrt(1.0 - ratio) * _noise()
            bar.update(1)
    return torch.where(keep, known, x)
