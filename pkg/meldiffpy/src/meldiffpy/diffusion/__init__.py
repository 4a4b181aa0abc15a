from .schedule import (
    NoiseSchedule,
    Timestep,
    cosine_schedule,
    linear_schedule,
    make_schedule,
)
from .process import (
    NoisePredictor,
    forward_sample,
    predict_x0,
    posterior_mean_variance,
    training_loss,
    sample_timesteps,
    call_model,
)
from .sampling import (
    timestep_sequence,
    ddim_sigma,
    ddim_step,
    reverse_loop,
    sample_loop,
    repaint_schedule,
    repaint_loop,
)
