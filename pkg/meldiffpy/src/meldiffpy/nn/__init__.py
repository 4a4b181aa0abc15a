from .layers import (
    Tokenizer,
    Detokenizer,
    TimestepEncoder,
    ResidualBlock,
    LinearAttention,
    Downsample,
    Upsample,
    timestep_embedding,
    linear_attention_kernel,
)
from .unet import UNet, UNetConfig, count_parameters
from .ema import EMA, ema_update
from .vocoder import Vocoder, VocoderConfig, vocoder_loss, mel_to_audio
