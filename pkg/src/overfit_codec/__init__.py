"""Low-complexity overfitted neural image codec.

Every image gets its own tiny decoder: a latent pyramid, an autoregressive
probability model, a learned upsampler and a small synthesis network, all
trained on that image and sent in the bitstream.
"""

from .complexity import ComplexityReport, count_macs
from .config import CONFIGS, CodecConfig, get_config
from .decoder import DecodedImage, decode_bitstream
from .encoder import EncodeResult, TrainConfig, Trainer, TrainingDiverged, encode_image, rd_loss, train
from .imageio import read_image, write_image
from .metrics import RdCurve, RdPoint, bd_rate, psnr

__version__ = "0.1.0"

__all__ = [
    "CONFIGS",
    "CodecConfig",
    "ComplexityReport",
    "DecodedImage",
    "EncodeResult",
    "RdCurve",
    "RdPoint",
    "TrainConfig",
    "Trainer",
    "TrainingDiverged",
    "bd_rate",
    "count_macs",
    "decode_bitstream",
    "encode_image",
    "get_config",
    "psnr",
    "rd_loss",
    "read_image",
    "train",
    "write_image",
]
