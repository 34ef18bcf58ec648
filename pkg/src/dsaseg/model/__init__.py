"""The DSANet segmentation network."""
from .config import ABLATIONS, ModelConfig
from .dsanet import (
    DSANet, Decoder, Encoder, EncoderState, ModelOutput, SpatioTemporalFusion, TemporalFormer,
    fuse_skips,
)
from .layers import Module

__all__ = [
    "ABLATIONS", "DSANet", "Decoder", "Encoder", "EncoderState", "ModelConfig", "ModelOutput",
    "Module", "SpatioTemporalFusion", "TemporalFormer", "fuse_skips",
]
