"""
Model layer: wav2vec2 encoder, pooling, task heads and weight manifests.
"""

from .config import EncoderConfig
from .encoder import (
    FrameSequence,
    MaskMetadata,
    Wav2Vec2Encoder,
    output_length,
    mask_spans,
    insert_cls_token,
)
from .pooling import PoolingMethod, SpeakerEmbedding, embedding_dim, pool
from .heads import Variant, ClassifierHead, PairHead, ce_forward, aam_forward, aam_logits, bce_loss
from .weights import export_weights, import_weights
from .speaker_model import SpeakerModel, model_fingerprint

__all__ = [
    "EncoderConfig",
    "FrameSequence",
    "MaskMetadata",
    "Wav2Vec2Encoder",
    "output_length",
    "mask_spans",
    "insert_cls_token",
    "PoolingMethod",
    "SpeakerEmbedding",
    "embedding_dim",
    "pool",
    "Variant",
    "ClassifierHead",
    "PairHead",
    "ce_forward",
    "aam_forward",
    "aam_logits",
    "bce_loss",
    "export_weights",
    "import_weights",
    "SpeakerModel",
    "model_fingerprint",
]
