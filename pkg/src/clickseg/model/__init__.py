"""Model package: configuration, encoder, similarity, affinity, checkpoints."""

from .affinity import (RelevancePair, affinity_loss, aggregate_attention,
                       pool_probability, relevance)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ModelConfig
from .encoder import ClickSegModel, ForwardResult, assemble_input
from .layers import AttentionRecord
from .similarity import (MappingHead, SimilarityField, click_loss,
                         click_to_patch, compute_similarity,
                         downsample_majority)

__all__ = [
    "AttentionRecord", "CheckpointError", "ClickSegModel", "ForwardResult",
    "MappingHead", "ModelConfig", "RelevancePair", "SimilarityField",
    "affinity_loss", "aggregate_attention", "assemble_input", "click_loss",
    "click_to_patch", "compute_similarity", "downsample_majority",
    "load_checkpoint", "pool_probability", "relevance", "save_checkpoint",
]
