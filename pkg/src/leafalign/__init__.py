"""Dual-encoder contrastive image-text alignment with structured soft targets."""

from .config import TrainConfig, config_hash, parse_config
from .data import Dataset, Sample, SynthSpec, generate_dataset, load_manifest, save_manifest, split_dataset
from .encoder import (
    EmbeddingBatch,
    EncoderParams,
    backward,
    embed_pairs,
    forward_image,
    forward_text,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .estimator import DualEncoderAligner
from .evaluate import (
    linear_probe,
    ranking_report,
    recall_at_k,
    silhouette,
    zero_shot_classify,
)
from .loss import loss_gradients, similarity_matrix, soft_infonce, symmetric_loss
from .optim import adamw_step, lr_at
from .targets import BatchPlan, SoftLabelMatrix, build_soft_label_matrix, sample_batches
from .train import TrainLog, train
from .vocab import (
    Caption,
    Concept,
    ConceptVocabulary,
    TokenSequence,
    build_vocabulary,
    render_caption,
    tokenize,
)

__version__ = "0.1.0"

__all__ = [
    "TrainConfig", "config_hash", "parse_config",
    "Dataset", "Sample", "SynthSpec", "generate_dataset", "load_manifest",
    "save_manifest", "split_dataset",
    "EmbeddingBatch", "EncoderParams", "backward", "embed_pairs",
    "forward_image", "forward_text", "init_params", "load_checkpoint",
    "save_checkpoint",
    "DualEncoderAligner",
    "linear_probe", "ranking_report", "recall_at_k", "silhouette",
    "zero_shot_classify",
    "loss_gradients", "similarity_matrix", "soft_infonce", "symmetric_loss",
    "adamw_step", "lr_at",
    "BatchPlan", "SoftLabelMatrix", "build_soft_label_matrix", "sample_batches",
    "TrainLog", "train",
    "Caption", "Concept", "ConceptVocabulary", "TokenSequence",
    "build_vocabulary", "render_caption", "tokenize",
]
