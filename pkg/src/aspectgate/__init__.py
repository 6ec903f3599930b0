"""Aspect-based sentiment classification with gated inter-aspect fusion.

A bidirectional GRU encodes each sentence once per aspect, sigmoid gates
normalized across aspects fold the neighbors' representations into the
target's, and a focal objective counters the corpora's class imbalance.
Everything trains through a small reverse-mode engine whose gradients are
verified against finite differences.
"""

from .autodiff import Tensor, apply_primitive, backward, grad_check
from .corpus import (AspectGroup, AspectSpan, EmbeddingTable, SentenceRecord,
                     build_embeddings, build_random_table, dataset_stats,
                     make_aspect_groups, parse_semeval_xml, tokenize_and_align)
from .estimator import AspectPolarityClassifier
from .evaluation import EvalReport, evaluate, render_report
from .losses import focal_loss, neighbor_loss, total_objective
from .training import (Adam, TrainConfig, TrainResult, load_checkpoint, load_model,
                       save_checkpoint, train)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AspectGroup",
    "AspectPolarityClassifier",
    "AspectSpan",
    "EmbeddingTable",
    "EvalReport",
    "SentenceRecord",
    "Tensor",
    "TrainConfig",
    "TrainResult",
    "apply_primitive",
    "backward",
    "build_embeddings",
    "build_random_table",
    "dataset_stats",
    "evaluate",
    "focal_loss",
    "grad_check",
    "load_checkpoint",
    "load_model",
    "make_aspect_groups",
    "neighbor_loss",
    "parse_semeval_xml",
    "render_report",
    "save_checkpoint",
    "tokenize_and_align",
    "total_objective",
    "train",
]
