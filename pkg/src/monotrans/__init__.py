"""Monocular joint depth estimation and segmentation for transparent objects.

A ViT encoder feeds two feature pyramids (depth, segmentation) that are fused
across tasks at every scale and refined by a shared-weight decoder run several
times.
"""

from .config import TrainConfig, load_config
from .data import ImageSample, SceneConfig, generate_scene, load_dataset, save_dataset
from .decoder import DecoderConfig, IterationState, Predictions
from .encoder import EncoderConfig, LayerTokens
from .losses import LossConfig, geometric_loss, semantic_loss, total_loss
from .metrics import MetricsReport, depth_metrics, iou, map50
from .model import ModelConfig, MonoTransNet, count_parameters
from .reassemble import FeaturePyramid, ReassembleConfig

__all__ = [
    "TrainConfig", "load_config", "ImageSample", "SceneConfig", "generate_scene",
    "load_dataset", "save_dataset", "DecoderConfig", "IterationState", "Predictions",
    "EncoderConfig", "LayerTokens", "LossConfig", "geometric_loss", "semantic_loss",
    "total_loss", "MetricsReport", "depth_metrics", "iou", "map50", "ModelConfig",
    "MonoTransNet", "count_parameters", "FeaturePyramid", "ReassembleConfig",
]
