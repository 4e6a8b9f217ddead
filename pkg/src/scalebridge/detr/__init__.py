"""Toy DETR-style decoder, matching, losses, training and checkpoints."""
from .decoder import Decoder, DecoderLayer, Detection, PredictionHeads, decoder_forward, predict
from .losses import DetectionLoss, LossWeights, detection_loss, match_cost
from .matching import Assignment, hungarian_match
from .model import FeatureCache, ForwardPlan, ScaleBridgeModel
from .train import (EpochMetrics, evaluate, fit, load_checkpoint, make_model_optimizer, save_checkpoint,
                    train_epoch)

__all__ = [
    "Decoder", "DecoderLayer", "Detection", "PredictionHeads", "decoder_forward", "predict",
    "DetectionLoss", "LossWeights", "detection_loss", "match_cost",
    "Assignment", "hungarian_match",
    "FeatureCache", "ForwardPlan", "ScaleBridgeModel",
    "EpochMetrics", "evaluate", "fit", "load_checkpoint", "make_model_optimizer", "save_checkpoint",
    "train_epoch",
]
