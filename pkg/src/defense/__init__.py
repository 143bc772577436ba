# Server-side defenses: per-round detectors and the longitudinal weight recorder.
from src.defense.detectors import (
    AccuracyReport,
    L2Report,
    SimilarityReport,
    accuracy_report,
    benign_band,
    cosine_report,
    l2_report,
    pairwise_cosine,
)
from src.defense.recorder import WeightTrace, recorder_report, recorder_scores

__all__ = [
    "AccuracyReport",
    "L2Report",
    "SimilarityReport",
    "WeightTrace",
    "accuracy_report",
    "benign_band",
    "cosine_report",
    "l2_report",
    "pairwise_cosine",
    "recorder_report",
    "recorder_scores",
]
