"""
Server-side inspection of submitted models: L2 norms, pairwise cosine similarity and validation
accuracy. Each report carries per-client evidence plus the list of flagged clients with a reason tag.

Decision thresholds come from DetectorConfig; the defaults (3 standard deviations) are ours.
Detectors see exactly what the server receives, i.e. post-noise vectors when the noise defense is on.
"""
import logging
from typing import List, Sequence, Tuple, TypedDict

import numpy as np

from src.errors import UndefinedSimilarityError
from src.model.dataset import Dataset
from src.model.mlp import evaluate
from src.model.spec import ParamVector, stack_params

logger = logging.getLogger(__name__)

Flag = Tuple[int, str]


class L2Report(TypedDict):
    norms: List[float]
    z_scores: List[float]
    flagged_clients: List[Flag]


class SimilarityReport(TypedDict):
    round_index: int
    l2_norms: List[float]
    pairwise_cosine: List[List[float]]
    mean_similarity: List[float]
    flagged_clients: List[Flag]


class AccuracyReport(TypedDict):
    accuracies: List[float]
    flagged_clients: List[Flag]


def pairwise_cosine(matrix: np.ndarray) -> np.ndarray:
    """Symmetric cosine matrix with an exact unit diagonal."""
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0):
        zero = [int(i) for i in np.flatnonzero(norms == 0)]
        raise UndefinedSimilarityError(f"zero-norm update from clients {zero}")
    unit = matrix / norms[:, None]
    cos = unit @ unit.T
    cos = np.clip((cos + cos.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(cos, 1.0)
    return cos


def _leave_one_out_flags(
    scores: np.ndarray, peer_values, threshold: float, std_floor: float, reason: str
) -> List[Flag]:
    flags: List[Flag] = []
    for i, score in enumerate(scores):
        peers = peer_values(i)
        if peers.size == 0:
            continue
        cut = peers.mean() - threshold * max(float(peers.std()), std_floor)
        if score < cut:
            flags.append((i, reason))
    return flags


def l2_report(updates: Sequence[ParamVector], threshold: float = 3.0) -> L2Report:
    """Euclidean norm per update and its z-score within the round; flag |z| > threshold."""
    matrix = stack_params(updates, minimum=2)
    norms = np.linalg.norm(matrix, axis=1)
    std = float(norms.std())
    z = (norms - norms.mean()) / std if std > 0 else np.zeros_like(norms)
    flagged = [(int(i), "l2_zscore") for i in np.flatnonzero(np.abs(z) > threshold)]
    return {
        "norms": [float(v) for v in norms],
        "z_scores": [float(v) for v in z],
        "flagged_clients": flagged,
    }


def cosine_report(
    updates: Sequence[ParamVector], round_index: int = 0, threshold: float = 3.0
) -> SimilarityReport:
    """
    Full pairwise cosine matrix. Client i is flagged when its mean similarity to the others falls
    below mean - threshold * std of the pairwise similarities among the remaining clients.
    """
    matrix = stack_params(updates, minimum=2)
    cos = pairwise_cosine(matrix)
    k = cos.shape[0]
    mean_sim = (cos.sum(axis=1) - 1.0) / (k - 1)

    def peers(i: int) -> np.ndarray:
        keep = np.delete(np.arange(k), i)
        sub = cos[np.ix_(keep, keep)]
        return sub[np.triu_indices(keep.size, 1)]

    flagged = _leave_one_out_flags(mean_sim, peers, threshold, 0.0, "low_cosine")
    return {
        "round_index": int(round_index),
        "l2_norms": [float(v) for v in np.linalg.norm(matrix, axis=1)],
        "pairwise_cosine": cos.tolist(),
        "mean_similarity": [float(v) for v in mean_sim],
        "flagged_clients": flagged,
    }


def accuracy_report(
    updates: Sequence[ParamVector],
    validation: Dataset,
    threshold: float = 3.0,
    std_floor: float = 0.02,
) -> AccuracyReport:
    """Validation accuracy per update; flag clients below mean - threshold * std of their peers."""
    stack_params(updates, minimum=1)
    acc = np.array([evaluate(u, validation) for u in updates])
    flagged = _leave_one_out_flags(
        acc, lambda i: np.delete(acc, i), threshold, std_floor, "low_accuracy"
    )
    return {"accuracies": [float(v) for v in acc], "flagged_clients": flagged}


def benign_band(cos: np.ndarray, benign: Sequence[int]) -> Tuple[float, float]:
    """[min, max] of the pairwise similarities among the given clients."""
    idx = np.asarray(benign, dtype=np.int64)
    if idx.size < 2:
        return (float("nan"), float("nan"))
    sub = cos[np.ix_(idx, idx)][np.triu_indices(idx.size, 1)]
    return float(sub.min()), float(sub.max())
