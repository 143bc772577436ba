"""
Round metrics node: global and per-client validation accuracy, L2 norms and the cosine matrix of
the submitted models, plus the enabled detector reports. Sets state["report"].
"""
import logging

import numpy as np

from src.defense.detectors import accuracy_report, cosine_report, l2_report, pairwise_cosine
from src.graph.state import RoundReport, RoundState
from src.model.mlp import evaluate
from src.model.spec import stack_params

logger = logging.getLogger(__name__)


def round_metrics_node(state: RoundState) -> RoundState:
    config = state["fed_config"]
    det = config.detectors
    r = state["round_index"]
    submitted = state["submitted"]
    validation = state["validation"]

    detections = {}
    if det.accuracy:
        acc = accuracy_report(submitted, validation, det.accuracy_threshold, det.accuracy_std_floor)
        detections["accuracy"] = acc
        local_acc = acc["accuracies"]
    else:
        local_acc = [evaluate(u, validation) for u in submitted]

    if len(submitted) >= 2:
        if det.l2:
            detections["l2"] = l2_report(submitted, det.l2_threshold)
        if det.cosine:
            detections["cosine"] = cosine_report(submitted, r, det.cosine_threshold)

    if "cosine" in detections:
        norms = detections["cosine"]["l2_norms"]
        cos = detections["cosine"]["pairwise_cosine"]
    else:
        matrix = stack_params(submitted)
        norms = [float(v) for v in np.linalg.norm(matrix, axis=1)]
        cos = pairwise_cosine(matrix).tolist()

    report: RoundReport = {
        "round_index": r,
        "phase": state.get("phase", "none"),
        "global_accuracy": evaluate(state["new_global"], validation),
        "local_accuracies": local_acc,
        "l2_norms": norms,
        "cosine_matrix": cos,
        "applied_noise": state.get("applied_noise", 0.0),
        "detections": detections,
    }

    senders = {c.client_id for c in state["clients"] if c.is_sender}
    for name, rep in detections.items():
        hit = sorted(senders & {cid for cid, _ in rep["flagged_clients"]})
        if hit:
            logger.warning("[metrics] round %d: %s detector flagged sender(s) %s", r, name, hit)

    state["report"] = report
    return state
