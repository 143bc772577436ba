"""
Aggregation node: plain FedAvg over the submitted models. This is the round barrier, so the weight
trace is appended here and nowhere else.
"""
import logging
from typing import Sequence

import numpy as np

from src.graph.state import RoundState
from src.model.spec import ParamVector, stack_params

logger = logging.getLogger(__name__)


def fed_avg(client_params: Sequence[ParamVector]) -> ParamVector:
    """
    Uniform coordinate-wise mean. Values are sorted per coordinate before summing, so the result
    does not depend on the order in which clients arrive (bitwise). Coordinates on which every client
    agrees come back unchanged.
    """
    matrix = stack_params(client_params, minimum=1)
    ordered = np.sort(matrix, axis=0)
    mean = ordered.sum(axis=0) / matrix.shape[0]
    agreed = ordered[0] == ordered[-1]
    return client_params[0].replace(np.where(agreed, ordered[0], mean))


def aggregation_node(state: RoundState) -> RoundState:
    submitted = state["submitted"]
    state["new_global"] = fed_avg(submitted)

    trace = state.get("weight_trace")
    if trace is not None:
        trace.append(state["round_index"], submitted)
    return state
