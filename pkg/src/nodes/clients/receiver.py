"""
Receiver recording node: after aggregation the receiver reads the new global model at the agreed
positions and appends them to the observation log. Any client sees the global model, so the log is kept
even when no client holds the receiver role.
"""
from src.graph.state import RoundState


def receiver_recording_node(state: RoundState) -> RoundState:
    log = state.get("observation_log")
    if log is not None:
        log.record(state["round_index"], state["new_global"])
    return state
