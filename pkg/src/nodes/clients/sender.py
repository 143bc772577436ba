"""
Covert embedding node: senders overwrite their trained update at the agreed positions.

warmup  -> positions zeroed (zero-back) so the global values there settle near 0
cycle s -> positions pinned to the bits of cycle s, with the factor fixed for the whole cycle
idle    -> update submitted as trained
"""
import logging

from src.covert.channel import compute_factor, embed_bits, zero_back
from src.graph.state import ClientState, RoundState
from src.model.spec import ParamVector
from src.rng import FACTOR_SALT, derive_seed

logger = logging.getLogger(__name__)


def _cycle_factor(client: ClientState, trained: ParamVector, covert, cycle: int):
    # First round of the cycle computes the factor from the fresh local model; later rounds reuse it.
    if cycle not in client.factors:
        seed = derive_seed(covert.shared_seed ^ FACTOR_SALT, client.client_id, cycle)
        client.factors[cycle] = compute_factor(trained, covert.factor_policy, seed)
        logger.debug(
            "[sender] client %d cycle %d factor %.6g",
            client.client_id, cycle, client.factors[cycle].value,
        )
    return client.factors[cycle]


def covert_embedding_node(state: RoundState) -> RoundState:
    """Rewrites state["local_updates"] for sender clients and sets state["phase"]."""
    covert = state.get("covert")
    if covert is None or not any(c.is_sender for c in state["clients"]):
        state["phase"] = "none"
        return state

    phase = covert.phase(state["round_index"])
    state["phase"] = phase.kind if phase.cycle is None else f"cycle:{phase.cycle}"
    if phase.kind == "idle":
        return state

    payload = state.get("payload", [])
    updates = list(state["local_updates"])
    for i, client in enumerate(state["clients"]):
        if not client.is_sender:
            continue
        if phase.kind == "warmup":
            updates[i] = zero_back(updates[i], covert.positions)
            continue
        factor = _cycle_factor(client, updates[i], covert, phase.cycle)
        updates[i] = embed_bits(
            updates[i],
            covert.cycle_bits(payload, phase.cycle),
            covert.positions,
            factor,
            literal=covert.literal_encoding,
        )
    state["local_updates"] = updates
    return state
