"""
Local training node: every client (sender and receiver included) starts from the current global model
and runs local SGD on its own shard. Each client draws from its own derived seed, so the updates do not
depend on the order clients are processed in.
"""
import logging

from src.graph.state import RoundState
from src.model.mlp import train_local
from src.rng import derive_seed

logger = logging.getLogger(__name__)


def local_training_node(state: RoundState) -> RoundState:
    """Sets state["local_updates"], one ParamVector per client in client order."""
    config = state["fed_config"]
    training = config.training
    r = state["round_index"]
    global_params = state["global_params"]

    updates = []
    for client in state["clients"]:
        seed = derive_seed(config.master_seed, client.client_id, r)
        updates.append(
            train_local(
                global_params,
                client.data,
                training.epochs,
                training.learning_rate,
                training.batch_size,
                seed,
            )
        )
    state["local_updates"] = updates
    logger.debug("[clients] round %d: %d local updates", r, len(updates))
    return state
