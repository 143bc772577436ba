"""
Noise defense node: the server perturbs submitted models before aggregating them.
N_l = 0 leaves a model untouched, N_l = 1 replaces it with Gaussian noise of the same spread.
"""
import logging

from src.errors import ConfigurationError
from src.graph.state import RoundState
from src.model.spec import ParamVector
from src.rng import NOISE_SALT, SplitMix64, derive_seed

logger = logging.getLogger(__name__)


def apply_noise(params: ParamVector, noise_level: float, seed: int) -> ParamVector:
    """(1 - N_l) * w + N_l * g with g ~ N(0, s^2), s the sample standard deviation of w."""
    if not 0.0 <= noise_level <= 1.0:
        raise ConfigurationError(f"noise level must be in [0, 1], got {noise_level}")
    if noise_level == 0.0:
        return params
    w = params.values
    scale = float(w.std(ddof=1))
    g = scale * SplitMix64(seed).normal(w.shape[0])
    return params.replace((1.0 - noise_level) * w + noise_level * g)


def server_noise_node(state: RoundState) -> RoundState:
    """
    Reads state["local_updates"], perturbs the updates of the targeted clients (all clients or
    senders only) and sets state["submitted"] and state["applied_noise"].
    """
    config = state["fed_config"]
    r = state["round_index"]
    level = config.noise_level
    updates = state["local_updates"]

    if level == 0.0:
        state["submitted"] = list(updates)
        state["applied_noise"] = 0.0
        return state

    targets = {c.client_id for c in state["clients"]}
    if config.noise_targets == "senders":
        targets = {c.client_id for c in state["clients"] if c.is_sender}

    submitted = []
    for client, update in zip(state["clients"], updates):
        if client.client_id in targets:
            seed = derive_seed(config.master_seed ^ NOISE_SALT, client.client_id, r)
            update = apply_noise(update, level, seed)
        submitted.append(update)

    state["submitted"] = submitted
    state["applied_noise"] = level if targets else 0.0
    logger.debug("[noise] round %d: N_l=%s on %d clients", r, level, len(targets))
    return state
