"""
LangGraph workflow for one federated round:
local_training → covert_embedding → server_noise → aggregation → receiver_recording → round_metrics.

run_round invokes the compiled graph once; simulate/run_simulation drive it for T rounds and decode
the receiver's observation log at the end.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

from langgraph.graph import END, StateGraph

from src.config import FedConfig
from src.covert.channel import CovertConfig, ObservationLog, capacity, decode
from src.covert.codecs import Bitstream
from src.defense.recorder import WeightTrace
from src.errors import CapacityExceededError, ConfigurationError
from src.graph.state import ClientRole, ClientState, RoundReport, RoundState
from src.model.dataset import Dataset, generate_dataset, partition_dataset
from src.model.mlp import init_params
from src.model.spec import ParamVector
from src.nodes.clients.benign import local_training_node
from src.nodes.clients.receiver import receiver_recording_node
from src.nodes.clients.sender import covert_embedding_node
from src.nodes.server.aggregation import aggregation_node
from src.nodes.server.metrics import round_metrics_node
from src.nodes.server.noise import server_noise_node
from src.rng import DATA_SALT, INIT_SALT, derive_seed

logger = logging.getLogger(__name__)


@lru_cache(maxsize=1)
def create_workflow():
    """Build and compile the round graph once; every round reuses it."""
    g = StateGraph(RoundState)

    g.add_node("local_training", local_training_node)
    g.add_node("covert_embedding", covert_embedding_node)
    g.add_node("server_noise", server_noise_node)
    g.add_node("aggregation", aggregation_node)
    g.add_node("receiver_recording", receiver_recording_node)
    g.add_node("round_metrics", round_metrics_node)

    g.set_entry_point("local_training")

    g.add_edge("local_training", "covert_embedding")
    g.add_edge("covert_embedding", "server_noise")
    g.add_edge("server_noise", "aggregation")
    g.add_edge("aggregation", "receiver_recording")
    g.add_edge("receiver_recording", "round_metrics")
    g.add_edge("round_metrics", END)

    return g.compile()


@dataclass
class SimulationResult:
    reports: List[RoundReport]
    received: Bitstream
    observation_log: Optional[ObservationLog]
    weight_trace: Optional[WeightTrace]
    final_global: ParamVector
    clients: List[ClientState]


def setup_federation(config: FedConfig) -> Tuple[ParamVector, List[ClientState], Dataset]:
    """
    Initial global model, clients with their IID shards and roles, and the server validation set.
    One synthetic pool is generated per master seed and split into holdout + num_clients shards.
    """
    spec = config.model
    classes = spec.num_classes
    holdout = config.validation_per_class * classes
    per_class = math.ceil(config.samples_per_client * config.num_clients / classes)
    per_class += config.validation_per_class

    data_seed = config.master_seed ^ DATA_SALT
    pool = generate_dataset(spec, per_class, config.cluster_spread, derive_seed(data_seed, 0, 0))
    validation, shards = partition_dataset(
        pool, config.num_clients, derive_seed(data_seed, 0, 1), holdout=holdout
    )

    senders = set(config.sender_ids())
    receiver = config.receiver_id()
    clients = []
    for cid, shard in enumerate(shards):
        role = ClientRole.BENIGN
        if cid in senders:
            role = ClientRole.SENDER
        elif cid == receiver:
            role = ClientRole.RECEIVER
        clients.append(ClientState(cid, role, shard))

    global_params = init_params(spec, config.master_seed ^ INIT_SALT)
    return global_params, clients, validation


def run_round(
    global_params: ParamVector,
    clients: List[ClientState],
    round_index: int,
    config: FedConfig,
    covert: Optional[CovertConfig] = None,
    payload: Sequence[int] = (),
    *,
    validation: Dataset,
    observation_log: Optional[ObservationLog] = None,
    weight_trace: Optional[WeightTrace] = None,
) -> Tuple[ParamVector, RoundReport]:
    """
    One round of the pipeline. The observation log and weight trace, when given, are appended in
    place. Returns (new_global, report).
    """
    if not 0 <= round_index < config.total_rounds:
        raise ConfigurationError(
            f"round_index {round_index} outside [0, {config.total_rounds})"
        )
    app = create_workflow()
    initial: RoundState = {
        "round_index": round_index,
        "fed_config": config,
        "covert": covert,
        "payload": list(payload),
        "clients": clients,
        "global_params": global_params,
        "validation": validation,
        "observation_log": observation_log,
        "weight_trace": weight_trace,
        "metadata": {},
    }
    final_state = app.invoke(initial)
    return final_state["new_global"], final_state["report"]


def _check_channel(config: FedConfig, covert: CovertConfig, message: Bitstream) -> None:
    covert.check_parameter_count(config.model.parameter_count)
    if len(message) != covert.payload_bits:
        raise ConfigurationError(
            f"message has {len(message)} bits, covert config expects {covert.payload_bits}"
        )
    if not len(message):
        return
    usable = config.total_rounds - covert.warmup_rounds
    if usable < 1:
        raise CapacityExceededError(
            f"warmup of {covert.warmup_rounds} rounds leaves no room in T={config.total_rounds}"
        )
    cap = capacity(usable, len(covert.positions), covert.cycle_rounds)
    if len(message) > cap.total_bits or covert.transmission_rounds > config.total_rounds:
        raise CapacityExceededError(
            f"{len(message)} bits over {covert.num_cycles} cycles do not fit T={config.total_rounds} "
            f"(capacity {cap.total_bits} bits)"
        )


def simulate(
    config: FedConfig,
    covert: Optional[CovertConfig] = None,
    message: Optional[Bitstream] = None,
) -> SimulationResult:
    """
    Runs all T rounds and decodes the observation log. Channel violations raise before round 0.
    The observation log exists whenever a covert config is given.
    """
    message = message if message is not None else Bitstream(())
    if covert is None and len(message):
        raise ConfigurationError("a payload needs a covert config")
    if covert is not None:
        _check_channel(config, covert, message)

    global_params, clients, validation = setup_federation(config)
    log = ObservationLog(covert.positions) if covert is not None else None
    det = config.detectors
    trace = WeightTrace(config.num_clients, det.recorder_positions) if det.recorder else None

    logger.info(
        "[workflow] %d clients (%d senders), %d rounds, %d payload bits",
        config.num_clients, config.sender_count(), config.total_rounds, len(message),
    )
    reports: List[RoundReport] = []
    for r in range(config.total_rounds):
        global_params, report = run_round(
            global_params,
            clients,
            r,
            config,
            covert,
            message.bits,
            validation=validation,
            observation_log=log,
            weight_trace=trace,
        )
        reports.append(report)
        logger.debug(
            "[workflow] round %d (%s) global accuracy %.4f",
            r, report["phase"], report["global_accuracy"],
        )

    if covert is not None and covert.payload_bits:
        received = message.reframe(decode(log, covert).bits)
    else:
        received = message.reframe(())
    return SimulationResult(reports, received, log, trace, global_params, clients)


def run_simulation(
    config: FedConfig,
    covert: Optional[CovertConfig] = None,
    message: Optional[Bitstream] = None,
) -> Tuple[List[RoundReport], Bitstream]:
    result = simulate(config, covert, message)
    return result.reports, result.received
