"""
Shared state for the federated round workflow. Every node reads from and writes to RoundState;
RoundReport is the per-round metrics record the harness turns into rounds.csv.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, TypedDict

from src.config import FedConfig
from src.covert.channel import CovertConfig, FactorValue, ObservationLog
from src.defense.recorder import WeightTrace
from src.model.dataset import Dataset
from src.model.spec import ParamVector


class ClientRole(str, Enum):
    BENIGN = "benign"
    SENDER = "sender"
    RECEIVER = "receiver"


@dataclass
class ClientState:
    """One simulated client. factors caches the sender's factor per cycle (sender only)."""
    client_id: int
    role: ClientRole
    data: Dataset
    factors: Dict[int, FactorValue] = field(default_factory=dict)

    @property
    def is_sender(self) -> bool:
        return self.role is ClientRole.SENDER


class RoundReport(TypedDict, total=False):
    """Per-round metrics. cosine_matrix and l2_norms cover the submitted (post-noise) vectors."""
    round_index: int
    phase: str
    global_accuracy: float
    local_accuracies: List[float]
    l2_norms: List[float]
    cosine_matrix: List[List[float]]
    applied_noise: float
    # Detector outputs keyed "l2", "cosine", "accuracy" (only the enabled ones)
    detections: Dict[str, Any]


class RoundState(TypedDict, total=False):
    """
    State passed through the LangGraph round workflow. All keys are optional (total=False);
    nodes read existing keys and add/update others as the round runs.
    """
    # Input
    round_index: int
    fed_config: FedConfig
    covert: Optional[CovertConfig]
    payload: List[int]
    clients: List[ClientState]
    global_params: ParamVector
    validation: Dataset

    # Client phase
    local_updates: List[ParamVector]
    phase: str

    # Server phase
    submitted: List[ParamVector]
    applied_noise: float
    new_global: ParamVector

    # Barrier-owned records
    observation_log: Optional[ObservationLog]
    weight_trace: Optional[WeightTrace]

    # Output
    report: RoundReport

    # Misc
    metadata: Dict[str, Any]
