"""
Application configuration: federation, training and detector settings, project paths and logging.
Loads environment variables from .env (COVERT_FL_RUNS_DIR, COVERT_FL_LOG_LEVEL, COVERT_FL_WORKERS).
"""
import logging
import math
import os
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Tuple

from dotenv import load_dotenv

from src.errors import ConfigurationError
from src.model.spec import ModelSpec

load_dotenv()

# Which submitted models the server perturbs with Gaussian noise.
NoiseTargets = Literal["all", "senders"]

# Significant digits for every float written to CSV/JSON or printed.
FLOAT_DIGITS = 9
# Server validation set size, per class
DEFAULT_VALIDATION_PER_CLASS = 50


@dataclass
class TrainingConfig:
    """Local SGD settings shared by every client (not stated for the attack; harness defaults)."""
    epochs: int = 1
    learning_rate: float = 0.1
    batch_size: int = 32

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.learning_rate < 0 or self.batch_size < 1:
            raise ConfigurationError(f"invalid training config: {self}")


@dataclass
class DetectorConfig:
    """Which server-side detectors run each round and their decision thresholds (in std units)."""
    l2: bool = True
    cosine: bool = True
    accuracy: bool = True
    recorder: bool = False
    l2_threshold: float = 3.0
    cosine_threshold: float = 3.0
    accuracy_threshold: float = 3.0
    # Accuracies are discrete; without a floor a zero-spread round flags any one-sample difference.
    accuracy_std_floor: float = 0.02
    cycle_hypotheses: Tuple[int, ...] = (20, 40)
    # None records every position
    recorder_positions: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        self.cycle_hypotheses = tuple(int(n) for n in self.cycle_hypotheses)
        if not self.cycle_hypotheses or min(self.cycle_hypotheses) < 1:
            raise ConfigurationError("cycle_hypotheses must be positive round counts")


@dataclass
class FedConfig:
    """One federation: clients, rounds, attackers, noise defense and data generation."""
    num_clients: int
    total_rounds: int
    model: ModelSpec
    training: TrainingConfig = field(default_factory=TrainingConfig)
    master_seed: int = 0
    # When set, overrides num_senders with round-half-up(attacker_ratio * num_clients).
    attacker_ratio: Optional[float] = None
    num_senders: int = 1
    noise_level: float = 0.0
    noise_targets: NoiseTargets = "all"
    samples_per_client: int = 64
    validation_per_class: int = DEFAULT_VALIDATION_PER_CLASS
    cluster_spread: float = 1.0
    detectors: DetectorConfig = field(default_factory=DetectorConfig)

    def __post_init__(self) -> None:
        if self.num_clients < 1:
            raise ConfigurationError(f"num_clients must be >= 1, got {self.num_clients}")
        if self.total_rounds < 1:
            raise ConfigurationError(f"total_rounds must be >= 1, got {self.total_rounds}")
        if not 0.0 <= self.noise_level <= 1.0:
            raise ConfigurationError(f"noise level N_l must be in [0, 1], got {self.noise_level}")
        if self.noise_targets not in ("all", "senders"):
            raise ConfigurationError(f"unknown noise_targets {self.noise_targets!r}")
        if self.attacker_ratio is not None and not 0.0 <= self.attacker_ratio <= 1.0:
            raise ConfigurationError(f"attacker_ratio must be in [0, 1], got {self.attacker_ratio}")
        if self.attacker_ratio is None and not 0 <= self.num_senders <= self.num_clients:
            raise ConfigurationError(
                f"num_senders must be in [0, {self.num_clients}], got {self.num_senders}"
            )
        if self.samples_per_client < 1 or self.validation_per_class < 1:
            raise ConfigurationError("samples_per_client and validation_per_class must be >= 1")
        if self.cluster_spread <= 0:
            raise ConfigurationError(f"cluster_spread must be positive, got {self.cluster_spread}")

    def sender_count(self) -> int:
        if self.attacker_ratio is None:
            return self.num_senders
        return int(math.floor(self.attacker_ratio * self.num_clients + 0.5))

    def sender_ids(self) -> List[int]:
        return list(range(self.sender_count()))

    def receiver_id(self) -> Optional[int]:
        """Last client, when there is a sender and a client left over to receive."""
        s = self.sender_count()
        if s == 0 or s >= self.num_clients:
            return None
        return self.num_clients - 1


@dataclass
class ProjectPaths:
    """Absolute paths: project root, shipped scenarios, run outputs and the run log."""
    ROOT: str = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    SCENARIOS: str = os.path.join(ROOT, "scenarios")
    RUNS: str = os.getenv("COVERT_FL_RUNS_DIR") or os.path.join(ROOT, "runs")
    RUN_LOG: str = os.path.join(RUNS, "run_log.jsonl")


paths = ProjectPaths()


def default_workers() -> int:
    try:
        return max(1, int(os.getenv("COVERT_FL_WORKERS", "1")))
    except ValueError:
        return 1


def configure_logging(level: Optional[str] = None) -> None:
    """
    Install one stream handler on the root logger. Level comes from the argument, then
    COVERT_FL_LOG_LEVEL, then INFO. Only entry points call this.
    """
    name = (level or os.getenv("COVERT_FL_LOG_LEVEL") or "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, name, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
        force=True,
    )


def fmt_float(value: float) -> str:
    return f"{value:.{FLOAT_DIGITS}g}"
