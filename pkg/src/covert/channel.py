"""
The covert channel between the sender and the receiver.

Shared secret (CovertConfig): which flat weight positions carry bits, how many rounds a cycle lasts,
how many cycles, how long the warmup (zero-back) phase is, how the factor is chosen and how the
receiver thresholds. Each cycle the sender pins every agreed position to +factor (bit 1) or -factor
(bit 0) after local training; the receiver records the global model at those positions every round
and decodes a cycle by comparing the cycle mean with a threshold.

Bits are laid out cycle-major, position-minor: bit k travels in cycle k // |positions| at position
k % |positions|. Unused positions of the last cycle are written as 0.
"""
import csv
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from src.covert.codecs import Bitstream
from src.errors import (
    ConfigurationError,
    DegenerateFactorError,
    IncompleteTransmissionError,
)
from src.model.spec import ParamVector
from src.rng import SplitMix64

logger = logging.getLogger(__name__)

DEFAULT_RMS_SAMPLE_SIZE = 500


@dataclass(frozen=True)
class FixedFactor:
    value: float

    def __post_init__(self) -> None:
        if not (self.value > 0 and math.isfinite(self.value)):
            raise ConfigurationError(f"fixed factor must be positive and finite, got {self.value}")


@dataclass(frozen=True)
class RMSFactor:
    """
    scale times the root mean square of sample_size weights drawn with replacement from the
    sender's model. A scale below 1 keeps the pinned values closer to what benign clients submit.
    """
    sample_size: int = DEFAULT_RMS_SAMPLE_SIZE
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.sample_size < 1:
            raise ConfigurationError(f"RMS sample_size must be >= 1, got {self.sample_size}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ConfigurationError(f"RMS scale must be positive and finite, got {self.scale}")


FactorPolicy = Union[FixedFactor, RMSFactor]


class ThresholdPolicy(str, Enum):
    ZERO = "zero"
    RUNNING_MEAN = "mean"


@dataclass(frozen=True)
class FactorValue:
    value: float

    def __post_init__(self) -> None:
        if not (self.value > 0 and math.isfinite(self.value)):
            raise DegenerateFactorError(f"factor must be positive and finite, got {self.value}")


class Capacity(NamedTuple):
    total_bits: int
    rate: Fraction


class Phase(NamedTuple):
    """What the sender does in one round. cycle is None outside payload cycles."""
    kind: str  # "warmup" | "cycle" | "idle"
    cycle: Optional[int] = None


@dataclass(frozen=True)
class CovertConfig:
    positions: Tuple[int, ...]
    cycle_rounds: int
    num_cycles: int
    payload_bits: int
    factor_policy: FactorPolicy = field(default_factory=RMSFactor)
    threshold_policy: ThresholdPolicy = ThresholdPolicy.ZERO
    warmup_rounds: int = 0
    shared_seed: int = 0
    literal_encoding: bool = False

    def __post_init__(self) -> None:
        positions = tuple(int(p) for p in self.positions)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "threshold_policy", ThresholdPolicy(self.threshold_policy))
        if len(set(positions)) != len(positions):
            raise ConfigurationError("covert positions must be distinct")
        if any(p < 0 for p in positions):
            raise ConfigurationError("covert positions must be non-negative")
        if self.cycle_rounds < 1:
            raise ConfigurationError(f"cycle_rounds must be >= 1, got {self.cycle_rounds}")
        if self.num_cycles < 0 or self.warmup_rounds < 0 or self.payload_bits < 0:
            raise ConfigurationError("num_cycles, warmup_rounds and payload_bits must be >= 0")
        if self.payload_bits > len(positions) * self.num_cycles:
            raise ConfigurationError(
                f"{self.payload_bits} payload bits do not fit {len(positions)} positions x "
                f"{self.num_cycles} cycles"
            )
        if self.payload_bits > 0 and self.num_cycles < 1:
            raise ConfigurationError("a non-empty payload needs at least one cycle")

    @classmethod
    def from_secret(
        cls,
        parameter_count: int,
        num_positions: int,
        cycle_rounds: int,
        payload_bits: int,
        *,
        shared_seed: int,
        num_cycles: Optional[int] = None,
        factor_policy: Optional[FactorPolicy] = None,
        threshold_policy: ThresholdPolicy = ThresholdPolicy.ZERO,
        warmup_rounds: int = 0,
        literal_encoding: bool = False,
    ) -> "CovertConfig":
        """Sender and receiver both call this with the same secret and get the same config."""
        positions = select_positions(parameter_count, num_positions, shared_seed)
        if num_cycles is None:
            num_cycles = math.ceil(payload_bits / num_positions) if num_positions else 0
        return cls(
            positions=tuple(positions),
            cycle_rounds=cycle_rounds,
            num_cycles=num_cycles,
            payload_bits=payload_bits,
            factor_policy=factor_policy if factor_policy is not None else RMSFactor(),
            threshold_policy=threshold_policy,
            warmup_rounds=warmup_rounds,
            shared_seed=shared_seed,
            literal_encoding=literal_encoding,
        )

    @property
    def transmission_rounds(self) -> int:
        """Rounds from round 0 until the last cycle ends."""
        return self.warmup_rounds + self.num_cycles * self.cycle_rounds

    def check_parameter_count(self, parameter_count: int) -> None:
        if any(p >= parameter_count for p in self.positions):
            raise ConfigurationError(
                f"covert position beyond parameter_count {parameter_count}"
            )

    def phase(self, round_index: int) -> Phase:
        if round_index < self.warmup_rounds:
            return Phase("warmup")
        offset = round_index - self.warmup_rounds
        cycle = offset // self.cycle_rounds
        if cycle < self.num_cycles:
            return Phase("cycle", cycle)
        return Phase("idle")

    def cycle_bits(self, payload: Sequence[int], cycle: int) -> List[int]:
        k = len(self.positions)
        return list(payload[cycle * k:(cycle + 1) * k])

    def cycle_end_round(self, cycle: int) -> int:
        """Number of rounds elapsed when `cycle` has been fully observed."""
        return self.warmup_rounds + (cycle + 1) * self.cycle_rounds


# ---------------------------------------------------------------------------
# Sender side
# ---------------------------------------------------------------------------

def select_positions(parameter_count: int, count: int, shared_seed: int) -> List[int]:
    """
    count distinct flat indices by SplitMix64 rejection sampling: each word u maps to
    floor(u / 2^64 * parameter_count); repeats are skipped.
    """
    if count < 0:
        raise ConfigurationError(f"count must be >= 0, got {count}")
    if count > parameter_count:
        raise ConfigurationError(f"cannot pick {count} distinct positions out of {parameter_count}")
    rng = SplitMix64(shared_seed)
    chosen: List[int] = []
    seen = set()
    while len(chosen) < count:
        idx = rng.below(parameter_count)
        if idx not in seen:
            seen.add(idx)
            chosen.append(idx)
    return chosen


def compute_factor(params: ParamVector, policy: FactorPolicy, seed: int) -> FactorValue:
    if isinstance(policy, FixedFactor):
        return FactorValue(policy.value)
    n = len(params)
    if policy.sample_size > n:
        raise ConfigurationError(
            f"RMS sample_size {policy.sample_size} exceeds parameter_count {n}"
        )
    idx = SplitMix64(seed).indices(policy.sample_size, n)
    rms = float(np.sqrt(np.mean(params.values[idx] ** 2)))
    if rms == 0.0:
        raise DegenerateFactorError("RMS of the sampled weights is zero")
    return FactorValue(policy.scale * rms)


def _check_positions(params: ParamVector, positions: Sequence[int]) -> np.ndarray:
    pos = np.asarray(positions, dtype=np.int64)
    if pos.size and (pos.min() < 0 or pos.max() >= len(params)):
        raise ConfigurationError(f"covert position out of range for {len(params)} parameters")
    return pos


def embed_bits(
    params: ParamVector,
    cycle_bits: Sequence[int],
    positions: Sequence[int],
    factor: FactorValue,
    literal: bool = False,
) -> ParamVector:
    """
    Writes (2b - 1) * factor at positions[j] for bit j (b * factor in literal mode); positions past the
    end of cycle_bits are zeroed. Every other coordinate is left alone.
    """
    if len(cycle_bits) > len(positions):
        raise ConfigurationError(
            f"{len(cycle_bits)} bits do not fit {len(positions)} positions"
        )
    pos = _check_positions(params, positions)
    bits = np.asarray(cycle_bits, dtype=np.float64)
    levels = bits if literal else 2.0 * bits - 1.0
    values = params.copy_values()
    values[pos] = 0.0
    values[pos[:len(bits)]] = levels * factor.value
    return params.replace(values)


def zero_back(params: ParamVector, positions: Sequence[int]) -> ParamVector:
    pos = _check_positions(params, positions)
    if pos.size == 0:
        return params
    values = params.copy_values()
    values[pos] = 0.0
    return params.replace(values)


# ---------------------------------------------------------------------------
# Receiver side
# ---------------------------------------------------------------------------

class ObservationLog:
    """Append-only record of the global model at the agreed positions, one entry per round."""

    def __init__(self, positions: Sequence[int]) -> None:
        self.positions: Tuple[int, ...] = tuple(int(p) for p in positions)
        self.rounds: List[int] = []
        self._entries: List[np.ndarray] = []

    def __len__(self) -> int:
        return len(self.rounds)

    def append(self, round_index: int, values: Sequence[float]) -> None:
        if self.rounds and round_index <= self.rounds[-1]:
            raise ConfigurationError(
                f"observation for round {round_index} after round {self.rounds[-1]}"
            )
        entry = np.array(values, dtype=np.float64).reshape(-1)
        if entry.shape[0] != len(self.positions):
            raise ConfigurationError(
                f"observation has {entry.shape[0]} values for {len(self.positions)} positions"
            )
        self.rounds.append(int(round_index))
        self._entries.append(entry)

    def record(self, round_index: int, global_params: ParamVector) -> None:
        """What the receiver does after each aggregation."""
        self.append(round_index, global_params.values[list(self.positions)])

    def as_matrix(self) -> np.ndarray:
        """[rounds x positions] observations."""
        if not self._entries:
            return np.zeros((0, len(self.positions)))
        return np.vstack(self._entries)

    def to_csv(self, path: Union[str, Path]) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["round"] + [f"p{p}" for p in self.positions])
            for r, entry in zip(self.rounds, self._entries):
                writer.writerow([r] + [f"{v:.9g}" for v in entry])

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "ObservationLog":
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"Observation trace not found at {p}")
        with p.open(newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if not header or header[0] != "round":
                raise ConfigurationError(f"{p} is not an observations.csv file")
            log = cls([int(col.lstrip("p")) for col in header[1:]])
            for row in reader:
                if row:
                    log.append(int(row[0]), [float(v) for v in row[1:]])
        return log


def _check_coverage(log: ObservationLog, config: CovertConfig, num_rounds: int) -> None:
    if len(log.positions) != len(config.positions):
        raise ConfigurationError(
            f"log records {len(log.positions)} positions, config has {len(config.positions)}"
        )
    if num_rounds < config.transmission_rounds:
        raise IncompleteTransmissionError(
            f"log covers {num_rounds} rounds, transmission needs {config.transmission_rounds}"
        )


def cycle_means(log: ObservationLog, config: CovertConfig, num_rounds: Optional[int] = None) -> np.ndarray:
    """
    [cycles x positions] means of the observations of each complete cycle within the first num_rounds
    rounds (all recorded rounds by default).
    """
    obs = log.as_matrix()
    if num_rounds is not None:
        obs = obs[:num_rounds]
    n, z = config.cycle_rounds, config.warmup_rounds
    complete = sum(1 for s in range(config.num_cycles) if config.cycle_end_round(s) <= obs.shape[0])
    if complete == 0:
        return np.zeros((0, len(config.positions)))
    body = obs[z:z + complete * n]
    return body.reshape(complete, n, -1).mean(axis=1)


def _threshold(obs: np.ndarray, policy: ThresholdPolicy) -> np.ndarray:
    if policy is ThresholdPolicy.RUNNING_MEAN and obs.shape[0]:
        return obs.mean(axis=0)
    return np.zeros(obs.shape[1])


def decode_prefix(log: ObservationLog, config: CovertConfig, num_rounds: int) -> List[int]:
    """
    Bits decodable from the first num_rounds observations: every complete cycle, cycle-major,
    truncated to payload_bits. Shorter than payload_bits while the transmission is still running.
    """
    obs = log.as_matrix()[:num_rounds]
    means = cycle_means(log, config, num_rounds)
    theta = _threshold(obs, config.threshold_policy)
    bits = (means > theta).astype(int).ravel()
    return [int(b) for b in bits[:config.payload_bits]]


def decode(log: ObservationLog, config: CovertConfig) -> Bitstream:
    """
    Cycle-mean decoding. ZERO: bit 1 iff mean > 0. RUNNING_MEAN: bit 1 iff the cycle mean exceeds the
    mean of that position over every recorded round.
    """
    _check_coverage(log, config, len(log))
    bits = decode_prefix(log, config, len(log))
    logger.debug("[channel] decoded %d bits from %d rounds", len(bits), len(log))
    return Bitstream(tuple(bits))


def capacity(total_rounds: int, num_positions: int, cycle_rounds: int) -> Capacity:
    """B = floor(T / n) * positions bits; R = B / T bits per round (exact)."""
    if total_rounds < 1 or num_positions < 0 or cycle_rounds < 1:
        raise ConfigurationError(
            f"capacity needs T >= 1, positions >= 0, cycle >= 1 (got {total_rounds}, "
            f"{num_positions}, {cycle_rounds})"
        )
    bits = (total_rounds // cycle_rounds) * num_positions
    return Capacity(bits, Fraction(bits, total_rounds))
