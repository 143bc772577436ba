"""
Scenario files: JSON validated with pydantic, converted into FedConfig / CovertConfig / Bitstream.

Relative payload paths resolve against the directory of the scenario file. CLI flags override the
master seed, threshold policy, noise level and output directory.
"""
import json
import logging
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.config import DetectorConfig, FedConfig, TrainingConfig
from src.covert.channel import (
    DEFAULT_RMS_SAMPLE_SIZE,
    CovertConfig,
    FixedFactor,
    RMSFactor,
    ThresholdPolicy,
)
from src.covert.codecs import (
    Bitstream,
    encode_bitmap,
    encode_text,
    parse_bits,
    random_bits,
    read_pbm,
    read_text_payload,
)
from src.errors import ConfigurationError
from src.model.spec import ModelSpec

logger = logging.getLogger(__name__)

SweepAxis = Literal["clients", "attacker_ratio", "noise"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FederationSection(_Section):
    num_clients: int = Field(ge=1)
    total_rounds: int = Field(ge=1)
    master_seed: int = Field(default=0, ge=0, lt=2**64)
    num_senders: int = Field(default=1, ge=0)
    attacker_ratio: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    samples_per_client: int = Field(default=64, ge=1)
    validation_per_class: int = Field(default=50, ge=1)
    cluster_spread: float = Field(default=1.0, gt=0.0)


class ModelSection(_Section):
    input_dim: int = Field(ge=1)
    hidden_dim: int = Field(ge=1)
    num_classes: int = Field(ge=2)


class TrainingSection(_Section):
    epochs: int = Field(default=1, ge=0)
    learning_rate: float = Field(default=0.1, ge=0.0)
    batch_size: int = Field(default=32, ge=1)


class FixedFactorSection(_Section):
    kind: Literal["fixed"]
    value: float = Field(gt=0.0)


class RMSFactorSection(_Section):
    kind: Literal["rms"]
    sample_size: int = Field(default=DEFAULT_RMS_SAMPLE_SIZE, ge=1)
    scale: float = Field(default=1.0, gt=0.0)


FactorSection = Annotated[Union[FixedFactorSection, RMSFactorSection], Field(discriminator="kind")]


class CovertSection(_Section):
    num_positions: int = Field(ge=1)
    cycle_rounds: int = Field(ge=1)
    # Defaults to ceil(payload_bits / num_positions)
    num_cycles: Optional[int] = Field(default=None, ge=0)
    warmup_rounds: int = Field(default=0, ge=0)
    shared_seed: int = Field(default=0, ge=0, lt=2**64)
    factor: FactorSection = Field(default_factory=lambda: RMSFactorSection(kind="rms"))
    threshold: ThresholdPolicy = ThresholdPolicy.ZERO
    literal_encoding: bool = False


class BitsPayload(_Section):
    kind: Literal["bits"]
    bits: str


class TextPayload(_Section):
    kind: Literal["text"]
    text: Optional[str] = None
    file: Optional[str] = None

    @model_validator(mode="after")
    def _one_source(self) -> "TextPayload":
        if (self.text is None) == (self.file is None):
            raise ValueError("text payload needs exactly one of 'text' or 'file'")
        return self


class PBMPayload(_Section):
    kind: Literal["pbm"]
    file: str


class RandomPayload(_Section):
    kind: Literal["random"]
    length: int = Field(ge=0)
    seed: int = Field(default=0, ge=0, lt=2**64)


PayloadSection = Annotated[
    Union[BitsPayload, TextPayload, PBMPayload, RandomPayload], Field(discriminator="kind")
]


class DefenseSection(_Section):
    noise_level: float = Field(default=0.0, ge=0.0, le=1.0)
    noise_targets: Literal["all", "senders"] = "all"
    l2: bool = True
    cosine: bool = True
    accuracy: bool = True
    recorder: bool = False
    l2_threshold: float = Field(default=3.0, gt=0.0)
    cosine_threshold: float = Field(default=3.0, gt=0.0)
    accuracy_threshold: float = Field(default=3.0, gt=0.0)
    accuracy_std_floor: float = Field(default=0.02, ge=0.0)
    cycle_hypotheses: List[int] = Field(default_factory=lambda: [20, 40], min_length=1)
    recorder_positions: Optional[List[int]] = None
    # Rows kept in recorder.csv
    recorder_top: int = Field(default=1000, ge=1)


class Scenario(_Section):
    """One experiment: federation, model, training, covert channel, payload and defenses."""
    name: str
    federation: FederationSection
    model: ModelSection
    training: TrainingSection = Field(default_factory=TrainingSection)
    covert: Optional[CovertSection] = None
    payload: Optional[PayloadSection] = None
    defense: DefenseSection = Field(default_factory=DefenseSection)
    best_effort: bool = False
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _payload_needs_channel(self) -> "Scenario":
        if self.payload is not None and self.covert is None:
            raise ValueError("a payload needs a 'covert' section")
        return self

    # ------------------------------------------------------------------
    # Conversion to runtime config
    # ------------------------------------------------------------------

    def model_spec(self) -> ModelSpec:
        m = self.model
        return ModelSpec(m.input_dim, m.hidden_dim, m.num_classes)

    def fed_config(self) -> FedConfig:
        f, d = self.federation, self.defense
        return FedConfig(
            num_clients=f.num_clients,
            total_rounds=f.total_rounds,
            model=self.model_spec(),
            training=TrainingConfig(**self.training.model_dump()),
            master_seed=f.master_seed,
            attacker_ratio=f.attacker_ratio,
            num_senders=f.num_senders,
            noise_level=d.noise_level,
            noise_targets=d.noise_targets,
            samples_per_client=f.samples_per_client,
            validation_per_class=f.validation_per_class,
            cluster_spread=f.cluster_spread,
            detectors=DetectorConfig(
                l2=d.l2,
                cosine=d.cosine,
                accuracy=d.accuracy,
                recorder=d.recorder,
                l2_threshold=d.l2_threshold,
                cosine_threshold=d.cosine_threshold,
                accuracy_threshold=d.accuracy_threshold,
                accuracy_std_floor=d.accuracy_std_floor,
                cycle_hypotheses=tuple(d.cycle_hypotheses),
                recorder_positions=(
                    tuple(d.recorder_positions) if d.recorder_positions is not None else None
                ),
            ),
        )

    def message(self) -> Bitstream:
        """The payload as a Bitstream (empty when the scenario carries none)."""
        p = self.payload
        if p is None:
            return Bitstream(())
        if isinstance(p, BitsPayload):
            return parse_bits(p.bits)
        if isinstance(p, TextPayload):
            text = p.text if p.text is not None else read_text_payload(p.file)
            return encode_text(text)
        if isinstance(p, PBMPayload):
            return encode_bitmap(read_pbm(p.file))
        return random_bits(p.length, p.seed)

    def covert_config(self, payload_bits: int) -> Optional[CovertConfig]:
        c = self.covert
        if c is None:
            return None
        if isinstance(c.factor, FixedFactorSection):
            factor = FixedFactor(c.factor.value)
        else:
            factor = RMSFactor(c.factor.sample_size, c.factor.scale)
        return CovertConfig.from_secret(
            self.model_spec().parameter_count,
            c.num_positions,
            c.cycle_rounds,
            payload_bits,
            shared_seed=c.shared_seed,
            num_cycles=c.num_cycles,
            factor_policy=factor,
            threshold_policy=c.threshold,
            warmup_rounds=c.warmup_rounds,
            literal_encoding=c.literal_encoding,
        )

    # ------------------------------------------------------------------
    # Overrides
    # ------------------------------------------------------------------

    def with_overrides(
        self,
        seed: Optional[int] = None,
        threshold: Optional[str] = None,
        noise: Optional[float] = None,
        out: Optional[str] = None,
    ) -> "Scenario":
        """Copy with CLI overrides applied and re-validated."""
        data = self.model_dump(mode="json")
        if seed is not None:
            data["federation"]["master_seed"] = seed
        if threshold is not None:
            if data.get("covert") is None:
                raise ConfigurationError("--threshold needs a scenario with a covert channel")
            data["covert"]["threshold"] = threshold
        if noise is not None:
            data["defense"]["noise_level"] = noise
        if out is not None:
            data["output_dir"] = out
        return _validate(data, self.name)

    def with_axis(self, axis: SweepAxis, value: float) -> "Scenario":
        """Copy with one sweep axis set to value."""
        data = self.model_dump(mode="json")
        if axis == "clients":
            if float(value) != int(value):
                raise ConfigurationError(f"client count must be an integer, got {value}")
            data["federation"]["num_clients"] = int(value)
        elif axis == "attacker_ratio":
            data["federation"]["attacker_ratio"] = float(value)
        elif axis == "noise":
            data["defense"]["noise_level"] = float(value)
        else:
            raise ConfigurationError(f"unknown sweep axis {axis!r}")
        return _validate(data, self.name)


def _validate(data: dict, source: str) -> Scenario:
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid scenario {source}: {exc}") from exc


def _resolve(payload: dict, base: Path) -> None:
    path = payload.get("file")
    if path and not Path(path).is_absolute():
        payload["file"] = str((base / path).resolve())


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Parse and validate a scenario file; payload file paths become absolute."""
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"scenario {p} is not valid JSON: {exc}") from exc
    if isinstance(data, dict) and isinstance(data.get("payload"), dict):
        _resolve(data["payload"], p.parent)
    scenario = _validate(data, str(p))
    logger.debug("[scenario] loaded %s from %s", scenario.name, p)
    return scenario


def parse_axis_values(axis: SweepAxis, text: str) -> Tuple[float, ...]:
    """Comma-separated sweep values; an empty list is an error."""
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ConfigurationError(f"sweep axis {axis} has no values")
    try:
        return tuple(int(t) if axis == "clients" else float(t) for t in items)
    except ValueError as exc:
        raise ConfigurationError(f"bad value in sweep axis {axis}: {exc}") from exc
