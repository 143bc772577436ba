"""Shared fixtures and the --runslow switch."""
import json
from pathlib import Path

import pytest

from src.config import DetectorConfig, FedConfig, TrainingConfig
from src.model.dataset import generate_dataset
from src.model.mlp import init_params
from src.model.spec import ModelSpec

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def small_spec() -> ModelSpec:
    return ModelSpec(input_dim=4, hidden_dim=5, num_classes=3)


@pytest.fixture
def small_params(small_spec):
    return init_params(small_spec, seed=1)


@pytest.fixture
def small_data(small_spec):
    return generate_dataset(small_spec, samples_per_class=20, cluster_spread=0.5, seed=3)


@pytest.fixture
def quiet_detectors() -> DetectorConfig:
    return DetectorConfig(l2=False, cosine=False, accuracy=False)


@pytest.fixture
def small_fed(small_spec, quiet_detectors) -> FedConfig:
    return FedConfig(
        num_clients=4,
        total_rounds=6,
        model=small_spec,
        training=TrainingConfig(epochs=1, learning_rate=0.05, batch_size=16),
        master_seed=12,
        num_senders=1,
        samples_per_client=24,
        validation_per_class=10,
        detectors=quiet_detectors,
    )


@pytest.fixture
def scenario_data():
    """Raw dict of a shipped scenario file, by name."""

    def load(name: str) -> dict:
        return json.loads((SCENARIOS / f"{name}.json").read_text(encoding="utf-8"))

    return load
