"""
Synthetic Gaussian-blob datasets. Class means are uniform in [-1, 1]^input_dim; every sample is its
class mean plus cluster_spread * N(0, 1) noise. partition_dataset deals one pool into a server
validation set and IID client shards.
"""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from src.errors import ConfigurationError
from src.model.spec import ModelSpec
from src.rng import SplitMix64


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix [num_samples x input_dim] with integer labels."""
    features: np.ndarray
    labels: np.ndarray
    seed: int
    num_classes: int

    def __post_init__(self) -> None:
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        if features.ndim != 2 or features.shape[0] != labels.shape[0]:
            raise ConfigurationError(
                f"features {features.shape} and labels {labels.shape} do not line up"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ConfigurationError("labels outside [0, num_classes)")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices: np.ndarray) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.seed, self.num_classes)

    def check_spec(self, spec: ModelSpec) -> None:
        if self.input_dim != spec.input_dim or self.num_classes != spec.num_classes:
            raise ConfigurationError(
                f"dataset ({self.input_dim} features, {self.num_classes} classes) "
                f"does not match model {spec}"
            )


def generate_dataset(
    spec: ModelSpec, samples_per_class: int, cluster_spread: float, seed: int
) -> Dataset:
    """num_classes Gaussian clusters, samples_per_class each, labels grouped by class."""
    if samples_per_class < 1:
        raise ConfigurationError(f"samples_per_class must be >= 1, got {samples_per_class}")
    if cluster_spread <= 0:
        raise ConfigurationError(f"cluster_spread must be positive, got {cluster_spread}")
    rng = SplitMix64(seed)
    c, d = spec.num_classes, spec.input_dim
    means = rng.uniform(c * d, -1.0, 1.0).reshape(c, d)
    n = c * samples_per_class
    noise = rng.normal(n * d).reshape(n, d)
    labels = np.repeat(np.arange(c, dtype=np.int64), samples_per_class)
    features = means[labels] + cluster_spread * noise
    return Dataset(features, labels, seed, c)


def partition_dataset(
    data: Dataset, num_shards: int, seed: int, holdout: int = 0
) -> Tuple[Dataset, List[Dataset]]:
    """
    Shuffle with a seeded permutation; the first `holdout` rows become the validation set and the rest
    are dealt round-robin into num_shards IID shards. Returns (validation, shards).
    """
    if num_shards < 1:
        raise ConfigurationError(f"num_shards must be >= 1, got {num_shards}")
    if holdout < 0 or holdout + num_shards > len(data):
        raise ConfigurationError(
            f"cannot hold out {holdout} rows and fill {num_shards} shards from {len(data)} samples"
        )
    order = SplitMix64(seed).permutation(len(data))
    validation = data.subset(order[:holdout])
    rest = order[holdout:]
    shards = [data.subset(rest[k::num_shards]) for k in range(num_shards)]
    return validation, shards
