"""
ModelSpec and ParamVector: the shape of the classifier and the flat weight vector that carries every
signal in the simulator. Flat layout is W1 [input_dim x hidden_dim], b1, W2 [hidden_dim x num_classes],
b2, each row-major, so covert positions are stable flat indices.
"""
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from src.errors import AggregationError, ConfigurationError


@dataclass(frozen=True)
class ModelSpec:
    """Dimensions of the one-hidden-layer classifier."""
    input_dim: int
    hidden_dim: int
    num_classes: int

    def __post_init__(self) -> None:
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise ConfigurationError(f"Model dimensions must be positive: {self}")
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {self.num_classes}")

    @property
    def parameter_count(self) -> int:
        i, h, c = self.input_dim, self.hidden_dim, self.num_classes
        return i * h + h + h * c + c

    def layout(self) -> Dict[str, Tuple[slice, Tuple[int, ...]]]:
        """Flat slice and shape of each tensor, in storage order."""
        i, h, c = self.input_dim, self.hidden_dim, self.num_classes
        shapes = {"W1": (i, h), "b1": (h,), "W2": (h, c), "b2": (c,)}
        out: Dict[str, Tuple[slice, Tuple[int, ...]]] = {}
        start = 0
        for name, shape in shapes.items():
            size = int(np.prod(shape))
            out[name] = (slice(start, start + size), shape)
            start += size
        return out

    def bias_mask(self) -> np.ndarray:
        """Boolean mask over the flat vector, True at b1 and b2."""
        mask = np.zeros(self.parameter_count, dtype=bool)
        lay = self.layout()
        mask[lay["b1"][0]] = True
        mask[lay["b2"][0]] = True
        return mask


@dataclass(frozen=True, eq=False)
class ParamVector:
    """
    Immutable flat parameter vector. The constructor copies the values, checks the length against the
    spec and rejects NaN/Inf, so every ParamVector crossing a protocol boundary is valid.
    """
    values: np.ndarray
    spec: ModelSpec

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64).reshape(-1)
        if arr.shape[0] != self.spec.parameter_count:
            raise ConfigurationError(
                f"ParamVector has {arr.shape[0]} values, spec needs {self.spec.parameter_count}"
            )
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError("ParamVector contains NaN or Inf")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.shape[0]

    def unpack(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(W1, b1, W2, b2) as read-only views."""
        lay = self.spec.layout()
        return tuple(self.values[sl].reshape(shape) for sl, shape in lay.values())  # type: ignore[return-value]

    @classmethod
    def pack(
        cls, spec: ModelSpec, w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: np.ndarray
    ) -> "ParamVector":
        flat = np.concatenate([np.ravel(w1), np.ravel(b1), np.ravel(w2), np.ravel(b2)])
        return cls(flat, spec)

    def replace(self, values: np.ndarray) -> "ParamVector":
        """New vector with the same spec."""
        return ParamVector(values, self.spec)

    def copy_values(self) -> np.ndarray:
        """Writable copy of the flat values."""
        return np.array(self.values, dtype=np.float64)

    def equals(self, other: "ParamVector") -> bool:
        """Bitwise equality of spec and values."""
        return self.spec == other.spec and np.array_equal(self.values, other.values)


def stack_params(updates: Sequence[ParamVector], minimum: int = 1) -> np.ndarray:
    """[clients x parameters] matrix; every update must come from the same spec."""
    if len(updates) < minimum:
        raise AggregationError(f"need at least {minimum} updates, got {len(updates)}")
    spec = updates[0].spec
    if any(u.spec != spec for u in updates):
        raise AggregationError("updates come from different model specs")
    return np.vstack([u.values for u in updates])
