"""
Longitudinal recorder defense: the server keeps every submitted weight of every client across rounds
and looks for positions whose value is pinned to a constant magnitude with long constant-sign runs,
which is the signature of a sender re-embedding the same bit for a whole cycle. Trained weights move
every round and score near zero.

The statistic is one concrete instantiation of "record all weight changes"; other scores are possible.
"""
import csv
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import ConfigurationError, InsufficientTraceError
from src.model.spec import ParamVector

logger = logging.getLogger(__name__)

MAGNITUDE_TOLERANCE = 1e-9

Ranked = Tuple[int, int, float]


class WeightTrace:
    """Per client, per recorded position, the submitted value in every round so far."""

    def __init__(self, num_clients: int, positions: Optional[Sequence[int]] = None) -> None:
        self.num_clients = num_clients
        self.positions: Optional[Tuple[int, ...]] = (
            tuple(int(p) for p in positions) if positions is not None else None
        )
        self.rounds: List[int] = []
        self._rows: List[np.ndarray] = []

    def __len__(self) -> int:
        return len(self.rounds)

    def append(self, round_index: int, submitted: Sequence[ParamVector]) -> None:
        if len(submitted) != self.num_clients:
            raise ConfigurationError(
                f"trace expects {self.num_clients} clients, got {len(submitted)}"
            )
        if self.rounds and round_index <= self.rounds[-1]:
            raise ConfigurationError(f"trace round {round_index} after {self.rounds[-1]}")
        rows = np.vstack([u.values for u in submitted])
        if self.positions is not None:
            rows = rows[:, list(self.positions)]
        self.rounds.append(int(round_index))
        self._rows.append(rows)

    def as_array(self) -> np.ndarray:
        """[rounds x clients x positions]."""
        if not self._rows:
            width = len(self.positions) if self.positions is not None else 0
            return np.zeros((0, self.num_clients, width))
        return np.stack(self._rows)

    def position_ids(self, width: int) -> List[int]:
        return list(self.positions) if self.positions is not None else list(range(width))

    @classmethod
    def from_array(cls, series: np.ndarray, positions: Optional[Sequence[int]] = None) -> "WeightTrace":
        """Build a trace from an existing [rounds x clients x positions] array."""
        arr = np.asarray(series, dtype=np.float64)
        if arr.ndim != 3:
            raise ConfigurationError(f"trace array must be 3-D, got shape {arr.shape}")
        trace = cls(arr.shape[1], positions if positions is not None else range(arr.shape[2]))
        trace.rounds = list(range(arr.shape[0]))
        trace._rows = list(arr)
        return trace


def _run_lengths(same_as_previous: np.ndarray) -> np.ndarray:
    """
    same_as_previous is [T-1 x N] booleans (row t: value t+1 continues the run of value t).
    Returns [T x N] length of the run each element belongs to.
    """
    steps, n = same_as_previous.shape[0] + 1, same_as_previous.shape[1]
    breaks = np.vstack([np.ones((1, n), dtype=bool), ~same_as_previous])
    run_id = np.cumsum(breaks, axis=0) - 1
    global_id = run_id + np.arange(n)[None, :] * steps
    counts = np.bincount(global_id.ravel(), minlength=steps * n)
    return counts[global_id]


def pinned_fraction(series: np.ndarray, cycle_rounds: int) -> np.ndarray:
    """
    series is [T x N]. For each column, the fraction of rounds lying inside both a run of at least
    cycle_rounds rounds with magnitude constant within 1e-9 and a run of at least cycle_rounds rounds
    with constant sign.
    """
    if series.shape[0] < 2:
        return np.zeros(series.shape[1])
    mags = np.abs(series)
    same_mag = np.abs(np.diff(mags, axis=0)) <= MAGNITUDE_TOLERANCE
    signs = np.sign(series)
    same_sign = signs[1:] == signs[:-1]
    pinned = (_run_lengths(same_mag) >= cycle_rounds) & (_run_lengths(same_sign) >= cycle_rounds)
    return pinned.mean(axis=0)


def recorder_scores(trace: WeightTrace, cycle_hypotheses: Sequence[int]) -> np.ndarray:
    """[clients x positions] suspicion scores: max over hypotheses of the pinned fraction."""
    if not cycle_hypotheses:
        raise ConfigurationError("need at least one cycle hypothesis")
    longest = max(cycle_hypotheses)
    if len(trace) < 2 * longest:
        raise InsufficientTraceError(
            f"trace has {len(trace)} rounds, hypothesis {longest} needs {2 * longest}"
        )
    arr = trace.as_array()
    _, clients, width = arr.shape
    scores = np.zeros((clients, width))
    # one client at a time keeps the run-length temporaries small
    for c in range(clients):
        for n in cycle_hypotheses:
            scores[c] = np.maximum(scores[c], pinned_fraction(arr[:, c, :], int(n)))
    return scores


def rank_scores(
    scores: np.ndarray, position_ids: Sequence[int], top: Optional[int] = None
) -> List[Ranked]:
    """(client, position, score) ranked by score descending, ties by client then position."""
    clients, width = scores.shape
    position_ids = np.asarray(position_ids)
    flat = scores.ravel()
    client_idx = np.repeat(np.arange(clients), width)
    pos_idx = np.tile(position_ids, clients)
    order = np.lexsort((pos_idx, client_idx, -flat))
    if top is not None:
        order = order[:top]
    return [(int(client_idx[k]), int(pos_idx[k]), float(flat[k])) for k in order]


def recorder_report(
    trace: WeightTrace, cycle_hypotheses: Sequence[int], top: Optional[int] = None
) -> List[Ranked]:
    """Scores every recorded (client, position) and returns them ranked, see rank_scores."""
    scores = recorder_scores(trace, cycle_hypotheses)
    flat = scores.ravel()
    suspicious = int(np.sum(flat > 0.5))
    logger.info(
        "[recorder] %d of %d client-positions score above 0.5 (hypotheses %s)",
        suspicious, flat.size, list(cycle_hypotheses),
    )
    return rank_scores(scores, trace.position_ids(scores.shape[1]), top)


def write_recorder_csv(path: Union[str, Path], ranked: Sequence[Ranked], limit: int = 1000) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["rank", "client", "position", "score"])
        for rank, (client, position, score) in enumerate(ranked[:limit], start=1):
            writer.writerow([rank, client, position, f"{score:.9g}"])
