import numpy as np
import pytest

from src.defense.recorder import (
    WeightTrace,
    pinned_fraction,
    rank_scores,
    recorder_report,
    recorder_scores,
    write_recorder_csv,
)
from src.errors import ConfigurationError, InsufficientTraceError
from src.model.spec import ParamVector
from src.rng import SplitMix64


def test_square_wave_scores_one():
    series = np.array([0.05] * 20 + [-0.05] * 20)[:, None]
    assert pinned_fraction(series, 20)[0] == 1.0


def test_trained_weights_score_low():
    series = SplitMix64(4).normal(200 * 6).reshape(200, 6)
    assert np.all(pinned_fraction(series, 20) < 0.1)


def test_gaussian_series_almost_never_look_pinned():
    series = SplitMix64(12).normal(80 * 10_000).reshape(80, 1, 10_000)
    scores = recorder_scores(WeightTrace.from_array(series), [20, 40])
    assert scores.shape == (1, 10_000)
    assert np.mean(scores < 0.1) > 0.99


def test_short_runs_do_not_count():
    series = np.array(([0.05] * 10 + [-0.05] * 10) * 4)[:, None]
    assert pinned_fraction(series, 20)[0] == 0.0
    assert pinned_fraction(series, 10)[0] == 1.0


def test_partly_pinned_position():
    rng = SplitMix64(5)
    series = np.concatenate([rng.normal(40), np.full(40, 0.2)])[:, None]
    assert pinned_fraction(series, 20)[0] == pytest.approx(0.5, abs=0.05)


def test_scores_take_the_best_hypothesis():
    rounds = np.array(([0.1] * 40 + [-0.1] * 40))
    noise = SplitMix64(6).normal(80)
    arr = np.stack([rounds, noise], axis=1)[:, :, None]  # [T x clients x 1]
    trace = WeightTrace.from_array(arr, positions=[17])
    scores = recorder_scores(trace, [20, 40])
    assert scores.shape == (2, 1)
    assert scores[0, 0] == 1.0
    assert scores[1, 0] < 0.1


def test_scores_need_two_cycles_of_trace():
    trace = WeightTrace.from_array(np.zeros((39, 2, 3)))
    with pytest.raises(InsufficientTraceError):
        recorder_scores(trace, [20])
    with pytest.raises(ConfigurationError):
        recorder_scores(trace, [])


def test_trace_records_submitted_positions(small_spec):
    trace = WeightTrace(2, positions=[0, 5])
    rng = SplitMix64(1)
    for r in range(3):
        trace.append(r, [ParamVector(rng.normal(small_spec.parameter_count), small_spec) for _ in range(2)])
    assert trace.as_array().shape == (3, 2, 2)
    assert trace.position_ids(2) == [0, 5]
    with pytest.raises(ConfigurationError):
        trace.append(1, [ParamVector(np.ones(small_spec.parameter_count), small_spec)] * 2)
    with pytest.raises(ConfigurationError):
        trace.append(9, [ParamVector(np.ones(small_spec.parameter_count), small_spec)])


def test_rank_breaks_ties_by_client_then_position():
    scores = np.array([[0.5, 1.0], [1.0, 0.0]])
    ranked = rank_scores(scores, [10, 20])
    assert ranked == [(0, 20, 1.0), (1, 10, 1.0), (0, 10, 0.5), (1, 20, 0.0)]
    assert rank_scores(scores, [10, 20], top=1) == [(0, 20, 1.0)]


def test_report_and_csv(tmp_path):
    arr = np.zeros((40, 1, 2))
    arr[:20, 0, 0], arr[20:, 0, 0] = 0.3, -0.3
    arr[:, 0, 1] = SplitMix64(2).normal(40)
    ranked = recorder_report(WeightTrace.from_array(arr, positions=[3, 8]), [20])
    assert ranked[0] == (0, 3, 1.0)
    path = tmp_path / "recorder.csv"
    write_recorder_csv(path, ranked, limit=1)
    lines = path.read_text().splitlines()
    assert lines == ["rank,client,position,score", "1,0,3,1"]
