import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.config import DetectorConfig, FedConfig, TrainingConfig
from src.covert.channel import CovertConfig, FixedFactor, ObservationLog
from src.covert.codecs import Bitstream, random_bits
from src.errors import AggregationError, CapacityExceededError, ConfigurationError
from src.graph.state import ClientRole, ClientState
from src.graph.workflow import run_round, run_simulation, setup_federation, simulate
from src.model.spec import ModelSpec, ParamVector
from src.nodes.server.aggregation import fed_avg
from src.nodes.server.noise import apply_noise, server_noise_node
from src.rng import SplitMix64

QUIET = DetectorConfig(l2=False, cosine=False, accuracy=False)


def _vectors(spec, k, seed):
    rng = SplitMix64(seed)
    return [ParamVector(rng.normal(spec.parameter_count), spec) for _ in range(k)]


def _covert(spec, positions, cycle, bits, factor=1.0, **kw):
    return CovertConfig.from_secret(
        spec.parameter_count, positions, cycle, bits,
        shared_seed=kw.pop("shared_seed", 3), factor_policy=FixedFactor(factor), **kw,
    )


# ---------------------------------------------------------------------------
# FedAvg and noise
# ---------------------------------------------------------------------------

def test_fed_avg_matches_mean(small_spec):
    updates = _vectors(small_spec, 7, seed=1)
    expected = np.mean(np.vstack([u.values for u in updates]), axis=0)
    np.testing.assert_allclose(fed_avg(updates).values, expected, rtol=0, atol=1e-12)


def test_fed_avg_is_order_independent_bitwise(small_spec):
    updates = _vectors(small_spec, 9, seed=2)
    base = fed_avg(updates)
    for seed in range(5):
        perm = SplitMix64(seed).permutation(len(updates))
        assert fed_avg([updates[i] for i in perm]).equals(base)


def test_fed_avg_is_linear(small_spec):
    updates = _vectors(small_spec, 4, seed=3)
    scaled = [u.replace(2.5 * u.values + 1.0) for u in updates]
    np.testing.assert_allclose(fed_avg(scaled).values, 2.5 * fed_avg(updates).values + 1.0, atol=1e-12)


def test_fed_avg_single_update_is_identity(small_params):
    assert fed_avg([small_params]).equals(small_params)


@pytest.mark.parametrize("k", [2, 3, 5, 6, 7, 20, 29])
def test_fed_avg_of_identical_updates_is_that_update(small_params, k):
    assert fed_avg([small_params] * k).equals(small_params)


def test_fed_avg_keeps_agreed_coordinates_exact(small_spec):
    updates = _vectors(small_spec, 7, seed=8)
    agreed = [u.replace(np.where(np.arange(len(u)) < 3, 0.1, u.values)) for u in updates]
    out = fed_avg(agreed)
    assert out.values[:3].tolist() == [0.1, 0.1, 0.1]
    expected = np.mean(np.vstack([u.values for u in agreed]), axis=0)
    np.testing.assert_allclose(out.values[3:], expected[3:], rtol=0, atol=1e-12)


def test_fed_avg_rejects_empty_and_mixed():
    with pytest.raises(AggregationError):
        fed_avg([])
    a = _vectors(ModelSpec(2, 2, 2), 1, seed=0)
    b = _vectors(ModelSpec(3, 2, 2), 1, seed=0)
    with pytest.raises(AggregationError):
        fed_avg(a + b)


def test_zero_noise_is_identity(small_params):
    assert apply_noise(small_params, 0.0, seed=1) is small_params


def test_half_noise_keeps_the_spread():
    spec = ModelSpec(100, 100, 2)
    w = ParamVector(SplitMix64(8).normal(spec.parameter_count), spec)
    out = apply_noise(w, 0.5, seed=9)
    assert np.var(out.values) == pytest.approx(0.5, rel=0.1)
    corr = np.corrcoef(w.values, out.values)[0, 1]
    assert corr == pytest.approx(1 / math.sqrt(2), abs=0.05)


def test_full_noise_forgets_the_model():
    spec = ModelSpec(100, 100, 2)
    w = ParamVector(SplitMix64(8).normal(spec.parameter_count), spec)
    out = apply_noise(w, 1.0, seed=9)
    assert abs(np.corrcoef(w.values, out.values)[0, 1]) < 0.05
    assert apply_noise(w, 1.0, seed=9).equals(out)


def test_noise_level_out_of_range(small_params):
    with pytest.raises(ConfigurationError):
        apply_noise(small_params, 1.5, seed=0)


def test_noise_targets_only_senders(small_spec, small_data):
    config = FedConfig(
        num_clients=3, total_rounds=1, model=small_spec, noise_level=0.4,
        noise_targets="senders", detectors=QUIET,
    )
    clients = [
        ClientState(0, ClientRole.SENDER, small_data),
        ClientState(1, ClientRole.BENIGN, small_data),
        ClientState(2, ClientRole.RECEIVER, small_data),
    ]
    updates = _vectors(small_spec, 3, seed=4)
    state = server_noise_node(
        {"fed_config": config, "round_index": 0, "clients": clients, "local_updates": updates}
    )
    assert not state["submitted"][0].equals(updates[0])
    assert state["submitted"][1] is updates[1]
    assert state["submitted"][2] is updates[2]
    assert state["applied_noise"] == 0.4


# ---------------------------------------------------------------------------
# Rounds and simulations
# ---------------------------------------------------------------------------

def test_setup_assigns_roles(small_fed):
    _, clients, validation = setup_federation(small_fed)
    assert [c.role for c in clients] == [
        ClientRole.SENDER, ClientRole.BENIGN, ClientRole.BENIGN, ClientRole.RECEIVER
    ]
    assert all(len(c.data) == 24 for c in clients)
    assert len(validation) == 30


def test_attacker_ratio_rounds_half_up(small_spec):
    config = FedConfig(num_clients=10, total_rounds=1, model=small_spec, attacker_ratio=0.25)
    assert config.sender_count() == 3
    assert config.receiver_id() == 9
    everyone = dataclasses.replace(config, attacker_ratio=1.0)
    assert everyone.receiver_id() is None


def test_single_sender_sets_the_global_exactly(small_spec):
    config = FedConfig(
        num_clients=1, total_rounds=2, model=small_spec, master_seed=4,
        samples_per_client=12, validation_per_class=4, detectors=QUIET,
    )
    covert = _covert(small_spec, 3, 1, 3, factor=0.7, num_cycles=1)
    global_params, clients, validation = setup_federation(config)
    log = ObservationLog(covert.positions)
    new_global, report = run_round(
        global_params, clients, 0, config, covert, [1, 0, 1],
        validation=validation, observation_log=log,
    )
    assert new_global.values[list(covert.positions)].tolist() == [0.7, -0.7, 0.7]
    assert log.as_matrix()[0].tolist() == [0.7, -0.7, 0.7]
    assert report["phase"] == "cycle:0"
    assert clients[0].factors[0].value == 0.7


def test_all_senders_pin_the_global_exactly(small_spec):
    config = FedConfig(
        num_clients=5, num_senders=5, total_rounds=1, model=small_spec, master_seed=4,
        samples_per_client=12, validation_per_class=4, detectors=QUIET,
    )
    covert = _covert(small_spec, 3, 1, 3, factor=0.7, num_cycles=1)
    global_params, clients, validation = setup_federation(config)
    assert all(c.is_sender for c in clients)
    log = ObservationLog(covert.positions)
    new_global, _ = run_round(
        global_params, clients, 0, config, covert, [1, 0, 1],
        validation=validation, observation_log=log,
    )
    assert new_global.values[list(covert.positions)].tolist() == [0.7, -0.7, 0.7]
    assert log.as_matrix()[0].tolist() == [0.7, -0.7, 0.7]


def test_warmup_zero_back_shrinks_the_positions():
    spec = ModelSpec(8, 16, 3)
    config = FedConfig(
        num_clients=20, total_rounds=11, model=spec, master_seed=6,
        training=TrainingConfig(epochs=1, learning_rate=0.01, batch_size=16),
        samples_per_client=16, validation_per_class=5, detectors=QUIET,
    )
    covert = _covert(spec, 40, 1, 40, factor=0.5, warmup_rounds=10)
    message = random_bits(40, seed=2)
    result = simulate(config, covert, message)
    assert [rep["phase"] for rep in result.reports[:10]] == ["warmup"] * 10

    initial = setup_federation(config)[0].values[list(covert.positions)]
    obs = result.observation_log.as_matrix()
    after_warmup = np.abs(obs[9]).mean()
    assert after_warmup < np.abs(obs[0]).mean()
    assert after_warmup < 0.75 * np.abs(initial).mean()

    untouched = simulate(dataclasses.replace(config, num_senders=0), covert, message)
    assert after_warmup < np.abs(untouched.observation_log.as_matrix()[9]).mean()


def test_run_simulation_returns_reports_and_payload(small_fed, small_spec):
    covert = _covert(small_spec, 4, 3, 8)
    message = Bitstream((0, 1, 1, 0, 1, 0, 0, 1))
    reports, received = run_simulation(small_fed, covert, message)
    full = simulate(small_fed, covert, message)
    assert reports == full.reports
    assert received == full.received
    assert len(reports) == small_fed.total_rounds

    plain_reports, nothing = run_simulation(small_fed)
    assert len(plain_reports) == small_fed.total_rounds
    assert len(nothing) == 0


def test_run_round_rejects_rounds_past_the_end(small_fed):
    global_params, clients, validation = setup_federation(small_fed)
    with pytest.raises(ConfigurationError):
        run_round(global_params, clients, small_fed.total_rounds, small_fed, validation=validation)


def test_no_senders_matches_no_channel(small_fed, small_spec):
    config = dataclasses.replace(small_fed, num_senders=0)
    covert = _covert(small_spec, 4, 3, 4)
    with_channel = simulate(config, covert, Bitstream((1, 0, 1, 1)))
    without = simulate(config)
    assert with_channel.reports == without.reports
    assert with_channel.final_global.equals(without.final_global)
    assert all(rep["phase"] == "none" for rep in without.reports)


def test_simulation_is_reproducible(small_fed, small_spec):
    covert = _covert(small_spec, 4, 3, 8)
    message = Bitstream((1, 1, 0, 1, 0, 0, 1, 0))
    a = simulate(small_fed, covert, message)
    b = simulate(small_fed, covert, message)
    assert a.reports == b.reports
    assert a.received == b.received
    assert np.array_equal(a.observation_log.as_matrix(), b.observation_log.as_matrix())


def test_empty_message_sends_nothing(small_fed, small_spec):
    covert = _covert(small_spec, 4, 3, 0)
    result = simulate(small_fed, covert, Bitstream(()))
    assert len(result.received) == 0
    assert all(rep["phase"] == "idle" for rep in result.reports)


def test_payload_without_channel_is_rejected(small_fed):
    with pytest.raises(ConfigurationError):
        simulate(small_fed, None, Bitstream((1,)))


def test_capacity_is_checked_before_round_zero(small_fed, small_spec, monkeypatch):
    def boom(*args, **kwargs):
        raise AssertionError("setup should not run")

    monkeypatch.setattr("src.graph.workflow.setup_federation", boom)
    covert = _covert(small_spec, 2, 3, 6)  # 3 cycles x 3 rounds > T = 6
    with pytest.raises(CapacityExceededError):
        simulate(small_fed, covert, Bitstream((1,) * 6))
    warm = _covert(small_spec, 2, 1, 2, warmup_rounds=6)
    with pytest.raises(CapacityExceededError):
        simulate(small_fed, warm, Bitstream((1, 0)))


def test_message_length_must_match_config(small_fed, small_spec):
    covert = _covert(small_spec, 4, 3, 4)
    with pytest.raises(ConfigurationError):
        simulate(small_fed, covert, Bitstream((1, 0)))


@pytest.mark.parametrize("seed", range(10))
def test_random_payload_recovered_in_small_federation(seed):
    spec = ModelSpec(8, 16, 3)
    config = FedConfig(
        num_clients=5, total_rounds=50, model=spec, master_seed=seed,
        training=TrainingConfig(epochs=1, learning_rate=0.02, batch_size=16),
        samples_per_client=32, validation_per_class=10, detectors=QUIET,
    )
    message = random_bits(100, seed=1000 + seed)
    covert = _covert(spec, 20, 10, 100, factor=2.0, shared_seed=seed)
    result = simulate(config, covert, message)
    assert result.received.bits == message.bits


@settings(max_examples=1000, deadline=None)
@given(st.lists(st.integers(0, 1), max_size=24))
def test_lone_sender_round_trip(bits):
    spec = ModelSpec(2, 3, 2)
    covert = _covert(spec, 8, 1, len(bits), factor=0.5, shared_seed=len(bits))
    config = FedConfig(
        num_clients=1, total_rounds=max(1, covert.num_cycles), model=spec,
        training=TrainingConfig(epochs=0), samples_per_client=2, validation_per_class=1,
        detectors=QUIET,
    )
    result = simulate(config, covert, Bitstream(tuple(bits)))
    assert list(result.received.bits) == bits


def test_single_sender_shifts_the_mean_by_factor_over_m():
    spec = ModelSpec(1, 1, 2)
    m, f, trials = 5, 0.8, 10_000
    rng = SplitMix64(31)
    pinned = np.zeros(spec.parameter_count)
    pinned[0] = f
    sender = ParamVector(pinned, spec)
    samples = []
    for _ in range(trials):
        benign = [ParamVector(rng.normal(spec.parameter_count), spec) for _ in range(m - 1)]
        samples.append(fed_avg([sender] + benign).values[0])
    samples = np.asarray(samples)
    stderr = samples.std(ddof=1) / math.sqrt(trials)
    assert abs(samples.mean() - f / m) < 3 * stderr
