import numpy as np
import pytest

from src.errors import AggregationError, ConfigurationError
from src.model.dataset import Dataset, generate_dataset, partition_dataset
from src.model.mlp import evaluate, init_params, loss_and_grad, predict, train_local
from src.model.spec import ModelSpec, ParamVector, stack_params


def test_parameter_count_and_layout(small_spec):
    assert small_spec.parameter_count == 4 * 5 + 5 + 5 * 3 + 3
    lay = small_spec.layout()
    assert list(lay) == ["W1", "b1", "W2", "b2"]
    assert lay["b2"][0].stop == small_spec.parameter_count
    assert small_spec.bias_mask().sum() == 5 + 3


@pytest.mark.parametrize("dims", [(0, 3, 2), (3, 0, 2), (3, 3, 1)])
def test_model_spec_rejects_bad_dims(dims):
    with pytest.raises(ConfigurationError):
        ModelSpec(*dims)


def test_param_vector_validates(small_spec):
    with pytest.raises(ConfigurationError):
        ParamVector(np.zeros(small_spec.parameter_count - 1), small_spec)
    bad = np.zeros(small_spec.parameter_count)
    bad[3] = np.nan
    with pytest.raises(ConfigurationError):
        ParamVector(bad, small_spec)


def test_param_vector_is_read_only(small_params):
    with pytest.raises(ValueError):
        small_params.values[0] = 1.0


def test_pack_unpack(small_params):
    again = ParamVector.pack(small_params.spec, *small_params.unpack())
    assert again.equals(small_params)


def test_init_is_deterministic_with_zero_biases(small_spec):
    a = init_params(small_spec, seed=5)
    b = init_params(small_spec, seed=5)
    assert a.equals(b)
    assert not a.equals(init_params(small_spec, seed=6))
    assert np.all(a.values[small_spec.bias_mask()] == 0.0)
    w1 = a.unpack()[0]
    assert np.all(np.abs(w1) <= 1.0 / np.sqrt(small_spec.input_dim))


def test_gradient_matches_central_differences(small_params, small_data):
    X, y = small_data.features[:16], small_data.labels[:16]
    _, grad = loss_and_grad(small_params, X, y)
    eps = 1e-5
    numeric = np.zeros_like(grad)
    base = small_params.copy_values()
    for i in range(base.shape[0]):
        plus, minus = base.copy(), base.copy()
        plus[i] += eps
        minus[i] -= eps
        lp, _ = loss_and_grad(small_params.replace(plus), X, y)
        lm, _ = loss_and_grad(small_params.replace(minus), X, y)
        numeric[i] = (lp - lm) / (2 * eps)
    rel = np.linalg.norm(grad - numeric) / np.linalg.norm(numeric)
    assert rel < 1e-5
    assert small_params.spec.parameter_count <= 100
    # coordinate by coordinate; near-zero entries are held to an absolute floor
    assert np.all(np.abs(grad - numeric) <= 1e-5 * np.maximum(np.abs(numeric), 1e-4))


def test_training_is_deterministic_and_lowers_loss(small_params, small_data):
    a = train_local(small_params, small_data, epochs=5, learning_rate=0.1, batch_size=8, seed=9)
    b = train_local(small_params, small_data, epochs=5, learning_rate=0.1, batch_size=8, seed=9)
    assert a.equals(b)
    before, _ = loss_and_grad(small_params, small_data.features, small_data.labels)
    after, _ = loss_and_grad(a, small_data.features, small_data.labels)
    assert after < before


@pytest.mark.parametrize("epochs,lr", [(0, 0.1), (3, 0.0)])
def test_training_noop_returns_input(small_params, small_data, epochs, lr):
    out = train_local(small_params, small_data, epochs=epochs, learning_rate=lr, batch_size=4, seed=1)
    assert out.equals(small_params)


def test_training_rejects_bad_hyperparameters(small_params, small_data):
    with pytest.raises(ConfigurationError):
        train_local(small_params, small_data, epochs=1, learning_rate=0.1, batch_size=0, seed=1)


def test_training_rejects_mismatched_data(small_params):
    other = generate_dataset(ModelSpec(6, 5, 3), samples_per_class=4, cluster_spread=1.0, seed=1)
    with pytest.raises(ConfigurationError):
        train_local(small_params, other, epochs=1, learning_rate=0.1, batch_size=4, seed=1)


def test_evaluate_is_a_fraction(small_params, small_data):
    acc = evaluate(small_params, small_data)
    assert 0.0 <= acc <= 1.0
    expected = np.mean(predict(small_params, small_data.features) == small_data.labels)
    assert acc == pytest.approx(expected)


def test_evaluate_ignores_row_order(small_params, small_data):
    perm = np.random.default_rng(0).permutation(len(small_data))
    assert evaluate(small_params, small_data.subset(perm)) == evaluate(small_params, small_data)


def test_evaluate_empty_raises(small_params, small_spec):
    empty = Dataset(np.zeros((0, small_spec.input_dim)), np.zeros(0), seed=0, num_classes=3)
    with pytest.raises(ConfigurationError):
        evaluate(small_params, empty)


def test_trained_model_learns_separable_blobs(small_spec):
    data = generate_dataset(small_spec, samples_per_class=60, cluster_spread=0.2, seed=4)
    params = init_params(small_spec, seed=2)
    trained = train_local(params, data, epochs=30, learning_rate=0.5, batch_size=16, seed=3)
    assert evaluate(trained, data) > 0.8


def test_ten_class_blobs_are_learnable():
    spec = ModelSpec(10, 16, 10)
    data = generate_dataset(spec, samples_per_class=50, cluster_spread=0.5, seed=1)
    trained = train_local(init_params(spec, seed=1), data, epochs=300, learning_rate=0.2, batch_size=25, seed=2)
    assert evaluate(trained, data) > 0.9


def test_generate_dataset_shape_and_labels(small_spec):
    data = generate_dataset(small_spec, samples_per_class=7, cluster_spread=1.0, seed=11)
    assert data.features.shape == (21, 4)
    assert np.bincount(data.labels).tolist() == [7, 7, 7]
    again = generate_dataset(small_spec, samples_per_class=7, cluster_spread=1.0, seed=11)
    assert np.array_equal(data.features, again.features)


def test_partition_covers_every_row_once(small_data):
    validation, shards = partition_dataset(small_data, num_shards=4, seed=2, holdout=12)
    assert len(validation) == 12
    assert sum(len(s) for s in shards) == len(small_data) - 12
    assert max(len(s) for s in shards) - min(len(s) for s in shards) <= 1
    rows = np.vstack([validation.features] + [s.features for s in shards])
    key = lambda m: m[np.lexsort(m.T[::-1])]  # noqa: E731
    assert np.array_equal(key(rows), key(small_data.features))


def test_partition_too_small_raises(small_data):
    with pytest.raises(ConfigurationError):
        partition_dataset(small_data, num_shards=len(small_data), seed=2, holdout=1)


def test_stack_params_checks_specs(small_params):
    other = init_params(ModelSpec(4, 6, 3), seed=1)
    with pytest.raises(AggregationError):
        stack_params([small_params, other])
    with pytest.raises(AggregationError):
        stack_params([], minimum=1)
    assert stack_params([small_params, small_params]).shape == (2, len(small_params))


def test_evaluate_perfect_and_complement(small_spec):
    values = np.zeros(small_spec.parameter_count)
    values[-1] = 1.0  # always predicts the last class
    params = ParamVector(values, small_spec)
    X = np.ones((6, small_spec.input_dim))
    hit = Dataset(X, np.full(6, 2), seed=0, num_classes=3)
    miss = Dataset(X, (hit.labels + 1) % 3, seed=0, num_classes=3)
    assert evaluate(params, hit) == 1.0
    assert evaluate(params, miss) == 0.0


def test_logit_ties_go_to_the_lowest_class(small_spec):
    params = ParamVector(np.zeros(small_spec.parameter_count), small_spec)
    assert predict(params, np.ones((3, small_spec.input_dim))).tolist() == [0, 0, 0]
