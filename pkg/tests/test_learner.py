import numpy as np
import pytest

from iqestimation.exceptions import ConfigInvalid, DimensionMismatch, ModelFormatError, SingleClassData
from iqestimation.learner import (
    LearnerHyper,
    LinearModel,
    StandardizationStats,
    decision_scores,
    load_model,
    predict,
    predict_many,
    save_model,
    train,
)


@pytest.fixture
def blobs():
    """Three well separated clusters labeled 1, 3 and 5."""
    rng = np.random.default_rng(0)
    centers = {1: (-4.0, 0.0), 3: (0.0, 4.0), 5: (4.0, 0.0)}
    rows, labels = [], []
    for label, center in centers.items():
        rows.append(rng.normal(center, 0.5, size=(60, 2)))
        labels.extend([label] * 60)
    return np.vstack(rows), np.array(labels)


def test_separable_clusters_are_learned(blobs):
    rows, labels = blobs
    model = train(rows, labels, LearnerHyper(epochs=20), seed=1)
    assert list(model.classes) == [1, 3, 5]
    assert np.mean(predict_many(model, rows) == labels) >= 0.98
    label, scores = predict(model, np.array([4.0, 0.2]))
    assert label == 5
    assert scores.shape == (3,)


def test_training_is_deterministic(blobs):
    rows, labels = blobs
    a = train(rows, labels, LearnerHyper(epochs=5), seed=7)
    b = train(rows, labels, LearnerHyper(epochs=5), seed=7)
    c = train(rows, labels, LearnerHyper(epochs=5), seed=8)
    assert np.array_equal(a.weights, b.weights)
    assert np.array_equal(a.biases, b.biases)
    assert not np.array_equal(a.weights, c.weights)


def test_history_records_each_epoch(blobs):
    rows, labels = blobs
    model = train(rows, labels, LearnerHyper(epochs=4), seed=1)
    assert len(model.history) == 3
    assert all(len(trace) == 4 for trace in model.history)


def test_objective_does_not_increase_on_separable_data():
    """Full batches fix the pass order; two tight clusters keep every margin above one."""
    rng = np.random.default_rng(3)
    rows = np.concatenate([rng.normal(-3.0, 0.1, 30), rng.normal(3.0, 0.1, 30)]).reshape(-1, 1)
    labels = np.array([1] * 30 + [5] * 30)
    model = train(rows, labels, LearnerHyper(lambda_=1e-4, epochs=20, batch_size=60), seed=2)
    for trace in model.history:
        assert len(trace) == 20
        assert all(later <= earlier for earlier, later in zip(trace, trace[1:]))
        assert trace[-1] < trace[0]


def test_projection_bounds_the_weights(blobs):
    rows, labels = blobs
    hyper = LearnerHyper(lambda_=0.5, epochs=5)
    model = train(rows, labels, hyper, seed=1)
    augmented = np.hstack([model.weights, model.biases[:, None]])
    assert np.all(np.linalg.norm(augmented, axis=1) <= 1.0 / np.sqrt(0.5) + 1e-12)


def test_single_class_predicts_constant():
    rows = np.arange(12, dtype=float).reshape(6, 2)
    with pytest.warns(SingleClassData):
        model = train(rows, [4] * 6)
    assert predict_many(model, rows).tolist() == [4] * 6


def test_ties_go_to_the_lower_class():
    model = LinearModel(
        classes=np.array([2, 4]),
        weights=np.zeros((2, 3)),
        biases=np.zeros(2),
        hyper=LearnerHyper(),
        seed=0,
        stats=StandardizationStats.identity(3),
    )
    assert predict(model, np.ones(3))[0] == 2


def test_constant_columns_are_neutral():
    rows = np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
    stats = StandardizationStats.fit(rows)
    transformed = stats.transform(rows)
    assert np.all(transformed[:, 1] == 0.0)
    assert not np.isnan(transformed).any()


def test_dimension_checks(blobs):
    rows, labels = blobs
    with pytest.raises(DimensionMismatch):
        train(rows, labels[:-1])
    with pytest.raises(DimensionMismatch):
        train(np.zeros((0, 2)), [])
    with pytest.raises(DimensionMismatch):
        train(rows, labels, feature_names=["only one"])
    model = train(rows, labels, LearnerHyper(epochs=1))
    with pytest.raises(DimensionMismatch):
        predict(model, np.zeros(3))
    with pytest.raises(DimensionMismatch):
        decision_scores(model, np.zeros((4, 5)))


@pytest.mark.parametrize("changes", [{"lambda_": 0.0}, {"epochs": 0}, {"batch_size": 0}])
def test_invalid_hyper(changes):
    with pytest.raises(ConfigInvalid):
        LearnerHyper(**changes)


def test_save_and_load(blobs, tmp_path):
    rows, labels = blobs
    model = train(rows, labels, LearnerHyper(epochs=3), seed=3, feature_names=["x", "y"])
    path = save_model(model, tmp_path / "model.txt")
    loaded = load_model(path)
    assert np.array_equal(loaded.weights, model.weights)
    assert np.array_equal(loaded.biases, model.biases)
    assert np.array_equal(loaded.stats.mean, model.stats.mean)
    assert loaded.feature_names == ("x", "y")
    assert loaded.hyper == model.hyper
    assert np.array_equal(predict_many(loaded, rows), predict_many(model, rows))

    again = save_model(loaded, tmp_path / "again.txt")
    assert again.read_bytes() == path.read_bytes()


def test_load_rejects_foreign_files(tmp_path):
    path = tmp_path / "model.txt"
    path.write_text("format\tsomething-else\n", encoding="utf-8")
    with pytest.raises(ModelFormatError):
        load_model(path)


def test_load_rejects_truncated_weights(blobs, tmp_path):
    rows, labels = blobs
    path = save_model(train(rows, labels, LearnerHyper(epochs=1)), tmp_path / "model.txt")
    lines = path.read_text(encoding="utf-8").splitlines()
    lines[-1] = lines[-1].rsplit(" ", 1)[0]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(ModelFormatError):
        load_model(path)
