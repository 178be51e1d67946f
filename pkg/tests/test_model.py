import math

import numpy as np
import pytest

from data import Dataset
from errors import DimensionError, LabelKindError
from model import (
    Batch,
    LabelKind,
    LogisticShape,
    MlpShape,
    ModelParams,
    batch_loss,
    finite_difference_check,
    init_params,
    logistic_grad,
    logistic_loss,
    loss_and_grad,
    mlp_forward,
    mlp_loss_grad,
    predict,
    relative_error,
    softmax,
    top1_accuracy,
)
from verify import sample_logistic_point, sample_mlp_point


def binary_batch(features, labels):
    return Batch(np.asarray(features, dtype=float), np.asarray(labels), LabelKind.BINARY)


def class10_batch(features, labels):
    return Batch(np.asarray(features, dtype=float), np.asarray(labels), LabelKind.CLASS10)


# --- Inicialização ---


def test_logistic_init_is_zero():
    p = init_params(LogisticShape(54), seed=123)
    assert p.values.shape == (54,)
    assert not p.values.any()


def test_mlp_init_is_deterministic_and_biases_zero():
    a = init_params(MlpShape(), seed=1)
    b = init_params(MlpShape(), seed=1)
    assert np.array_equal(a.values, b.values)
    assert a.values.size == 32 * 784 + 32 + 10 * 32 + 10
    _, b1, _, b2 = a.unpack()
    assert not b1.any() and not b2.any()


def test_params_size_mismatch():
    with pytest.raises(DimensionError):
        ModelParams(np.zeros(3), LogisticShape(4))


def test_empty_batch_rejected():
    with pytest.raises(DimensionError):
        binary_batch(np.zeros((0, 3)), [])


# --- Logística ---


def test_logistic_loss_at_origin_is_ln2():
    b = binary_batch(np.random.default_rng(0).standard_normal((7, 5)), [1, -1, 1, 1, -1, 1, -1])
    p = init_params(LogisticShape(5), 0)
    assert logistic_loss(p, b, 0.0) == pytest.approx(math.log(2), abs=1e-12)
    assert logistic_loss(p, b, 0.01) == pytest.approx(math.log(2), abs=1e-12)


def test_logistic_loss_hand_value():
    p = ModelParams(np.array([math.log(3), 0.0, 0.0]), LogisticShape(3))
    b = binary_batch([[1.0, 0.0, 0.0]], [1])
    assert logistic_loss(p, b, 0.0) == pytest.approx(math.log(4 / 3), abs=1e-12)


def test_logistic_loss_large_margins_stay_finite():
    p = ModelParams(np.array([1e4]), LogisticShape(1))
    b = binary_batch([[1.0], [1.0]], [1, -1])
    assert logistic_loss(p, b, 0.0) == pytest.approx(1e4 / 2, rel=1e-12)


def test_logistic_grad_at_origin():
    phi = np.array([0.5, -2.0, 3.0])
    b = binary_batch([phi], [1])
    g = logistic_grad(init_params(LogisticShape(3), 0), b, 0.0)
    assert np.allclose(g, -phi / 2, atol=1e-15)


def test_logistic_grad_duplicated_sample():
    p = ModelParams(np.array([0.3, -0.1]), LogisticShape(2))
    one = binary_batch([[1.0, 2.0]], [-1])
    two = binary_batch([[1.0, 2.0], [1.0, 2.0]], [-1, -1])
    assert np.allclose(logistic_grad(p, one, 0.01), logistic_grad(p, two, 0.01), atol=1e-15)


def test_logistic_rejects_class10_labels():
    with pytest.raises(LabelKindError):
        logistic_loss(init_params(LogisticShape(2), 0), class10_batch([[1.0, 2.0]], [3]), 0.0)


# --- MLP ---


def test_mlp_zero_params_uniform():
    p = ModelParams(np.zeros(MlpShape().size), MlpShape())
    probs = mlp_forward(p, np.random.default_rng(1).random(784))
    assert np.allclose(probs, 0.1, atol=1e-15)


def test_mlp_forward_matches_direct_evaluation_at_zero_input():
    p = init_params(MlpShape(), 4)
    p = p.with_values(p.values + 0.1)  # vieses não nulos
    w1, b1, w2, b2 = p.unpack()
    logits = w2 @ np.maximum(b1, 0.0) + b2
    expected = np.exp(logits) / np.exp(logits).sum()
    assert np.allclose(mlp_forward(p, np.zeros(784)), expected, atol=1e-12)


def test_softmax_shift_invariance():
    logits = np.array([1.0, -2.0, 0.5, 3.0])
    assert np.allclose(softmax(logits), softmax(logits + 1000.0), atol=1e-15)


def test_mlp_forward_width_mismatch():
    with pytest.raises(DimensionError):
        mlp_forward(init_params(MlpShape(), 0), np.zeros(783))


def test_mlp_zero_params_loss_ln10():
    p = ModelParams(np.zeros(MlpShape().size), MlpShape())
    b = class10_batch(np.random.default_rng(2).random((5, 784)), [0, 3, 9, 1, 1])
    loss, _ = mlp_loss_grad(p, b)
    assert loss == pytest.approx(math.log(10), abs=1e-12)


def test_mlp_repeated_sample():
    p = init_params(MlpShape(inp=6, hidden=4), 9)
    x = np.random.default_rng(3).standard_normal(6)
    one = class10_batch([x], [2])
    three = class10_batch([x, x, x], [2, 2, 2])
    l1, g1 = mlp_loss_grad(p, one)
    l3, g3 = mlp_loss_grad(p, three)
    assert l1 == pytest.approx(l3, abs=1e-12)
    assert np.allclose(g1, g3, atol=1e-12)


def test_batch_loss_matches_loss_and_grad():
    rng = np.random.default_rng(11)
    p, b = sample_mlp_point(rng, MlpShape(inp=20, hidden=8), n=12)
    assert batch_loss(p, b, 0.0) == pytest.approx(loss_and_grad(p, b, 0.0)[0], abs=1e-12)


# --- Diferenças finitas ---


def test_finite_difference_logistic():
    rng = np.random.default_rng(21)
    for _ in range(10):
        p, b = sample_logistic_point(rng)
        assert finite_difference_check(p, b, 0.01, np.arange(54)) <= 1e-5


def test_finite_difference_mlp():
    rng = np.random.default_rng(22)
    for _ in range(5):
        p, b = sample_mlp_point(rng)
        coords = rng.choice(p.shape.size, size=50, replace=False)
        assert finite_difference_check(p, b, 0.0, coords) <= 1e-4


def test_relative_error_of_equal_vectors():
    v = np.array([1.0, 2.0])
    assert relative_error(v, v) == 0.0
    assert relative_error(np.zeros(2), np.zeros(2)) == 0.0


# --- Predição e acurácia ---


def test_logistic_predict_sign_zero_is_positive():
    p = init_params(LogisticShape(2), 0)
    assert np.array_equal(predict(p, np.array([[1.0, 2.0], [-3.0, 0.0]])), [1, 1])


def test_zero_mlp_accuracy_equals_class0_frequency():
    labels = np.array([0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9])
    ds = Dataset(np.random.default_rng(4).random((12, 784)), labels, LabelKind.CLASS10)
    p = ModelParams(np.zeros(MlpShape().size), MlpShape())
    assert top1_accuracy(p, ds) == pytest.approx(3 / 12)


def test_perfect_logistic_classifier():
    x = np.array([1.0, -1.0])
    features = np.array([[2.0, 0.0], [0.0, 2.0], [1.0, 3.0], [3.0, 1.0]])
    labels = np.where(features @ x >= 0, 1, -1)
    ds = Dataset(features, labels, LabelKind.BINARY)
    assert top1_accuracy(ModelParams(x, LogisticShape(2)), ds) == 1.0


def test_accuracy_label_kind_mismatch():
    ds = Dataset(np.zeros((2, 2)), np.array([1, -1]), LabelKind.BINARY)
    with pytest.raises(LabelKindError):
        top1_accuracy(ModelParams(np.zeros(MlpShape(inp=2).size), MlpShape(inp=2)), ds)
