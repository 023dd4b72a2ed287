import numpy as np
import pytest

from seqlab.autodiff import OPTIMIZERS, Optimizer, TrainingError, clip_grad_norm, parameter

W0 = np.array([0.5, -1.0, 2.0])
G = np.array([0.2, -3.0, 0.0])


def one_step(kind, **hyper):
    w = parameter(W0.copy())
    w.grad = G.copy()
    Optimizer({"w": w}, kind, 0.1, **hyper).step()
    return w.data


# first-step updates worked out by hand from each rule's definition
def test_first_step_closed_forms():
    lr = 0.1
    np.testing.assert_allclose(one_step("sgd"), W0 - lr * G)
    np.testing.assert_allclose(one_step("adagrad"), W0 - lr * G / (np.abs(G) + 1e-10))
    sq = 0.01 * G ** 2
    np.testing.assert_allclose(one_step("rmsprop"), W0 - lr * G / (np.sqrt(sq) + 1e-8))
    sq = 0.1 * G ** 2
    np.testing.assert_allclose(one_step("adadelta"), W0 - lr * np.sqrt(1e-6) / np.sqrt(sq + 1e-6) * G)
    adam = W0 - lr * G / (np.abs(G) + 1e-8)
    np.testing.assert_allclose(one_step("adam"), adam)
    np.testing.assert_allclose(one_step("adamw"), adam - lr * 0.01 * W0)


def test_sgd_momentum_and_coupled_weight_decay():
    w = parameter(W0.copy())
    opt = Optimizer({"w": w}, "sgd", 0.1, momentum=0.9, weight_decay=0.5)
    w.grad = G.copy()
    opt.step()
    g1 = G + 0.5 * W0
    w1 = W0 - 0.1 * g1
    np.testing.assert_allclose(w.data, w1)
    w.grad = G.copy()
    opt.step()
    g2 = G + 0.5 * w1
    np.testing.assert_allclose(w.data, w1 - 0.1 * (0.9 * g1 + g2))


def test_adam_bias_correction_two_steps():
    w = parameter(W0.copy())
    opt = Optimizer({"w": w}, "adam", 0.01)
    grads = [G, -0.5 * G + 0.1]
    m = v = np.zeros(3)
    ref = W0.copy()
    for t, g in enumerate(grads, start=1):
        w.grad = g.copy()
        opt.step()
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(w.data, ref)


@pytest.mark.parametrize("kind", OPTIMIZERS)
def test_every_optimizer_descends_a_quadratic(kind):
    target = np.array([1.0, -2.0])
    w = parameter(np.zeros(2))
    lr = {"sgd": 0.1, "adadelta": 1.0, "adagrad": 0.5}.get(kind, 0.05)
    opt = Optimizer({"w": w}, kind, lr)
    start = float(((w.data - target) ** 2).sum())
    # adadelta's first steps are ~sqrt(eps) long, so it needs a longer horizon
    for _ in range(3000 if kind == "adadelta" else 200):
        opt.zero_grad()
        ((w - target) * (w - target)).sum().backward()
        opt.step()
    assert float(((w.data - target) ** 2).sum()) < 0.05 * start


def test_non_finite_gradient_names_parameter():
    w = parameter(np.zeros(2))
    w.grad = np.array([np.nan, 0.0])
    with pytest.raises(TrainingError, match="encoder.w"):
        Optimizer({"encoder.w": w}, "adam").step()


def test_clip_grad_norm_scales_to_max_and_reports_original():
    a, b = parameter(np.zeros(2)), parameter(np.zeros(1))
    a.grad, b.grad = np.array([3.0, 0.0]), np.array([4.0])
    norm = clip_grad_norm({"a": a, "b": b}, 1.0)
    assert norm == pytest.approx(5.0)
    total = np.sqrt((a.grad ** 2).sum() + (b.grad ** 2).sum())
    assert total == pytest.approx(1.0)
    np.testing.assert_allclose(a.grad, [0.6, 0.0])
    a.grad = np.array([0.1, 0.0])
    b.grad = np.array([0.0])
    clip_grad_norm({"a": a, "b": b}, 1.0)
    np.testing.assert_allclose(a.grad, [0.1, 0.0])


def test_unknown_optimizer_rejected():
    with pytest.raises(ValueError, match="unknown optimizer"):
        Optimizer({}, "lbfgs")
