import numpy as np
import pytest

from mechlearn import autodiff as ad
from mechlearn.autodiff import Tape, Tensor
from mechlearn.optim import Adam


def quadratic_step(w: Tensor, opt: Adam) -> float:
    with Tape() as tape:
        loss = ad.tsum(ad.multiply(w - 3.0, w - 3.0))
    opt.zero_grad()
    tape.backward(loss)
    opt.step()
    return loss.item()


def test_first_step_magnitude_is_lr():
    w = Tensor(np.array([10.0, -4.0]), requires_grad=True)
    opt = Adam([w], lr=0.05)
    quadratic_step(w, opt)
    np.testing.assert_allclose(np.abs(np.array([10.0, -4.0]) - w.data), 0.05, rtol=1e-6)


def test_zero_grad_clears_and_none_grads_are_skipped():
    w = Tensor(np.array([1.0]), requires_grad=True)
    opt = Adam([w], lr=0.1)
    w.grad = np.array([5.0])
    opt.zero_grad()
    assert w.grad is None
    before = w.data.copy()
    opt.step()
    np.testing.assert_array_equal(w.data, before)
    assert opt.t == 1


def test_converges_on_quadratic():
    w = Tensor(np.array([0.0]), requires_grad=True)
    opt = Adam([w], lr=0.05)
    for _ in range(500):
        quadratic_step(w, opt)
    assert abs(float(w.data[0]) - 3.0) < 1e-2


def test_restart_resets_moments_but_keeps_params():
    w = Tensor(np.array([0.0]), requires_grad=True)
    opt = Adam([w], lr=0.05)
    for _ in range(10):
        quadratic_step(w, opt)
    moved = w.data.copy()
    opt.restart()
    assert opt.t == 0
    assert all(np.all(m == 0) for m in opt.m)
    assert all(np.all(v == 0) for v in opt.v)
    np.testing.assert_array_equal(w.data, moved)
    # post-restart behaves like a fresh optimizer at the current point
    quadratic_step(w, opt)
    w2 = Tensor(moved.copy(), requires_grad=True)
    opt2 = Adam([w2], lr=0.05)
    quadratic_step(w2, opt2)
    np.testing.assert_array_equal(w.data, w2.data)


def test_deterministic_given_same_gradients():
    def run():
        w = Tensor(np.array([2.0, -1.0]), requires_grad=True)
        opt = Adam([w], lr=0.01)
        for _ in range(50):
            quadratic_step(w, opt)
        return w.data.copy()

    np.testing.assert_array_equal(run(), run())


def test_adam_matches_reference_recursion():
    """Two steps checked against the textbook update formulas."""
    w = Tensor(np.array([1.0]), requires_grad=True)
    opt = Adam([w], lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)

    x, m, v = 1.0, 0.0, 0.0
    for t in (1, 2):
        with Tape() as tape:
            loss = ad.tsum(ad.multiply(w, w))
        opt.zero_grad()
        tape.backward(loss)
        opt.step()

        g = 2.0 * x
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        mh = m / (1 - 0.9 ** t)
        vh = v / (1 - 0.999 ** t)
        x = x - 0.1 * mh / (np.sqrt(vh) + 1e-8)
        assert float(w.data[0]) == pytest.approx(x, rel=1e-12)
