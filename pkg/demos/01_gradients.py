"""Reverse-mode gradients on the built-in tape, checked against finite differences.

Everything downstream (auction networks, misreport ascent, the training
loop) runs on this tape, so it is worth seeing it do something small
first: differentiate a two-layer scalar function and confirm the result
numerically.
"""

import numpy as np

from mechlearn import Tape, Tensor
from mechlearn import autodiff as ad


def f(w: Tensor, x: Tensor) -> Tensor:
    # scalar: sum(sigmoid(x W) * tanh(x W))
    h = ad.matmul(x, w)
    return ad.tsum(ad.multiply(ad.sigmoid(h), ad.tanh(h)))


def main():
    rng = np.random.default_rng(7)
    w = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    x = Tensor(rng.normal(size=(5, 4)))

    with Tape() as tape:
        loss = f(w, x)
        tape.backward(loss)
    analytic = w.grad.copy()

    # central differences, one coordinate at a time
    eps = 1e-6
    numeric = np.zeros_like(w.data)
    for idx in np.ndindex(w.data.shape):
        w.data[idx] += eps
        hi = f(w, x).item()
        w.data[idx] -= 2 * eps
        lo = f(w, x).item()
        w.data[idx] += eps
        numeric[idx] = (hi - lo) / (2 * eps)

    err = np.max(np.abs(analytic - numeric) / (np.abs(numeric) + 1e-12))
    print(f"loss value           {loss.item():.6f}")
    print(f"max relative error   {err:.3e}")
    assert err < 1e-6

    # leaf gradients accumulate across backward calls until reset,
    # the same contract an optimizer's zero_grad relies on
    with Tape() as tape:
        loss = f(w, x)
        tape.backward(loss)
    assert np.allclose(w.grad, 2 * analytic)
    w.grad = None
    with Tape() as tape:
        loss = f(w, x)
        tape.backward(loss)
    assert np.allclose(w.grad, analytic)
    print("grads accumulate until cleared, then a second pass matches the first")


if __name__ == "__main__":
    main()
