"""Central finite-difference gradient oracle, independent of the engine.

For a function f(arrays) -> float the numeric gradient perturbs every entry
by +/- h and takes the centered quotient. Engine gradients are compared
entrywise with relative error |a - n| / max(|a|, |n|); entries where both
magnitudes are below ``tiny`` are exempt.
"""

from __future__ import annotations

import numpy as np

from tabgate.autodiff import Tensor, mul, sum_

H = 1e-5
REL_TOL = 1e-4
TINY = 1e-8


def numeric_gradient(f, arrays: list[np.ndarray], h: float = H) -> list[np.ndarray]:
    grads = []
    for k, arr in enumerate(arrays):
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + h
            up = f(arrays)
            flat[i] = saved - h
            down = f(arrays)
            flat[i] = saved
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    err = 0.0
    for a, n in zip(analytic.reshape(-1), numeric.reshape(-1)):
        if abs(a) < TINY and abs(n) < TINY:
            continue
        err = max(err, abs(a - n) / max(abs(a), abs(n)))
    return err


def check_op(op, arrays: list[np.ndarray], rng: np.random.Generator) -> float:
    """Compare engine grads of sum(op(x) * W) against finite differences.

    Returns the worst relative error across all inputs.
    """
    probe = op([Tensor(a) for a in arrays])
    weights = rng.standard_normal(probe.data.shape)

    def scalar(xs: list[np.ndarray]) -> float:
        return float((op([Tensor(a) for a in xs]).data * weights).sum())

    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = sum_(mul(op(tensors), Tensor(weights)))
    loss.backward()
    numeric = numeric_gradient(scalar, [a.copy() for a in arrays])
    return max(
        max_relative_error(t.grad, n) for t, n in zip(tensors, numeric)
    )
