"""Central finite-difference verification of every differentiable op."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor

Builder = Callable[[np.random.Generator], tuple[list[np.ndarray], Callable[..., Tensor]]]


class GradientCheckError(AssertionError):
    def __init__(self, message: str, report: dict[str, float]):
        super().__init__(message)
        self.report = report


def _dims(rng, low=1, high=5, n=2):
    return tuple(int(d) for d in rng.integers(low, high + 1, size=n))


def _matmul(rng):
    m, k, n = _dims(rng, n=3)
    return [rng.normal(size=(m, k)), rng.normal(size=(k, n))], T.matmul


def _add(rng):
    m, n = _dims(rng)
    # second operand is a broadcast row, as biases are
    return [rng.normal(size=(m, n)), rng.normal(size=(n,))], T.add


def _multiply(rng):
    shape = _dims(rng)
    return [rng.normal(size=shape), rng.normal(size=shape)], T.mul


def _concat(rng):
    m, a, b = _dims(rng, n=3)
    return [rng.normal(size=(m, a)), rng.normal(size=(m, b))], lambda x, y: T.concat([x, y], axis=1)


def _tanh(rng):
    return [rng.normal(size=_dims(rng))], T.tanh


def _sigmoid(rng):
    return [rng.normal(scale=2.0, size=_dims(rng))], T.sigmoid


def _mean(rng):
    axis = int(rng.integers(0, 2))
    return [rng.normal(size=_dims(rng))], lambda x: T.mean(x, axis=axis)


def _squared_distance(rng):
    n, k, d = _dims(rng, n=3)
    return [rng.normal(size=(n, d)), rng.normal(size=(k, d))], T.squared_distances


def _cross_entropy(rng):
    n, k = _dims(rng, low=2, high=6)
    targets = rng.integers(0, k, size=n)
    return [rng.normal(scale=2.0, size=(n, k))], lambda z: T.softmax_cross_entropy(z, targets)


def _lstm_cell(rng):
    b, e, h = _dims(rng, n=3)
    mask = (rng.random(b) < 0.7).astype(float)
    mask[0] = 1.0
    arrays = [
        rng.normal(size=(b, e)),
        rng.normal(scale=0.5, size=(b, 2 * h)),
        rng.normal(scale=0.5, size=(e + h, 4 * h)),
        rng.normal(scale=0.5, size=(4 * h,)),
    ]
    return arrays, lambda x, s, w, bias: T.lstm_cell(x, s, w, bias, mask)


CATALOGUE: dict[str, Builder] = {
    "matmul": _matmul,
    "add": _add,
    "multiply": _multiply,
    "concat": _concat,
    "tanh": _tanh,
    "sigmoid": _sigmoid,
    "mean": _mean,
    "squared_distance": _squared_distance,
    "softmax_cross_entropy": _cross_entropy,
    "lstm_cell": _lstm_cell,
}


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    num = np.linalg.norm(analytic - numeric)
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return float(num / den)


def check_function(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray],
                   rng: np.random.Generator, h: float = 1e-5) -> float:
    """Max relative error of ``fn``'s input gradients against central differences.

    Non-scalar outputs are contracted with a fixed random weight so the full
    Jacobian is exercised.
    """
    inputs = [Tensor(a, requires_grad=True) for a in arrays]
    out = fn(*inputs)
    weight = rng.normal(size=out.shape) if out.size != 1 else np.ones(out.shape)

    def scalar(values: Sequence[np.ndarray]) -> float:
        with T.no_grad():
            return float((fn(*[Tensor._wrap(v) for v in values]).data * weight).sum())

    loss = T.tensor_sum(T.mul(out, weight))
    T.backward(loss)

    worst = 0.0
    values = [np.array(a, dtype=float) for a in arrays]
    for idx, t in enumerate(inputs):
        numeric = np.zeros_like(values[idx])
        flat = values[idx].reshape(-1)
        num_flat = numeric.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = scalar(values)
            flat[j] = orig - h
            down = scalar(values)
            flat[j] = orig
            num_flat[j] = (up - down) / (2.0 * h)
        analytic = t.grad if t.grad is not None else np.zeros_like(numeric)
        worst = max(worst, relative_error(analytic, numeric))
    return worst


def gradient_check(seed: int = 0, trials: int = 5, h: float = 1e-5,
                   tolerance: float = 1e-6, ops: Sequence[str] | None = None) -> dict[str, float]:
    """Run the op catalogue; return the max relative error per op.

    Raises :class:`GradientCheckError` naming every op whose error reaches
    ``tolerance``.
    """
    rng = np.random.default_rng(seed)
    report: dict[str, float] = {}
    for name in ops or CATALOGUE:
        builder = CATALOGUE[name]
        worst = 0.0
        for _ in range(trials):
            arrays, fn = builder(rng)
            worst = max(worst, check_function(fn, arrays, rng, h))
        report[name] = worst
    failed = {k: v for k, v in report.items() if not v < tolerance}
    if failed:
        detail = ", ".join(f"{k}={v:.3e}" for k, v in failed.items())
        raise GradientCheckError(f"gradient check failed: {detail}", report)
    return report
