from __future__ import annotations

import numpy as np

from .params import ParameterSet


class MissingGradientError(RuntimeError):
    pass


class Optimizer:
    """SGD or Adam over a :class:`ParameterSet`, keyed by parameter name.

    ``step`` consumes the gradients currently stored on the parameters and
    clears them.
    """

    def __init__(self, kind: str, learning_rate: float, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        if kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {kind!r}")
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.kind = kind
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.first_moment: dict[str, np.ndarray] = {}
        self.second_moment: dict[str, np.ndarray] = {}

    def step(self, params: ParameterSet) -> ParameterSet:
        for name, p in params.items():
            if p.grad is None:
                raise MissingGradientError(f"parameter {name!r} has no gradient")
        self.step_count += 1
        if self.kind == "sgd":
            for p in params.values():
                p.data -= self.learning_rate * p.grad
        else:
            self._adam(params)
        params.zero_grad()
        return params

    def _adam(self, params: ParameterSet) -> None:
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in params.items():
            g = p.grad
            m = self.first_moment.get(name)
            if m is None:
                m = self.first_moment[name] = np.zeros_like(p.data)
                self.second_moment[name] = np.zeros_like(p.data)
            elif m.shape != p.shape:
                raise ValueError(f"moment shape {m.shape} does not match parameter {name!r} {p.shape}")
            v = self.second_moment[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + self.epsilon)


def sgd(learning_rate: float) -> Optimizer:
    return Optimizer("sgd", learning_rate)


def adam(learning_rate: float = 0.001, **kwargs) -> Optimizer:
    return Optimizer("adam", learning_rate, **kwargs)
