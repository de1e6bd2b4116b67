"""Adam over named immutable tensors."""

from typing import Mapping

import numpy as np

from config import DEFAULT_ADAM_BETAS, DEFAULT_ADAM_EPS, DEFAULT_LEARNING_RATE
from pemi.errors import ConfigError
from pemi.numcore import GradientTable, Tensor


class Adam:
    """
    Adam without weight decay or schedule.

    Moments are float64 arrays keyed by parameter name. step() returns new
    tensors instead of mutating the inputs.
    """

    def __init__(
        self,
        lr: float = DEFAULT_LEARNING_RATE,
        betas: tuple[float, float] = DEFAULT_ADAM_BETAS,
        eps: float = DEFAULT_ADAM_EPS,
    ) -> None:
        if not lr > 0:
            raise ConfigError(f"learning rate must be > 0, got {lr}")
        if not all(0 <= beta < 1 for beta in betas):
            raise ConfigError(f"betas must be in [0, 1), got {betas}")
        if not eps > 0:
            raise ConfigError(f"eps must be > 0, got {eps}")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: Mapping[str, Tensor], grads: GradientTable) -> dict[str, Tensor]:
        """
        Take one update of every parameter.

        A parameter absent from ``grads`` is treated as having a zero
        gradient. Optimizer state is only committed once every new tensor has
        been built, so a failing step leaves it untouched.
        """
        t = self.t + 1
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        step_size = self.lr / bc1

        moments: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        updated: dict[str, Tensor] = {}
        for name, param in params.items():
            g = np.asarray(grads.get(name, np.zeros(param.shape)), dtype=np.float64)
            m = self.m.get(name, np.zeros(param.shape)) * self.beta1 + (1.0 - self.beta1) * g
            v = self.v.get(name, np.zeros(param.shape)) * self.beta2 + (1.0 - self.beta2) * (g * g)
            denom = np.sqrt(v / bc2) + self.eps
            values = param.data.astype(np.float64) - step_size * m / denom
            updated[name] = Tensor(values, requires_grad=True, name=name, dtype=param.dtype)
            moments[name] = (m, v)

        for name, (m, v) in moments.items():
            self.m[name] = m
            self.v[name] = v
        self.t = t
        return updated
