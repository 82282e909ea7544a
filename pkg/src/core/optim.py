"""Adam with L2 weight decay and a step-decay learning-rate schedule."""

import numpy as np

from core.config import OptimizerConfig


def step_learning_rate(cfg: OptimizerConfig, step: int) -> float:
    """Learning rate after ``step`` optimizer steps."""
    return cfg.learning_rate * cfg.gamma ** (step // cfg.step_size)


class Adam:
    """
    Adaptive-moment descent over a dict of named parameters.

    Weight decay is added to the gradient before the moment updates. Parameters
    are updated in place, in sorted name order.
    """

    def __init__(self, params: dict[str, np.ndarray], cfg: OptimizerConfig):
        self.cfg = cfg
        self.step_count = 0
        self._first = {name: np.zeros_like(v) for name, v in params.items()}
        self._second = {name: np.zeros_like(v) for name, v in params.items()}

    @property
    def learning_rate(self) -> float:
        return step_learning_rate(self.cfg, self.step_count)

    def step(
        self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]
    ) -> None:
        cfg = self.cfg
        lr = self.learning_rate
        self.step_count += 1
        t = self.step_count
        correction1 = 1.0 - cfg.beta1**t
        correction2 = 1.0 - cfg.beta2**t
        for name in sorted(params):
            grad = grads[name] + cfg.weight_decay * params[name]
            first = self._first[name]
            second = self._second[name]
            first *= cfg.beta1
            first += (1.0 - cfg.beta1) * grad
            second *= cfg.beta2
            second += (1.0 - cfg.beta2) * grad * grad
            update = (first / correction1) / (np.sqrt(second / correction2) + cfg.eps)
            params[name] -= (lr * update).astype(params[name].dtype)
