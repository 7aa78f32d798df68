"""AdamW with cosine learning-rate decay."""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from fwformer.errors import ContractError, FormatError
from fwformer.tensor import FloatArray, Tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CosineSchedule:
    """Cosine decay from ``base_lr`` to ``min_lr`` over ``total_steps``."""

    base_lr: float
    total_steps: int
    min_lr: float = 0.0

    def lr_at(self, step: int) -> float:
        if self.total_steps <= 1:
            return self.base_lr
        progress = min(step, self.total_steps - 1) / (self.total_steps - 1)
        cosine = 0.5 * (1.0 + math.cos(math.pi * progress))
        return self.min_lr + (self.base_lr - self.min_lr) * cosine


class AdamW:
    """Adam with decoupled weight decay.

    Decay applies to matrices and kernels only (``ndim >= 2``); norms, biases
    and the basis coefficients are not decayed.
    """

    def __init__(
        self,
        params: Sequence[tuple[str, Tensor]],
        lr: float = 5e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
        schedule: CosineSchedule | None = None,
    ) -> None:
        if lr < 0 or weight_decay < 0 or eps <= 0:
            raise ContractError("lr and weight_decay must be >= 0, eps > 0")
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.schedule = schedule
        self.step_count = 0
        self._m: dict[str, FloatArray] = {}
        self._v: dict[str, FloatArray] = {}
        for name, p in self.params:
            self._m[name] = np.zeros(p.shape)
            self._v[name] = np.zeros(p.shape)

    def current_lr(self) -> float:
        if self.schedule is None:
            return self.lr
        return self.schedule.lr_at(self.step_count)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.zero_grad()

    def step(self) -> float:
        """Apply one update from the accumulated grads; returns the lr used."""
        lr = self.current_lr()
        self.step_count += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1**self.step_count
        c2 = 1.0 - b2**self.step_count
        for name, p in self.params:
            if p.grad is None:
                continue
            g = p.grad
            self._m[name] = b1 * self._m[name] + (1.0 - b1) * g
            self._v[name] = b2 * self._v[name] + (1.0 - b2) * g * g
            data = p.data
            if p.ndim >= 2 and self.weight_decay:
                data = data - lr * self.weight_decay * data
            update = (self._m[name] / c1) / (np.sqrt(self._v[name] / c2) + self.eps)
            p.assign(data - lr * update)
        return lr

    def state_tensors(self) -> dict[str, Tensor]:
        state = {"optim/step": Tensor(float(self.step_count))}
        for name, _ in self.params:
            state[f"optim/m/{name}"] = Tensor(self._m[name])
            state[f"optim/v/{name}"] = Tensor(self._v[name])
        return state

    def load_state_tensors(self, state: dict[str, Tensor]) -> None:
        if "optim/step" not in state:
            raise FormatError("checkpoint has no optimizer state", 0)
        self.step_count = int(state["optim/step"].item())
        for name, p in self.params:
            slots = ((f"optim/m/{name}", self._m), (f"optim/v/{name}", self._v))
            for key, slot in slots:
                if key not in state or state[key].shape != p.shape:
                    raise FormatError(f"optimizer state {key} missing or misshapen", 0)
                slot[name] = state[key].data.copy()
        logger.debug("restored optimizer at step %d", self.step_count)
