# app/services/OptimizerService.py

from dataclasses import dataclass, field

import numpy as np

from app.engine import Tensor
from app.errors import NonFiniteGradientError, ShapeError
from app.mapping.network_schema import TrainConfig


@dataclass
class AdamState:
    """Momentos por parámetro y contador de pasos."""
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


class OptimizerService:

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg

    def adam_step(self, params: dict[str, Tensor], grads: dict[str, np.ndarray],
                  state: AdamState) -> tuple[dict[str, Tensor], AdamState]:
        """
        Paso de Adam con corrección de sesgo. Devuelve tensores nuevos; los
        originales no se modifican. Un gradiente no finito aborta el paso sin
        tocar el estado.
        """
        for name, param in params.items():
            grad = grads[name]
            if grad.shape != param.shape:
                raise ShapeError(f"Gradiente de '{name}' con forma {grad.shape}, se esperaba {param.shape}.")
            if not np.all(np.isfinite(grad)):
                raise NonFiniteGradientError(name)

        cfg = self.cfg
        t = state.t + 1
        correction1 = 1.0 - cfg.beta1 ** t
        correction2 = 1.0 - cfg.beta2 ** t
        new_m, new_v, updated = {}, {}, {}
        for name, param in params.items():
            grad = grads[name]
            m = cfg.beta1 * state.m.get(name, np.zeros_like(grad)) + (1.0 - cfg.beta1) * grad
            v = cfg.beta2 * state.v.get(name, np.zeros_like(grad)) + (1.0 - cfg.beta2) * grad * grad
            step = cfg.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + cfg.epsilon)
            updated[name] = Tensor(param.data - step, requires_grad=param.requires_grad, name=param.name)
            new_m[name] = m
            new_v[name] = v
        return updated, AdamState(new_m, new_v, t)
