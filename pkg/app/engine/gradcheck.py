"""
Verificación de gradientes por diferencias finitas centrales.
"""

from typing import Callable, Sequence

import numpy as np

from app.engine.Tensor import Tensor, backward, no_grad


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, step: float = 1e-5,
                       indices: Sequence[int] | None = None) -> np.ndarray:
    """
    Gradiente de fn() respecto de `tensor` por diferencias centrales.

    Con `indices` solo se perturban esas posiciones (índices planos); el resto
    del resultado queda en cero.
    """
    original = tensor.data
    flat = original.reshape(-1)
    positions = range(flat.size) if indices is None else indices
    grad = np.zeros(flat.size)
    try:
        for i in positions:
            for sign in (1.0, -1.0):
                perturbed = flat.copy()
                perturbed[i] += sign * step
                perturbed = perturbed.reshape(original.shape)
                perturbed.flags.writeable = False
                tensor.data = perturbed
                with no_grad():
                    value = fn().item()
                grad[i] += sign * value
            grad[i] /= 2.0 * step
    finally:
        tensor.data = original
    return grad.reshape(original.shape)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 0.0) -> float:
    """Error relativo en norma: ||a - n|| / max(||a||, ||n||, floor)."""
    norm = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    if norm == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / norm)


def gradcheck(fn: Callable[[], Tensor], tensors: Sequence[Tensor], step: float = 1e-5,
              fraction: float | None = None, seed: int = 0, max_samples: int | None = None,
              floor: float = 0.0) -> float:
    """
    Compara el gradiente analítico con el numérico para cada tensor y devuelve
    el peor error relativo. `fraction` muestrea ese porcentaje de posiciones,
    como mucho `max_samples` por tensor. `floor` acota el denominador para
    tensores de gradiente nulo (p. ej. sesgos seguidos de batch-norm).
    """
    for t in tensors:
        t.grad = None
    backward(fn(), parameters=tensors)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in tensors:
        analytic = t.grad.reshape(-1)
        if fraction is None:
            indices = None
            selected = np.arange(t.size)
        else:
            count = max(1, int(round(fraction * t.size)))
            if max_samples is not None:
                count = min(count, max_samples)
            selected = np.sort(rng.choice(t.size, size=count, replace=False))
            indices = selected
        numeric = numerical_gradient(fn, t, step, indices).reshape(-1)
        worst = max(worst, relative_error(analytic[selected], numeric[selected], floor))
    return worst
