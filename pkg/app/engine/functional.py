"""
Primitivas diferenciables sobre tensores 5D (N, C, D, H, W) y operaciones de pérdida.

Todas las reducciones siguen un orden fijo (bucles sobre los desplazamientos del
kernel en orden lexicográfico), por lo que dos ejecuciones con las mismas
entradas producen resultados idénticos bit a bit.
"""

from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from app.engine.ConvSpec import ConvSpec, as_triple
from app.engine.Tensor import Tensor
from app.errors import ShapeError

ACTIVATIONS = ("relu", "sigmoid", "softmax_channel")


def constant(array) -> Tensor:
    return Tensor(array, requires_grad=False)


def _require_5d(x: Tensor, op: str):
    if x.ndim != 5:
        raise ShapeError(f"{op} espera un tensor (N, C, D, H, W), forma recibida {x.shape}.")


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: formas incompatibles {a.shape} y {b.shape}.")


# ─────────────────────── Convoluciones ───────────────────────

def _window(padded: np.ndarray, offset: tuple[int, int, int], spec: ConvSpec, out_extent) -> tuple[slice, ...]:
    index = [slice(None), slice(None)]
    for k_off, dil, stride, n_out in zip(offset, spec.dilation, spec.stride, out_extent):
        start = k_off * dil
        index.append(slice(start, start + stride * (n_out - 1) + 1, stride))
    return tuple(index)


def conv3d(x: Tensor, weight: Tensor, bias: Tensor | None, spec: ConvSpec) -> Tensor:
    """Correlación cruzada 3D con dilatación, paso, relleno con ceros y grupos."""
    _require_5d(x, "conv3d")
    n, c, d, h, w = x.shape
    if c != spec.in_channels:
        raise ShapeError(f"conv3d: la entrada tiene {c} canales, la especificación espera {spec.in_channels}.")
    if weight.shape != spec.weight_shape:
        raise ShapeError(f"conv3d: pesos con forma {weight.shape}, se esperaba {spec.weight_shape}.")
    if bias is not None and bias.shape != (spec.out_channels,):
        raise ShapeError(f"conv3d: sesgo con forma {bias.shape}, se esperaba ({spec.out_channels},).")

    out_extent = spec.output_extent((d, h, w))
    g = spec.groups
    cg = c // g
    og = spec.out_channels // g
    positions = int(np.prod(out_extent))
    pd, ph, pw = spec.padding
    padded = np.pad(x.data, ((0, 0), (0, 0), (pd, pd), (ph, ph), (pw, pw)))
    kernel = weight.data.reshape(g, og, cg, *spec.kernel)
    offsets = list(product(*(range(k) for k in spec.kernel)))

    out = np.zeros((n, g, og, positions))
    for offset in offsets:
        patch = padded[_window(padded, offset, spec, out_extent)].reshape(n, g, cg, positions)
        out += np.matmul(kernel[(slice(None), slice(None), slice(None), *offset)][None], patch)
    out = out.reshape(n, spec.out_channels, *out_extent)
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1, 1)

    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward_fn(grad_out):
        grad = grad_out.reshape(n, g, og, positions)
        grad_padded = np.zeros_like(padded) if x.requires_grad else None
        grad_kernel = np.zeros_like(kernel) if weight.requires_grad else None
        for offset in offsets:
            window = _window(padded, offset, spec, out_extent)
            if grad_kernel is not None:
                patch = padded[window].reshape(n, g, cg, positions)
                grad_kernel[(slice(None), slice(None), slice(None), *offset)] = np.matmul(
                    grad, patch.transpose(0, 1, 3, 2)
                ).sum(axis=0)
            if grad_padded is not None:
                k_slice = kernel[(slice(None), slice(None), slice(None), *offset)]
                contrib = np.matmul(k_slice.transpose(0, 2, 1)[None], grad)
                grad_padded[window] += contrib.reshape(n, c, *out_extent)
        grad_x = None
        if grad_padded is not None:
            grad_x = grad_padded[:, :, pd:pd + d, ph:ph + h, pw:pw + w]
        grad_w = grad_kernel.reshape(spec.weight_shape) if grad_kernel is not None else None
        grads = [grad_x, grad_w]
        if bias is not None:
            grads.append(grad_out.sum(axis=(0, 2, 3, 4)))
        return grads

    return Tensor.from_op(out, "conv3d", inputs, backward_fn)


def depthwise_separable_conv3d(x: Tensor, dw_weight: Tensor, pw_weight: Tensor,
                               dw_bias: Tensor | None = None, pw_bias: Tensor | None = None,
                               kernel: int = 3, stride: int = 1, dilation: int = 1) -> Tensor:
    """Convolución espacial por canal seguida de la combinación de canales 1x1x1."""
    _require_5d(x, "depthwise_separable_conv3d")
    channels = x.shape[1]
    out_channels = pw_weight.shape[0]
    dw_spec = ConvSpec.same(channels, channels, kernel=kernel, dilation=dilation, stride=stride, groups=channels)
    pw_spec = ConvSpec(channels, out_channels, kernel=1)
    return conv3d(conv3d(x, dw_weight, dw_bias, dw_spec), pw_weight, pw_bias, pw_spec)


# ─────────────────────── Normalización ───────────────────────

@dataclass
class BatchNormState:
    """Estadísticas acumuladas por canal para el modo de evaluación."""
    running_mean: np.ndarray
    running_var: np.ndarray
    tracked_batches: int = 0

    @classmethod
    def fresh(cls, channels: int) -> "BatchNormState":
        return cls(np.zeros(channels), np.ones(channels))


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, training: bool,
               momentum: float = 0.1, epsilon: float = 1e-5) -> Tensor:
    """
    Normalización por lotes sobre (N, D, H, W) por canal.

    En entrenamiento usa las estadísticas del lote (varianza poblacional) y
    actualiza `state`; en evaluación usa las estadísticas acumuladas.
    """
    _require_5d(x, "batch_norm")
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError(f"batch_norm: gamma/beta {gamma.shape}/{beta.shape} no coinciden con C={channels}.")
    if state.running_mean.shape != (channels,):
        raise ShapeError(f"batch_norm: el estado tiene {state.running_mean.shape[0]} canales, la entrada {channels}.")
    if epsilon <= 0:
        raise ShapeError("batch_norm: epsilon debe ser positivo.")

    axes = (0, 2, 3, 4)
    bshape = (1, channels, 1, 1, 1)
    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        state.running_mean = (1.0 - momentum) * state.running_mean + momentum * mean
        state.running_var = (1.0 - momentum) * state.running_var + momentum * var
        state.tracked_batches += 1
    else:
        mean = state.running_mean
        var = state.running_var

    inv_std = 1.0 / np.sqrt(var + epsilon)
    x_hat = (x.data - mean.reshape(bshape)) * inv_std.reshape(bshape)
    out = x_hat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)
    count = x.size // channels

    def backward_fn(grad_out):
        grad_gamma = (grad_out * x_hat).sum(axis=axes)
        grad_beta = grad_out.sum(axis=axes)
        grad_xhat = grad_out * gamma.data.reshape(bshape)
        if training:
            grad_x = (inv_std.reshape(bshape) / count) * (
                count * grad_xhat
                - grad_xhat.sum(axis=axes).reshape(bshape)
                - x_hat * (grad_xhat * x_hat).sum(axis=axes).reshape(bshape)
            )
        else:
            grad_x = grad_xhat * inv_std.reshape(bshape)
        return [grad_x, grad_gamma, grad_beta]

    return Tensor.from_op(out, "batch_norm", (x, gamma, beta), backward_fn)


# ─────────────────────── Activaciones ───────────────────────

def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        mask = x.data > 0
        out = np.where(mask, x.data, 0.0)
        return Tensor.from_op(out, "relu", (x,), lambda g: [g * mask])
    if kind == "sigmoid":
        out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
        return Tensor.from_op(out, "sigmoid", (x,), lambda g: [g * out * (1.0 - out)])
    if kind == "softmax_channel":
        if x.ndim < 2:
            raise ShapeError(f"softmax_channel requiere un eje de canales, forma recibida {x.shape}.")
        shifted = x.data - x.data.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        out = exp / exp.sum(axis=1, keepdims=True)

        def backward_fn(g):
            return [out * (g - (g * out).sum(axis=1, keepdims=True))]

        return Tensor.from_op(out, "softmax_channel", (x,), backward_fn)
    raise ValueError(f"Activación desconocida '{kind}'. Opciones: {ACTIVATIONS}.")


def relu(x: Tensor) -> Tensor:
    return activation(x, "relu")


def sigmoid(x: Tensor) -> Tensor:
    return activation(x, "sigmoid")


def softmax_channel(x: Tensor) -> Tensor:
    return activation(x, "softmax_channel")


# ─────────────────────── Remuestreo y pooling ───────────────────────

def interpolation_matrix(n_in: int, factor: int) -> np.ndarray:
    """
    Pesos lineales con la convención de centros de medio píxel:
    coordenada de origen = (i + 0.5) / factor - 0.5, recortada a [0, n_in - 1].
    """
    n_out = n_in * factor
    matrix = np.zeros((n_out, n_in))
    for i in range(n_out):
        src = min(max((i + 0.5) / factor - 0.5, 0.0), n_in - 1.0)
        lo = int(np.floor(src))
        hi = min(lo + 1, n_in - 1)
        frac = src - lo
        matrix[i, lo] += 1.0 - frac
        matrix[i, hi] += frac
    return matrix


def _apply_along(array: np.ndarray, matrix: np.ndarray, axis: int) -> np.ndarray:
    moved = np.moveaxis(array, axis, -1)
    return np.moveaxis(moved @ matrix.T, -1, axis)


def trilinear_upsample(x: Tensor, factor: int | Sequence[int]) -> Tensor:
    _require_5d(x, "trilinear_upsample")
    factors = as_triple(factor)
    if any(f < 1 for f in factors):
        raise ShapeError(f"Los factores de escalado deben ser >= 1, se recibió {factors}.")
    matrices = {
        axis: interpolation_matrix(x.shape[axis], f)
        for axis, f in zip((2, 3, 4), factors) if f != 1
    }
    out = x.data
    for axis, matrix in matrices.items():
        out = _apply_along(out, matrix, axis)

    def backward_fn(g):
        for axis, matrix in reversed(matrices.items()):
            g = _apply_along(g, matrix.T, axis)
        return [g]

    return Tensor.from_op(np.ascontiguousarray(out), "trilinear_upsample", (x,), backward_fn)


def global_avg_pool(x: Tensor) -> Tensor:
    _require_5d(x, "global_avg_pool")
    voxels = x.shape[2] * x.shape[3] * x.shape[4]
    out = x.data.mean(axis=(2, 3, 4), keepdims=True)
    return Tensor.from_op(out, "global_avg_pool", (x,),
                          lambda g: [np.broadcast_to(g / voxels, x.shape).copy()])


def channel_mean(x: Tensor) -> Tensor:
    """Promedio sobre el eje de canales: (N, C, ...) -> (N, 1, ...)."""
    channels = x.shape[1]
    out = x.data.mean(axis=1, keepdims=True)
    return Tensor.from_op(out, "channel_mean", (x,),
                          lambda g: [np.broadcast_to(g / channels, x.shape).copy()])


def expand_channels(x: Tensor, channels: int) -> Tensor:
    """Replica un mapa (N, 1, ...) sobre `channels` canales."""
    if x.shape[1] != 1:
        raise ShapeError(f"expand_channels espera un único canal, forma recibida {x.shape}.")
    out = np.repeat(x.data, channels, axis=1)
    return Tensor.from_op(out, "expand_channels", (x,), lambda g: [g.sum(axis=1, keepdims=True)])


# ─────────────────────── Combinación ───────────────────────

def concat_channels(inputs: Sequence[Tensor]) -> Tensor:
    if not inputs:
        raise ShapeError("concat_channels necesita al menos un tensor.")
    reference = inputs[0].shape
    for t in inputs[1:]:
        if t.ndim != len(reference) or t.shape[0] != reference[0] or t.shape[2:] != reference[2:]:
            raise ShapeError(f"concat_channels: formas incompatibles {reference} y {t.shape}.")
    out = np.concatenate([t.data for t in inputs], axis=1)
    bounds = np.cumsum([t.shape[1] for t in inputs])[:-1]
    return Tensor.from_op(out, "concat_channels", tuple(inputs),
                          lambda g: list(np.split(g, bounds, axis=1)))


def elementwise_add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "elementwise_add")
    return Tensor.from_op(a.data + b.data, "add", (a, b), lambda g: [g, g])


def elementwise_sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "elementwise_sub")
    return Tensor.from_op(a.data - b.data, "sub", (a, b), lambda g: [g, -g])


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "elementwise_mul")
    return Tensor.from_op(a.data * b.data, "mul", (a, b), lambda g: [g * b.data, g * a.data])


def elementwise_div(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "elementwise_div")
    out = a.data / b.data
    return Tensor.from_op(out, "div", (a, b), lambda g: [g / b.data, -g * out / b.data])


# ─────────────────────── Primitivas de pérdida ───────────────────────

def square(x: Tensor) -> Tensor:
    return Tensor.from_op(x.data * x.data, "square", (x,), lambda g: [2.0 * g * x.data])


def log(x: Tensor) -> Tensor:
    return Tensor.from_op(np.log(x.data), "log", (x,), lambda g: [g / x.data])


def clamp_min(x: Tensor, floor: float) -> Tensor:
    """max(x, floor); el gradiente no atraviesa los valores recortados."""
    keep = x.data > floor
    out = np.where(keep, x.data, floor)
    return Tensor.from_op(out, "clamp_min", (x,), lambda g: [g * keep])


def scale(x: Tensor, factor: float) -> Tensor:
    return Tensor.from_op(x.data * factor, "scale", (x,), lambda g: [g * factor])


def add_scalar(x: Tensor, value: float) -> Tensor:
    return Tensor.from_op(x.data + value, "add_scalar", (x,), lambda g: [g])


def reduce_sum(x: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    """Suma sobre `axes` (todas si es None); el resultado conserva los ejes restantes."""
    out = x.data.sum(axis=axes)
    if axes is None:
        out = np.asarray(out).reshape(1)
    keep_shape = tuple(1 if (axes is None or i in axes) else n for i, n in enumerate(x.shape))

    def backward_fn(g):
        return [np.broadcast_to(g.reshape(keep_shape), x.shape).copy()]

    return Tensor.from_op(out, "reduce_sum", (x,), backward_fn)
