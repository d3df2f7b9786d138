"""
Tensor denso con diferenciación automática en modo reverso.

Cada operación registra un nodo (entradas + regla de retropropagación) en el
tensor que produce; `Graph.trace` recupera el orden topológico a partir de la
pérdida y `backward` lo recorre una sola vez en orden inverso.
"""

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from app.errors import ShapeError

_grad_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad():
    """Desactiva el registro del grafo en el hilo actual (inferencia)."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


class Operation:
    """Nodo del grafo: una operación registrada con sus entradas y su regla inversa."""

    __slots__ = ("name", "inputs", "backward_fn")

    def __init__(self, name: str, inputs: Sequence["Tensor"], backward_fn: Callable):
        self.name = name
        self.inputs = tuple(inputs)
        self.backward_fn = backward_fn

    def __repr__(self):
        return f"<Operation {self.name}>"


class Tensor:
    """
    Arreglo N-dimensional de float64 con un espacio opcional para el gradiente.

    Los datos son de solo lectura tras la creación; las operaciones devuelven
    tensores nuevos. Solo `grad` se modifica durante la retropropagación.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, copy: bool = True):
        array = np.array(data, dtype=np.float64, copy=True) if copy else np.asarray(data, dtype=np.float64)
        if array.ndim == 0:
            array = array.reshape(1)
        array.flags.writeable = False
        self.data = array
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.op: Operation | None = None
        self.name = name

    @classmethod
    def from_op(cls, data: np.ndarray, name: str, inputs: Sequence["Tensor"], backward_fn: Callable) -> "Tensor":
        out = cls(data, copy=False)
        if is_grad_enabled() and any(t.requires_grad for t in inputs):
            out.requires_grad = True
            out.op = Operation(name, inputs, backward_fn)
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() requiere un tensor escalar, forma recibida {self.shape}.")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def __repr__(self):
        label = f" '{self.name}'" if self.name else ""
        return f"<Tensor{label} shape={self.shape} requires_grad={self.requires_grad}>"


class Graph:
    """Lista ordenada topológicamente de las operaciones que llevan a una salida."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @property
    def operations(self) -> list[Operation]:
        return [node.op for node in self.nodes]

    @classmethod
    def trace(cls, output: Tensor) -> "Graph":
        # DFS iterativo: las redes profundas superan el límite de recursión
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited or node.op is None:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in reversed(node.op.inputs):
                if parent.op is not None and id(parent) not in visited:
                    stack.append((parent, False))
        return cls(order)

    def backward(self, loss: Tensor, parameters: Iterable[Tensor] | None = None):
        if loss.size != 1:
            raise ShapeError(f"backward requiere una pérdida escalar, forma recibida {loss.shape}.")

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            upstream = grads.pop(id(node), None)
            if upstream is None:
                continue
            input_grads = node.op.backward_fn(upstream)
            for parent, grad in zip(node.op.inputs, input_grads):
                if grad is None or not parent.requires_grad:
                    continue
                if grad.shape != parent.shape:
                    raise ShapeError(
                        f"La regla inversa de '{node.op.name}' devolvió forma {grad.shape}, se esperaba {parent.shape}."
                    )
                if parent.op is None:
                    parent.grad = grad.copy() if parent.grad is None else parent.grad + grad
                else:
                    key = id(parent)
                    grads[key] = grad if key not in grads else grads[key] + grad

        if loss.op is None and loss.requires_grad:
            loss.grad = np.ones_like(loss.data) if loss.grad is None else loss.grad + 1.0

        for param in parameters or ():
            if param.grad is None:
                param.grad = np.zeros_like(param.data)


def backward(loss: Tensor, parameters: Iterable[Tensor] | None = None, graph: Graph | None = None) -> Graph:
    """Retropropaga desde una pérdida escalar; los parámetros ajenos reciben gradiente cero."""
    graph = graph or Graph.trace(loss)
    graph.backward(loss, parameters)
    return graph
