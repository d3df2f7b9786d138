"""
Módulo que define los volúmenes del dominio: imagen escalar, etiquetas por vóxel
y máscaras binarias, todos con espaciado físico en mm por eje (D, H, W).
"""

from dataclasses import dataclass, field

import numpy as np

from app.errors import DataValidationError, ShapeError

BACKGROUND = 0
IPSILATERAL = 1
CONTRALATERAL = 2
NUM_CLASSES = 3

Spacing = tuple[float, float, float]


def _check_spacing(spacing) -> Spacing:
    values = tuple(float(s) for s in spacing)
    if len(values) != 3 or any(not np.isfinite(s) or s <= 0 for s in values):
        raise DataValidationError(f"El espaciado debe tener 3 valores positivos, se recibió {spacing}.")
    return values


@dataclass
class VolumeGrid:
    """
    Imagen 3D (profundidad x alto x ancho) con espaciado en mm.

    Atributos:
        values: arreglo float64 con forma (D, H, W).
        spacing: tamaño del vóxel en mm por eje.
        affine: matriz 4x4 de orientación, se conserva pero no se interpreta.
    """
    values: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)
    affine: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or min(self.values.shape) < 1:
            raise ShapeError(f"Un volumen debe ser 3D con extensiones positivas, forma recibida {self.values.shape}.")
        self.spacing = _check_spacing(self.spacing)

    @property
    def extents(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def voxel_volume(self) -> float:
        sd, sh, sw = self.spacing
        return sd * sh * sw

    def to_dict(self) -> dict:
        return {"extents": list(self.extents), "spacing": list(self.spacing)}


@dataclass
class LabelVolume:
    """Clases por vóxel en {0=fondo, 1=ipsilateral, 2=contralateral}."""
    labels: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)
    affine: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 3 or min(labels.shape) < 1:
            raise ShapeError(f"Las etiquetas deben ser 3D, forma recibida {labels.shape}.")
        if labels.size and (labels.min() < 0 or labels.max() >= NUM_CLASSES):
            raise DataValidationError(
                f"Etiquetas fuera de rango [0, {NUM_CLASSES - 1}]: min={labels.min()}, max={labels.max()}."
            )
        self.labels = labels.astype(np.uint8)
        self.spacing = _check_spacing(self.spacing)

    @property
    def extents(self) -> tuple[int, int, int]:
        return self.labels.shape

    @property
    def voxel_volume(self) -> float:
        sd, sh, sw = self.spacing
        return sd * sh * sw

    def brain_mask(self) -> "BinaryMask":
        return BinaryMask(self.labels != BACKGROUND, self.spacing)

    def class_mask(self, label: int) -> "BinaryMask":
        return BinaryMask(self.labels == label, self.spacing)

    def counts(self) -> dict[int, int]:
        return {c: int((self.labels == c).sum()) for c in range(NUM_CLASSES)}

    def to_dict(self) -> dict:
        return {"extents": list(self.extents), "spacing": list(self.spacing), "counts": self.counts()}


@dataclass
class BinaryMask:
    """Máscara booleana con el espaciado de su volumen de origen."""
    mask: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.ndim != 3:
            raise ShapeError(f"Una máscara debe ser 3D, forma recibida {self.mask.shape}.")
        self.spacing = _check_spacing(self.spacing)

    @property
    def extents(self) -> tuple[int, int, int]:
        return self.mask.shape

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def is_empty(self) -> bool:
        return not self.mask.any()

    def __and__(self, other: "BinaryMask") -> "BinaryMask":
        return BinaryMask(self.mask & other.mask, self.spacing)


def check_same_extents(a, b, context: str):
    if a.extents != b.extents:
        raise ShapeError(f"{context}: extensiones distintas {a.extents} y {b.extents}.")
