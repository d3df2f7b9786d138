# app/services/DataService.py

from collections import defaultdict

import numpy as np
from flask import current_app

from app.errors import DataValidationError, ExtentError
from app.models.Dataset import DatasetItem, DatasetSplit
from app.models.Volume import CONTRALATERAL, IPSILATERAL, BinaryMask, LabelVolume, VolumeGrid


class DataService:
    """Preparación de datos: estandarización, regiones, partición y relleno."""

    def __init__(self):
        self.logger = current_app.logger

    @staticmethod
    def standardize(grid: VolumeGrid) -> VolumeGrid:
        """Media cero y varianza poblacional uno sobre todos los vóxeles del volumen."""
        values = grid.values
        mean = values.mean()
        std = values.std()
        if not np.isfinite(std) or std == 0.0:
            raise DataValidationError("No se puede estandarizar un volumen constante (varianza cero).")
        return VolumeGrid((values - mean) / std, grid.spacing, grid.affine)

    @staticmethod
    def derive_regions(brain_mask: BinaryMask, contra_mask: BinaryMask) -> LabelVolume:
        """Ipsilateral = cerebro menos hemisferio contralateral."""
        if brain_mask.extents != contra_mask.extents:
            raise DataValidationError(
                f"Máscaras con extensiones distintas: {brain_mask.extents} y {contra_mask.extents}."
            )
        outside = contra_mask.mask & ~brain_mask.mask
        if outside.any():
            raise DataValidationError(
                f"{int(outside.sum())} vóxel(es) contralaterales quedan fuera de la máscara del cerebro."
            )
        labels = np.zeros(brain_mask.extents, dtype=np.uint8)
        labels[brain_mask.mask] = IPSILATERAL
        labels[contra_mask.mask] = CONTRALATERAL
        return LabelVolume(labels, brain_mask.spacing)

    @staticmethod
    def required_padding(extents, multiple: int = 16) -> tuple[int, int, int]:
        return tuple(int((-e) % multiple) for e in extents)

    @staticmethod
    def pad_to_multiple(grid: VolumeGrid, multiple: int = 16, value: float | None = None) -> VolumeGrid:
        """
        Rellena al final de cada eje hasta un múltiplo de `multiple`. Por defecto
        usa el mínimo del volumen (fondo).
        """
        padding = DataService.required_padding(grid.extents, multiple)
        if not any(padding):
            return grid
        fill = float(grid.values.min()) if value is None else value
        padded = np.pad(grid.values, [(0, p) for p in padding], mode="constant", constant_values=fill)
        return VolumeGrid(padded, grid.spacing, grid.affine)

    @staticmethod
    def check_divisible(extents, multiple: int = 16):
        padding = DataService.required_padding(extents, multiple)
        if any(padding):
            raise ExtentError(
                f"Las extensiones {tuple(extents)} deben ser divisibles por {multiple}; "
                f"rellene con pad_to_multiple (relleno requerido por eje: {padding}).",
                padding=padding,
            )

    def split_dataset(self, items: list[DatasetItem], train_per_group: int, val_per_group: int,
                      seed: int = 0) -> DatasetSplit:
        """
        Por cada subgrupo toma `train_per_group` elementos para entrenamiento y
        `val_per_group` para validación; el resto va a prueba. Los elementos sham
        van siempre a prueba. Determinista en la semilla.
        """
        ids = [item.id for item in items]
        if len(set(ids)) != len(ids):
            raise DataValidationError("El conjunto de datos contiene ids duplicados.")

        groups: dict[str, list[DatasetItem]] = defaultdict(list)
        split = DatasetSplit()
        for item in items:
            if item.sham:
                split.test.append(item)
            else:
                groups[item.group].append(item)

        rng = np.random.default_rng(seed)
        for group in sorted(groups):
            members = sorted(groups[group], key=lambda it: it.id)
            needed = train_per_group + val_per_group
            if len(members) < needed:
                raise DataValidationError(
                    f"El grupo '{group}' tiene {len(members)} elementos; se necesitan al menos {needed}."
                )
            order = rng.permutation(len(members))
            shuffled = [members[i] for i in order]
            split.train.extend(shuffled[:train_per_group])
            split.val.extend(shuffled[train_per_group:needed])
            split.test.extend(shuffled[needed:])

        self.logger.info(
            f"[DATA] Partición: {len(split.train)} entrenamiento, {len(split.val)} validación, "
            f"{len(split.test)} prueba ({len(groups)} grupo(s))."
        )
        return split
